"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data/format errors
exit 2, numerical failures exit 3.
"""


class FormatError(ValueError):
    """A file does not conform to its declared format (.flo, PFM, PPM, JSON)."""


class InsufficientDataError(ValueError):
    """Not enough usable data: too few correspondences, empty masks, etc."""


class NumericalError(RuntimeError):
    """An iterative solver failed: no RANSAC consensus, stalled LM descent,
    non-convergent EM, or a non-finite training loss."""
