"""Numerical kernels with a compiled fast path and a numpy fallback.

The compiled extension is picked at import time when present; otherwise the
pure-numpy backend takes over with identical semantics.  ``BACKEND`` reports
which one is active.  `benchmarks/bench_kernels.py` compares the two.
"""

import numpy as np

try:
    from . import _native as _impl
except ImportError:
    from . import _numpy as _impl

BACKEND = _impl.BACKEND_NAME


def _grid(arr, name, channels=None):
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 3 or (channels is not None and out.shape[2] != channels):
        raise ValueError(f"{name} must be (H, W, {channels or 'C'}), got {arr.shape}")
    return out


def bilinear_warp(src, flow, clamp=False):
    src = _grid(src, "src")
    flow = _grid(flow, "flow", channels=2)
    if flow.shape[:2] != src.shape[:2]:
        raise ValueError("src and flow grid dims differ")
    out, valid = _impl.bilinear_warp(src, flow, clamp)
    return out, valid.astype(bool)


def box_mean(src, radius):
    src = _grid(src, "src")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return _impl.box_mean(src, int(radius))


def rigid_flow_grid(depth, valid, fx, fy, cx, cy, rt, eps_z):
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    valid = np.ascontiguousarray(valid, dtype=np.uint8)
    rt = np.ascontiguousarray(rt, dtype=np.float64)
    flow, vout = _impl.rigid_flow_grid(depth, valid, float(fx), float(fy),
                                       float(cx), float(cy), rt, float(eps_z))
    return flow, vout.astype(bool)


def project_points(pts, fx, fy, cx, cy, rt, eps_z, with_jacobian=False):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    rt = np.ascontiguousarray(rt, dtype=np.float64)
    pix, jac, valid = _impl.project_points(pts, float(fx), float(fy), float(cx),
                                           float(cy), rt, float(eps_z),
                                           bool(with_jacobian))
    return pix, jac, valid.astype(bool)
