"""Pinhole camera model, SE(3) pose algebra and rigid-flow synthesis.

Conventions used throughout the package:
  - pixel coordinates are (u, v) = (column, row), origin at the center of
    the top-left pixel;
  - the camera frame is right-handed with +z along the optical axis;
  - a pose maps camera-frame coordinates at time t to time t+1;
  - twists are 6-vectors [rho; omega] with the translational part first.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels

# Transformed points with depth at or below this are treated as behind the
# camera and masked rather than projected.
EPS_Z = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def as_matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


@dataclass(frozen=True)
class CameraPose:
    """Rigid transform [R|t]; apply() maps frame-t points into frame t+1."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError("R must be 3x3")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-8:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ValueError("R must have determinant +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points):
        """Transform points of shape (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.R.T + self.t

    def as_matrix34(self):
        return np.concatenate([self.R, self.t[:, None]], axis=1)

    def to_dict(self):
        return {"R": [float(v) for v in self.R.reshape(-1)],
                "t": [float(v) for v in self.t]}

    @classmethod
    def from_dict(cls, d):
        R = np.array(d["R"], dtype=np.float64).reshape(3, 3)
        t = np.array(d["t"], dtype=np.float64)
        return cls(R, t)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in scene units plus a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or valid.shape != values.shape:
            raise ValueError("depth and validity grids must be matching 2-D arrays")
        used = values[valid]
        if used.size and not (np.all(np.isfinite(used)) and np.all(used > 0)):
            raise ValueError("valid depths must be finite and positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(values) & (values > 0)
        return cls(values, valid)

    @property
    def shape(self):
        return self.values.shape


def project(point, intrinsics, eps_z=EPS_Z):
    """Perspective projection of a camera-frame point.

    Returns (pixel, depth); raises ValueError for points at or behind the
    camera plane.
    """
    x, y, z = (float(v) for v in np.asarray(point, dtype=np.float64).reshape(3))
    if z <= eps_z:
        raise ValueError(f"point is behind the camera (z={z})")
    pixel = np.array([intrinsics.fx * x / z + intrinsics.cx,
                      intrinsics.fy * y / z + intrinsics.cy])
    return pixel, z


def back_project(pixel, depth, intrinsics):
    """Lift a pixel at the given depth back into the camera frame."""
    depth = float(depth)
    if depth <= 0:
        raise ValueError(f"depth must be positive (got {depth})")
    u, v = (float(c) for c in np.asarray(pixel, dtype=np.float64).reshape(2))
    return np.array([depth * (u - intrinsics.cx) / intrinsics.fx,
                     depth * (v - intrinsics.cy) / intrinsics.fy,
                     depth])


def rigid_flow(depth_map, intrinsics, pose, eps_z=EPS_Z):
    """Flow field induced by camera motion over a static scene.

    Every valid pixel is back-projected at its depth, moved by the pose and
    re-projected; the flow is the pixel displacement.  Returns (flow, valid)
    where pixels whose transformed point has depth <= eps_z are masked
    invalid (zero flow) instead of producing unbounded values.
    """
    return _kernels.rigid_flow_grid(
        depth_map.values, depth_map.valid,
        intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
        pose.as_matrix34(), eps_z)


def pose_compose(outer, inner):
    """Compose two poses; `inner` is applied first."""
    return CameraPose(outer.R @ inner.R, outer.R @ inner.t + outer.t)


def pose_inverse(pose):
    return CameraPose(pose.R.T, -(pose.R.T @ pose.t))


def _skew(w):
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def se3_exp(xi):
    """Exponential map from a twist [rho; omega] to a pose.

    Uses Taylor expansions of the Rodrigues coefficients below 1e-8 rad to
    stay exact through the small-angle regime.
    """
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    rho, omega = xi[:3], xi[3:]
    theta2 = float(omega @ omega)
    k = _skew(omega)
    k2 = k @ k
    if theta2 < 1e-16:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
        c = 1.0 / 6.0 - theta2 / 120.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
        c = (theta - np.sin(theta)) / (theta2 * theta)
    R = np.eye(3) + a * k + b * k2
    V = np.eye(3) + b * k + c * k2
    return CameraPose(R, V @ rho)


def _quat_from_rotation(R):
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    m = R
    if m[2, 2] < 0:
        if m[0, 0] > m[1, 1]:
            s = 1.0 + m[0, 0] - m[1, 1] - m[2, 2]
            q = np.array([m[2, 1] - m[1, 2], s, m[1, 0] + m[0, 1], m[0, 2] + m[2, 0]])
        else:
            s = 1.0 - m[0, 0] + m[1, 1] - m[2, 2]
            q = np.array([m[0, 2] - m[2, 0], m[1, 0] + m[0, 1], s, m[2, 1] + m[1, 2]])
    else:
        if m[0, 0] < -m[1, 1]:
            s = 1.0 - m[0, 0] - m[1, 1] + m[2, 2]
            q = np.array([m[1, 0] - m[0, 1], m[0, 2] + m[2, 0], m[2, 1] + m[1, 2], s])
        else:
            s = 1.0 + m[0, 0] + m[1, 1] + m[2, 2]
            q = np.array([s, m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    q = q * (0.5 / np.sqrt(s))
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def se3_log(pose):
    """Logarithm map; inverse of se3_exp for rotation angles below pi."""
    q = _quat_from_rotation(pose.R)
    vec_norm = np.linalg.norm(q[1:])
    if vec_norm < 1e-9:
        omega = 2.0 * q[1:]
    else:
        theta = 2.0 * np.arctan2(vec_norm, q[0])
        omega = theta * q[1:] / vec_norm

    theta2 = float(omega @ omega)
    k = _skew(omega)
    k2 = k @ k
    if theta2 < 1e-12:
        d = 1.0 / 12.0 + theta2 / 720.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
        d = (1.0 - a / (2.0 * b)) / theta2
    v_inv = np.eye(3) - 0.5 * k + d * k2
    return np.concatenate([v_inv @ pose.t, omega])
