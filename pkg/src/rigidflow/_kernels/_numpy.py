"""Pure-numpy implementations of the per-pixel kernels.

Mirrors ``_native`` (the Cython extension) operation for operation.  Both
backends evaluate the same arithmetic in the same association order so their
outputs agree to the last few ulps; tests pin the agreement at 1e-12.
"""

import numpy as np

BACKEND_NAME = "python"


def bilinear_warp(src, flow, clamp=False):
    """Sample `src` (H,W,C) at x + flow(x) with bilinear interpolation.

    Returns (out, valid) where valid marks pixels whose sample position lies
    inside [0, W-1] x [0, H-1].  With clamp=True the position is clamped to
    the grid instead and valid is all ones.
    """
    h, w, c = src.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    u = xs + flow[:, :, 0]
    v = ys + flow[:, :, 1]

    inside = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    if clamp:
        valid = np.ones((h, w), dtype=np.uint8)
        u = np.clip(u, 0.0, w - 1.0)
        v = np.clip(v, 0.0, h - 1.0)
    else:
        valid = inside.astype(np.uint8)
        u = np.where(inside, u, 0.0)
        v = np.where(inside, v, 0.0)

    x0 = np.floor(u).astype(np.intp)
    y0 = np.floor(v).astype(np.intp)
    x0 = np.minimum(np.maximum(x0, 0), max(w - 2, 0))
    y0 = np.minimum(np.maximum(y0, 0), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    a = u - x0
    b = v - y0
    w00 = (1.0 - a) * (1.0 - b)
    w01 = a * (1.0 - b)
    w10 = (1.0 - a) * b
    w11 = a * b

    out = np.empty_like(src)
    for ch in range(c):
        s = src[:, :, ch]
        out[:, :, ch] = (w00 * s[y0, x0] + w01 * s[y0, x1]) + \
                        (w10 * s[y1, x0] + w11 * s[y1, x1])
    out *= valid[:, :, None]
    return out, valid


def box_mean(src, radius):
    """Box-filter mean of `src` (H,W,C) with replicate padding."""
    h, w, c = src.shape
    padded = np.pad(src, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    acc = np.zeros_like(src)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            acc = acc + padded[dy:dy + h, dx:dx + w, :]
    n = float((2 * radius + 1) ** 2)
    return acc / n


def rigid_flow_grid(depth, valid, fx, fy, cx, cy, rt, eps_z):
    """Flow induced by camera motion `rt` (3x4 [R|t]) over a depth grid.

    Back-projects every valid pixel, applies the pose and re-projects.
    The homogeneous point is scaled by 1/d so that identity motion yields
    exactly zero flow in floating point.  Pixels whose transformed depth
    falls at or below eps_z are marked invalid and get zero flow.
    """
    h, w = depth.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    rx = (xs - cx) / fx
    ry = (ys - cy) / fy
    s = 1.0 / np.where(valid != 0, depth, 1.0)

    r = rt[:, :3]
    t = rt[:, 3]
    qx = (r[0, 0] * rx + r[0, 1] * ry) + (r[0, 2] + s * t[0])
    qy = (r[1, 0] * rx + r[1, 1] * ry) + (r[1, 2] + s * t[1])
    qz = (r[2, 0] * rx + r[2, 1] * ry) + (r[2, 2] + s * t[2])

    ok = (valid != 0) & (qz > eps_z * s)
    qz_safe = np.where(ok, qz, 1.0)
    flow = np.zeros((h, w, 2), dtype=np.float64)
    flow[:, :, 0] = np.where(ok, fx * (qx / qz_safe - rx), 0.0)
    flow[:, :, 1] = np.where(ok, fy * (qy / qz_safe - ry), 0.0)
    return flow, ok.astype(np.uint8)


def project_points(pts, fx, fy, cx, cy, rt, eps_z, with_jacobian):
    """Project camera-frame points through pose `rt` onto the pixel grid.

    Returns (pix, jac, valid).  `jac` is the (N,2,6) derivative of the
    projected pixel w.r.t. a right-multiplied twist [rho; omega] (None when
    with_jacobian is false).  Points whose transformed depth is at or below
    eps_z are invalid with zeroed outputs.
    """
    n = pts.shape[0]
    r = rt[:, :3]
    t = rt[:, 3]
    q = pts @ r.T + t
    ok = q[:, 2] > eps_z
    qz = np.where(ok, q[:, 2], 1.0)

    pix = np.zeros((n, 2), dtype=np.float64)
    pix[:, 0] = np.where(ok, fx * q[:, 0] / qz + cx, 0.0)
    pix[:, 1] = np.where(ok, fy * q[:, 1] / qz + cy, 0.0)

    jac = None
    if with_jacobian:
        # d(pix)/dq, rows of the 2x3 projection derivative at q
        inv_z = 1.0 / qz
        a00 = fx * inv_z
        a02 = -fx * q[:, 0] * inv_z * inv_z
        a11 = fy * inv_z
        a12 = -fy * q[:, 1] * inv_z * inv_z

        jac = np.zeros((n, 2, 6), dtype=np.float64)
        # translation block: A @ R
        b0 = a00[:, None] * r[0, :] + a02[:, None] * r[2, :]
        b1 = a11[:, None] * r[1, :] + a12[:, None] * r[2, :]
        jac[:, 0, 0:3] = b0
        jac[:, 1, 0:3] = b1
        # rotation block: -(A @ R) @ skew(X) with X the untransformed point
        x0, x1, x2 = pts[:, 0], pts[:, 1], pts[:, 2]
        jac[:, 0, 3] = -(b0[:, 1] * x2 - b0[:, 2] * x1)
        jac[:, 0, 4] = -(b0[:, 2] * x0 - b0[:, 0] * x2)
        jac[:, 0, 5] = -(b0[:, 0] * x1 - b0[:, 1] * x0)
        jac[:, 1, 3] = -(b1[:, 1] * x2 - b1[:, 2] * x1)
        jac[:, 1, 4] = -(b1[:, 2] * x0 - b1[:, 0] * x2)
        jac[:, 1, 5] = -(b1[:, 0] * x1 - b1[:, 1] * x0)
        jac[~ok] = 0.0

    return pix, jac, ok.astype(np.uint8)
