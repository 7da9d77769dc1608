# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel kernels: bilinear warping, box filtering, rigid-flow
synthesis and point projection with pose Jacobians.

Keep the arithmetic (including association order) in lockstep with
``_numpy.py``; the test suite pins cross-backend agreement at 1e-12.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

BACKEND_NAME = "native"


def bilinear_warp(double[:, :, ::1] src, double[:, :, ::1] flow, bint clamp=False):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t c = src.shape[2]
    out_arr = np.zeros((h, w, c), dtype=np.float64)
    valid_arr = np.zeros((h, w), dtype=np.uint8)
    cdef double[:, :, ::1] out = out_arr
    cdef cnp.uint8_t[:, ::1] valid = valid_arr

    cdef Py_ssize_t y, x, ch, x0, y0, x1, y1
    cdef double u, v, a, b, w00, w01, w10, w11
    cdef bint inside

    for y in range(h):
        for x in range(w):
            u = x + flow[y, x, 0]
            v = y + flow[y, x, 1]
            inside = (u >= 0.0) and (u <= w - 1.0) and (v >= 0.0) and (v <= h - 1.0)
            if clamp:
                if u < 0.0:
                    u = 0.0
                elif u > w - 1.0:
                    u = w - 1.0
                if v < 0.0:
                    v = 0.0
                elif v > h - 1.0:
                    v = h - 1.0
            elif not inside:
                continue
            valid[y, x] = 1

            x0 = <Py_ssize_t>floor(u)
            y0 = <Py_ssize_t>floor(v)
            if x0 < 0:
                x0 = 0
            if x0 > w - 2:
                x0 = w - 2 if w >= 2 else 0
            if y0 < 0:
                y0 = 0
            if y0 > h - 2:
                y0 = h - 2 if h >= 2 else 0
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1

            a = u - x0
            b = v - y0
            w00 = (1.0 - a) * (1.0 - b)
            w01 = a * (1.0 - b)
            w10 = (1.0 - a) * b
            w11 = a * b
            for ch in range(c):
                out[y, x, ch] = (w00 * src[y0, x0, ch] + w01 * src[y0, x1, ch]) + \
                                (w10 * src[y1, x0, ch] + w11 * src[y1, x1, ch])
    return out_arr, valid_arr


def box_mean(double[:, :, ::1] src, int radius):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t c = src.shape[2]
    out_arr = np.empty((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double n = (2 * radius + 1) * (2 * radius + 1)
    cdef Py_ssize_t y, x, ch, dy, dx, yy, xx
    cdef double acc

    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for dy in range(-radius, radius + 1):
                    yy = y + dy
                    if yy < 0:
                        yy = 0
                    elif yy > h - 1:
                        yy = h - 1
                    for dx in range(-radius, radius + 1):
                        xx = x + dx
                        if xx < 0:
                            xx = 0
                        elif xx > w - 1:
                            xx = w - 1
                        acc += src[yy, xx, ch]
                out[y, x, ch] = acc / n
    return out_arr


def rigid_flow_grid(double[:, ::1] depth, cnp.uint8_t[:, ::1] valid,
                    double fx, double fy, double cx, double cy,
                    double[:, ::1] rt, double eps_z):
    cdef Py_ssize_t h = depth.shape[0]
    cdef Py_ssize_t w = depth.shape[1]
    flow_arr = np.zeros((h, w, 2), dtype=np.float64)
    vout_arr = np.zeros((h, w), dtype=np.uint8)
    cdef double[:, :, ::1] flow = flow_arr
    cdef cnp.uint8_t[:, ::1] vout = vout_arr

    cdef Py_ssize_t y, x
    cdef double s, rx, ry, qx, qy, qz

    # The homogeneous point is scaled by 1/d so identity motion gives
    # exactly zero flow in floating point.
    for y in range(h):
        for x in range(w):
            if valid[y, x] == 0:
                continue
            s = 1.0 / depth[y, x]
            rx = (x - cx) / fx
            ry = (y - cy) / fy
            qx = (rt[0, 0] * rx + rt[0, 1] * ry) + (rt[0, 2] + s * rt[0, 3])
            qy = (rt[1, 0] * rx + rt[1, 1] * ry) + (rt[1, 2] + s * rt[1, 3])
            qz = (rt[2, 0] * rx + rt[2, 1] * ry) + (rt[2, 2] + s * rt[2, 3])
            if qz <= eps_z * s:
                continue
            vout[y, x] = 1
            flow[y, x, 0] = fx * (qx / qz - rx)
            flow[y, x, 1] = fy * (qy / qz - ry)
    return flow_arr, vout_arr


def project_points(double[:, ::1] pts, double fx, double fy, double cx, double cy,
                   double[:, ::1] rt, double eps_z, bint with_jacobian):
    cdef Py_ssize_t n = pts.shape[0]
    pix_arr = np.zeros((n, 2), dtype=np.float64)
    valid_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] pix = pix_arr
    cdef cnp.uint8_t[::1] valid = valid_arr

    jac_arr = None
    cdef double[:, :, ::1] jac = None
    if with_jacobian:
        jac_arr = np.zeros((n, 2, 6), dtype=np.float64)
        jac = jac_arr

    cdef Py_ssize_t i
    cdef double x0, x1, x2, qx, qy, qz, inv_z
    cdef double a00, a02, a11, a12
    cdef double b00, b01, b02, b10, b11, b12

    for i in range(n):
        x0 = pts[i, 0]
        x1 = pts[i, 1]
        x2 = pts[i, 2]
        qx = rt[0, 0] * x0 + rt[0, 1] * x1 + rt[0, 2] * x2 + rt[0, 3]
        qy = rt[1, 0] * x0 + rt[1, 1] * x1 + rt[1, 2] * x2 + rt[1, 3]
        qz = rt[2, 0] * x0 + rt[2, 1] * x1 + rt[2, 2] * x2 + rt[2, 3]
        if qz <= eps_z:
            continue
        valid[i] = 1
        pix[i, 0] = fx * qx / qz + cx
        pix[i, 1] = fy * qy / qz + cy
        if with_jacobian:
            inv_z = 1.0 / qz
            a00 = fx * inv_z
            a02 = -fx * qx * inv_z * inv_z
            a11 = fy * inv_z
            a12 = -fy * qy * inv_z * inv_z
            b00 = a00 * rt[0, 0] + a02 * rt[2, 0]
            b01 = a00 * rt[0, 1] + a02 * rt[2, 1]
            b02 = a00 * rt[0, 2] + a02 * rt[2, 2]
            b10 = a11 * rt[1, 0] + a12 * rt[2, 0]
            b11 = a11 * rt[1, 1] + a12 * rt[2, 1]
            b12 = a11 * rt[1, 2] + a12 * rt[2, 2]
            jac[i, 0, 0] = b00
            jac[i, 0, 1] = b01
            jac[i, 0, 2] = b02
            jac[i, 1, 0] = b10
            jac[i, 1, 1] = b11
            jac[i, 1, 2] = b12
            jac[i, 0, 3] = -(b01 * x2 - b02 * x1)
            jac[i, 0, 4] = -(b02 * x0 - b00 * x2)
            jac[i, 0, 5] = -(b00 * x1 - b01 * x0)
            jac[i, 1, 3] = -(b11 * x2 - b12 * x1)
            jac[i, 1, 4] = -(b12 * x0 - b10 * x2)
            jac[i, 1, 5] = -(b10 * x1 - b11 * x0)
    return pix_arr, jac_arr, valid_arr
