"""Relative-pose recovery from flow-derived 2D-3D correspondences.

A RANSAC loop over minimal samples, each refined by damped Gauss-Newton
(Levenberg-Marquardt) on the 6-vector twist, followed by one refinement over
the consensus set.  Fully deterministic given the configured seed.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientDataError, NumericalError
from .geometry import EPS_Z, CameraPose, pose_compose, se3_exp

_MAX_DAMPING = 1e12
_DEGENERATE_SV_RATIO = 1e-10


@dataclass(frozen=True)
class PnpConfig:
    ransac_iters: int = 256
    min_set: int = 6
    inlier_thresh_px: float = 1.0
    lm_max_iters: int = 50
    lm_init_damping: float = 1e-3
    convergence_tol: float = 1e-10
    rng_seed: int = 0

    def __post_init__(self):
        if self.ransac_iters < 1:
            raise ValueError("ransac_iters must be >= 1")
        if self.min_set < 3:
            raise ValueError("min_set must be >= 3")
        if self.inlier_thresh_px <= 0:
            raise ValueError("inlier_thresh_px must be positive")


@dataclass(frozen=True)
class Correspondences:
    """2D-3D matches: pixel at t, observed pixel at t+1 (x_t + flow) and the
    depth at t.  Stored as parallel arrays."""

    pixels_t: np.ndarray
    pixels_t1: np.ndarray
    depths: np.ndarray

    def __post_init__(self):
        pt = np.asarray(self.pixels_t, dtype=np.float64).reshape(-1, 2)
        pt1 = np.asarray(self.pixels_t1, dtype=np.float64).reshape(-1, 2)
        d = np.asarray(self.depths, dtype=np.float64).reshape(-1)
        if not (len(pt) == len(pt1) == len(d)):
            raise ValueError("correspondence arrays disagree in length")
        if not (np.all(np.isfinite(pt)) and np.all(np.isfinite(pt1))):
            raise ValueError("pixels must be finite")
        if not (np.all(np.isfinite(d)) and np.all(d > 0)):
            raise ValueError("depths must be finite and positive")
        object.__setattr__(self, "pixels_t", pt)
        object.__setattr__(self, "pixels_t1", pt1)
        object.__setattr__(self, "depths", d)

    def __len__(self):
        return len(self.depths)

    def subset(self, index):
        return Correspondences(self.pixels_t[index], self.pixels_t1[index],
                               self.depths[index])


@dataclass(frozen=True)
class PnpResult:
    pose: CameraPose
    inlier_mask: np.ndarray
    final_rms_px: float


def _points_3d(corrs, intr):
    pts = np.empty((len(corrs), 3))
    pts[:, 0] = corrs.depths * (corrs.pixels_t[:, 0] - intr.cx) / intr.fx
    pts[:, 1] = corrs.depths * (corrs.pixels_t[:, 1] - intr.cy) / intr.fy
    pts[:, 2] = corrs.depths
    return pts


def reprojection_residuals(pose, corrs, intrinsics, eps_z=EPS_Z):
    """Residuals x_t1 - projection(pose, back-projected x_t), two pixels per
    correspondence.  Returns (residuals, valid); rows whose transformed point
    falls at or behind the camera are zeroed and flagged invalid."""
    pts = _points_3d(corrs, intrinsics)
    pix, _, valid = _kernels.project_points(
        pts, intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
        pose.as_matrix34(), eps_z)
    res = np.where(valid[:, None], corrs.pixels_t1 - pix, 0.0)
    return res, valid


def _residuals_jacobian(pose, pts, obs, intr):
    pix, jac_pix, valid = _kernels.project_points(
        pts, intr.fx, intr.fy, intr.cx, intr.cy, pose.as_matrix34(), EPS_Z,
        with_jacobian=True)
    res = np.where(valid[:, None], obs - pix, 0.0)
    return res, -jac_pix, valid


def _cost(res, valid):
    return float((res[valid] ** 2).sum())


@dataclass(frozen=True)
class LmInfo:
    iterations: int
    cost_trace: tuple
    final_rms_px: float


def lm_refine(pose0, corrs, intrinsics, cfg=PnpConfig(), return_info=False):
    """Minimize the reprojection cost from pose0 over the 6-DoF twist.

    Classic damping schedule: steps that lower the cost are accepted and the
    damping divided by 10, otherwise it is multiplied by 10; above 1e12 the
    solve is abandoned as making no progress.  Rank-deficient correspondence
    geometry is rejected up front rather than silently yielding a pose."""
    if len(corrs) < 3:
        raise InsufficientDataError(f"need >= 3 correspondences, got {len(corrs)}")
    pts = _points_3d(corrs, intrinsics)
    obs = corrs.pixels_t1

    pose = pose0
    res, jac, valid = _residuals_jacobian(pose, pts, obs, intrinsics)
    if int(valid.sum()) < 3:
        raise NumericalError("fewer than 3 correspondences project in front of the camera")
    j_stack = jac[valid].reshape(-1, 6)
    sv = np.linalg.svd(j_stack, compute_uv=False)
    if sv[-1] <= sv[0] * _DEGENERATE_SV_RATIO:
        raise NumericalError("degenerate correspondence geometry (rank-deficient)")

    cost = _cost(res, valid)
    trace = [cost]
    damping = cfg.lm_init_damping
    iterations = 0
    converged = False

    for iterations in range(1, cfg.lm_max_iters + 1):
        jtj = j_stack.T @ j_stack
        jtr = j_stack.T @ res[valid].reshape(-1)
        accepted = None
        while damping <= _MAX_DAMPING:
            try:
                step = np.linalg.solve(jtj + damping * np.eye(6), -jtr)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            if np.linalg.norm(step) < cfg.convergence_tol:
                converged = True  # includes starting at the optimum
                break
            candidate = pose_compose(pose, se3_exp(step))
            c_res, c_valid = _candidate_residuals(candidate, pts, obs, intrinsics)
            if int(c_valid.sum()) >= 3 and _cost(c_res, c_valid) < cost:
                accepted = (candidate, c_res, c_valid)
                break
            damping *= 10.0
        if converged:
            break
        if accepted is None:
            raise NumericalError("LM stalled: damping exceeded 1e12 without progress")

        pose, c_res, c_valid = accepted
        cost = _cost(c_res, c_valid)
        trace.append(cost)
        damping = max(damping / 10.0, 1e-15)
        res, jac, valid = _residuals_jacobian(pose, pts, obs, intrinsics)
        if int(valid.sum()) < 3:
            raise NumericalError("fewer than 3 correspondences remain in front of the camera")
        j_stack = jac[valid].reshape(-1, 6)

    final_res, final_valid = _candidate_residuals(pose, pts, obs, intrinsics)
    rms = float(np.sqrt((final_res[final_valid] ** 2).sum(axis=1).mean())) \
        if final_valid.any() else float("inf")
    if return_info:
        return pose, LmInfo(iterations, tuple(trace), rms)
    return pose


def _candidate_residuals(pose, pts, obs, intr):
    pix, _, valid = _kernels.project_points(
        pts, intr.fx, intr.fy, intr.cx, intr.cy, pose.as_matrix34(), EPS_Z)
    res = np.where(valid[:, None], obs - pix, 0.0)
    return res, valid


def _inliers(pose, corrs, intr, thresh):
    res, valid = reprojection_residuals(pose, corrs, intr)
    norms = np.sqrt((res ** 2).sum(axis=1))
    return valid & (norms < thresh)


def solve_pnp(corrs, intrinsics, cfg=PnpConfig()):
    """RANSAC + LM pose recovery.

    Each iteration refines a minimal sample from the identity pose and counts
    inliers by residual norm; the best consensus set is refined once more.
    Output is bit-identical across runs for a fixed rng_seed and input."""
    n = len(corrs)
    if n < cfg.min_set:
        raise InsufficientDataError(
            f"need >= {cfg.min_set} correspondences, got {n}")

    rng = np.random.default_rng(cfg.rng_seed)
    best_count = 0
    best_inliers = None
    best_pose = None
    identity = CameraPose.identity()

    for _ in range(cfg.ransac_iters):
        idx = rng.choice(n, size=cfg.min_set, replace=False)
        try:
            pose = lm_refine(identity, corrs.subset(idx), intrinsics, cfg)
        except NumericalError:
            continue
        inliers = _inliers(pose, corrs, intrinsics, cfg.inlier_thresh_px)
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            best_pose = pose

    if best_pose is None or best_count < cfg.min_set:
        raise NumericalError(
            f"no consensus: best model explains {best_count} < {cfg.min_set} correspondences")

    # refine over the consensus set, recounting until the set stabilizes so a
    # barely-sub-threshold outlier cannot bias the final least-squares fit
    refined = best_pose
    inliers = best_inliers
    for _ in range(4):
        refined = lm_refine(refined, corrs.subset(inliers), intrinsics, cfg)
        new_inliers = _inliers(refined, corrs, intrinsics, cfg.inlier_thresh_px)
        if int(new_inliers.sum()) < cfg.min_set:
            raise NumericalError("no consensus after refinement")
        if np.array_equal(new_inliers, inliers):
            break
        inliers = new_inliers
    res, valid = reprojection_residuals(refined, corrs, intrinsics)
    keep = inliers & valid
    rms = float(np.sqrt((res[keep] ** 2).sum(axis=1).mean()))
    return PnpResult(pose=refined, inlier_mask=inliers, final_rms_px=rms)


def correspondences_from_flow(flow, depth_map, intrinsics, max_count=5000, seed=0):
    """Build correspondences from every valid-depth pixel whose flow target
    stays inside the grid, uniformly subsampled above max_count."""
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    tu = xs + flow[:, :, 0]
    tv = ys + flow[:, :, 1]
    ok = depth_map.valid & (tu >= 0) & (tu <= w - 1) & (tv >= 0) & (tv <= h - 1)
    idx = np.flatnonzero(ok.ravel())
    if idx.size == 0:
        raise InsufficientDataError("no usable flow pixels")
    if idx.size > max_count:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(idx, size=max_count, replace=False))
    pix_t = np.stack([xs.ravel()[idx], ys.ravel()[idx]], axis=1)
    pix_t1 = np.stack([tu.ravel()[idx], tv.ravel()[idx]], axis=1)
    return Correspondences(pix_t, pix_t1, depth_map.values.ravel()[idx])


def accumulate_ate(estimated, reference, window):
    """Absolute trajectory error of composed relative poses.

    Both sequences are per-frame relative poses.  Over every sliding window
    of `window` poses, both chains are composed from the window start (which
    aligns the start frames) and the translational end-point error is taken;
    returns (mean, std) over all windows."""
    if len(estimated) != len(reference):
        raise ValueError("sequences differ in length")
    if window < 1 or len(estimated) < window:
        raise ValueError("window must satisfy 1 <= window <= sequence length")
    errors = []
    for start in range(len(estimated) - window + 1):
        acc_e = CameraPose.identity()
        acc_r = CameraPose.identity()
        for k in range(start, start + window):
            acc_e = pose_compose(estimated[k], acc_e)
            acc_r = pose_compose(reference[k], acc_r)
        errors.append(np.linalg.norm(acc_e.t - acc_r.t))
    errors = np.array(errors)
    return float(errors.mean()), float(errors.std())
