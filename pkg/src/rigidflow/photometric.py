"""Image warping, photometric error and the flow/depth/uncover losses.

Images are (H, W, C) float64 arrays with values in [0, 1] and C in {1, 3};
masks are (H, W) float64 arrays in [0, 1].  All functions are pure and use a
fixed reduction order, so results are reproducible run to run.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientDataError

# forward-backward consistency constants of the occlusion check
FB_ALPHA_1 = 0.01
FB_ALPHA_2 = 0.5


@dataclass(frozen=True)
class PhotometricConfig:
    """Weights and window of the l1 + SSIM photometric error."""

    lambda_rho: float = 0.003
    ssim_window: int = 3
    ssim_c1: float = 1e-4
    ssim_c2: float = 9e-4

    def __post_init__(self):
        if not 0.0 <= self.lambda_rho <= 1.0:
            raise ValueError("lambda_rho must be in [0, 1]")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")


def _check_image(image, name="image"):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise ValueError(f"{name} must be (H, W, 1|3), got {image.shape}")
    return image


def warp_image(image, flow):
    """Backward-warp: output(x) = bilinear sample of `image` at x + flow(x).

    Returns (warped, mask); mask is 0 (and the output 0) wherever the sample
    position leaves the grid.
    """
    image = _check_image(image)
    out, valid = _kernels.bilinear_warp(image, flow, clamp=False)
    return out, valid.astype(np.float64)


def ssim_map(a, b, cfg=PhotometricConfig()):
    """Per-pixel SSIM dissimilarity (1 - SSIM)/2 in [0, 1].

    Statistics come from a box window of cfg.ssim_window with replicate
    padding, per channel, then channel-averaged.
    """
    a = _check_image(a, "a")
    b = _check_image(b, "b")
    if a.shape != b.shape:
        raise ValueError("image dims differ")
    r = cfg.ssim_window // 2
    mu_a = _kernels.box_mean(a, r)
    mu_b = _kernels.box_mean(b, r)
    var_a = np.maximum(_kernels.box_mean(a * a, r) - mu_a * mu_a, 0.0)
    var_b = np.maximum(_kernels.box_mean(b * b, r) - mu_b * mu_b, 0.0)
    cov = _kernels.box_mean(a * b, r) - mu_a * mu_b
    c1, c2 = cfg.ssim_c1, cfg.ssim_c2
    ssim = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / \
           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
    return np.clip((1.0 - ssim.mean(axis=2)) / 2.0, 0.0, 1.0)


def photometric_error(a, b, cfg=PhotometricConfig()):
    """rho = lambda_rho * |a-b|_1 (channel mean) + (1-lambda_rho) * ssim_map."""
    a = _check_image(a, "a")
    b = _check_image(b, "b")
    if a.shape != b.shape:
        raise ValueError("image dims differ")
    l1 = np.abs(a - b).mean(axis=2)
    return cfg.lambda_rho * l1 + (1.0 - cfg.lambda_rho) * ssim_map(a, b, cfg)


def occlusion_mask(flow_fwd, flow_bwd, a1=FB_ALPHA_1, a2=FB_ALPHA_2):
    """Non-occluded mask from the forward-backward consistency check.

    A pixel is non-occluded (1) iff
      |F_fwd + F_bwd(x + F_fwd)|^2 < a1 * (|F_fwd|^2 + |F_bwd(x + F_fwd)|^2) + a2.
    The backward field is sampled with border clamping so constant fields
    behave uniformly across the grid.
    """
    flow_fwd = np.asarray(flow_fwd, dtype=np.float64)
    flow_bwd = np.asarray(flow_bwd, dtype=np.float64)
    if flow_fwd.shape != flow_bwd.shape:
        raise ValueError("flow dims differ")
    warped_bwd, _ = _kernels.bilinear_warp(flow_bwd, flow_fwd, clamp=True)
    sq_sum = ((flow_fwd + warped_bwd) ** 2).sum(axis=2)
    bound = a1 * ((flow_fwd ** 2).sum(axis=2) + (warped_bwd ** 2).sum(axis=2)) + a2
    return (sq_sum < bound).astype(np.float64)


def valid_target_mask(flow):
    """1 where x + flow(x) lands strictly inside the grid, else 0."""
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    u = xs + flow[:, :, 0]
    v = ys + flow[:, :, 1]
    inside = (u > 0.0) & (u < w - 1.0) & (v > 0.0) & (v < h - 1.0)
    return inside.astype(np.float64)


def _masked_mean(error_map, weights):
    total = float(weights.sum())
    if total <= 0.0:
        raise InsufficientDataError("mask selects no pixels")
    return float((error_map * weights).sum() / total)


def window_valid_mask(mask, radius):
    """Erode a 0/1 mask so surviving pixels have a fully valid box window.

    Reconstruction losses use this to keep SSIM windows from bleeding in the
    zeroed samples of out-of-frame warps."""
    shrunk = _kernels.box_mean(np.asarray(mask, dtype=np.float64)[:, :, None], radius)
    return (shrunk[:, :, 0] >= 1.0 - 1e-12).astype(np.float64)


def flow_loss(image_t, image_t1, flow, mask_noc, cfg=PhotometricConfig()):
    """Masked mean photometric error between frame t and its reconstruction
    warped back from frame t+1.  Pixels whose warp leaves the frame carry no
    reconstruction; they and their SSIM-window neighbours are excluded from
    the mean."""
    warped, wmask = warp_image(image_t1, flow)
    wmask = window_valid_mask(wmask, cfg.ssim_window // 2)
    weights = np.asarray(mask_noc, dtype=np.float64) * wmask
    return _masked_mean(photometric_error(image_t, warped, cfg), weights)


def _second_difference_sums(field, image):
    """Sum of |second difference| of `field`, weighted by exp(-|d2 image|).

    Differences use the full 3-tap stencil only, so affine fields are exactly
    zero regardless of the image; field channels are summed, image channels
    averaged.
    """
    field = np.asarray(field, dtype=np.float64)
    d2fx = field[:, 2:] - 2.0 * field[:, 1:-1] + field[:, :-2]
    d2fy = field[2:, :] - 2.0 * field[1:-1, :] + field[:-2, :]
    d2ix = np.abs(image[:, 2:] - 2.0 * image[:, 1:-1] + image[:, :-2]).mean(axis=2)
    d2iy = np.abs(image[2:, :] - 2.0 * image[1:-1, :] + image[:-2, :]).mean(axis=2)
    term_x = (np.abs(d2fx).sum(axis=2) * np.exp(-d2ix)).sum()
    term_y = (np.abs(d2fy).sum(axis=2) * np.exp(-d2iy)).sum()
    return float(term_x + term_y)


def smooth_loss(flow, image):
    """Edge-aware second-order smoothness of a flow field."""
    image = _check_image(image)
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape[:2] != image.shape[:2]:
        raise ValueError("flow and image dims differ")
    return _second_difference_sums(flow, image)


def depth_loss(image_l, image_r, depth_l, depth_r, intrinsics, baseline,
               cfg=PhotometricConfig()):
    """Stereo depth coherence: photometric error of the disparity-warped
    right view, edge-aware depth smoothness and left-right depth consistency,
    averaged over pixels with a valid disparity warp.

    Assumes rectified geometry with the right camera at +baseline along x,
    so disparity = fx * baseline / depth and the warp looks left.
    """
    if baseline <= 0:
        raise ValueError("baseline must be positive")
    image_l = _check_image(image_l, "image_l")
    image_r = _check_image(image_r, "image_r")

    disparity = intrinsics.fx * baseline / np.where(depth_l.valid, depth_l.values, 1.0)
    h, w = depth_l.shape
    disp_flow = np.zeros((h, w, 2))
    disp_flow[:, :, 0] = -disparity

    warped_r, mask_img = warp_image(image_r, disp_flow)
    warped_dr, mask_d = _kernels.bilinear_warp(depth_r.values[:, :, None], disp_flow)

    photo = photometric_error(image_l, warped_r, cfg)

    d2 = np.zeros((h, w))
    dvals = depth_l.values
    d2ix = np.abs(image_l[:, 2:] - 2.0 * image_l[:, 1:-1] + image_l[:, :-2]).mean(axis=2)
    d2iy = np.abs(image_l[2:, :] - 2.0 * image_l[1:-1, :] + image_l[:-2, :]).mean(axis=2)
    d2[:, 1:-1] += np.abs(dvals[:, 2:] - 2.0 * dvals[:, 1:-1] + dvals[:, :-2]) * np.exp(-d2ix)
    d2[1:-1, :] += np.abs(dvals[2:, :] - 2.0 * dvals[1:-1, :] + dvals[:-2, :]) * np.exp(-d2iy)

    lr = np.abs(dvals - warped_dr[:, :, 0])

    weights = depth_l.valid.astype(np.float64) * \
        window_valid_mask(mask_img * mask_d.astype(np.float64), cfg.ssim_window // 2)
    return _masked_mean(photo + d2 + lr, weights)


def uncover_region(mask_noc, mask_opt, mask_rig):
    """Pixels without photometric supervision where the rigid prediction is
    still valid: (1 - mask_noc * mask_opt) * mask_rig."""
    mask_noc = np.asarray(mask_noc, dtype=np.float64)
    mask_opt = np.asarray(mask_opt, dtype=np.float64)
    mask_rig = np.asarray(mask_rig, dtype=np.float64)
    if not (mask_noc.shape == mask_opt.shape == mask_rig.shape):
        raise ValueError("mask dims differ")
    return (1.0 - mask_noc * mask_opt) * mask_rig


def uncover_loss(flow_o, flow_r, region):
    """Masked sum of squared flow differences over the uncover region."""
    flow_o = np.asarray(flow_o, dtype=np.float64)
    flow_r = np.asarray(flow_r, dtype=np.float64)
    if flow_o.shape != flow_r.shape:
        raise ValueError("flow dims differ")
    sq = ((flow_o - flow_r) ** 2).sum(axis=2)
    return float((np.asarray(region, dtype=np.float64) * sq).sum())
