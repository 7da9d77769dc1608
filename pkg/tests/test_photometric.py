import numpy as np
import pytest

from rigidflow.errors import InsufficientDataError
from rigidflow.geometry import DepthMap, Intrinsics
from rigidflow.photometric import (PhotometricConfig, depth_loss, flow_loss,
                                   occlusion_mask, photometric_error,
                                   smooth_loss, ssim_map, uncover_loss,
                                   uncover_region, valid_target_mask,
                                   warp_image)


def _random_image(seed, h=10, w=12, c=3):
    return np.random.default_rng(seed).random((h, w, c))


def test_warp_zero_flow_identity():
    img = _random_image(0)
    out, mask = warp_image(img, np.zeros((10, 12, 2)))
    assert np.array_equal(out, img)
    assert mask.min() == 1.0


def test_warp_integer_shift():
    img = _random_image(1)
    flow = np.zeros((10, 12, 2))
    flow[:, :, 0] = 1.0
    out, mask = warp_image(img, flow)
    assert np.array_equal(out[:, :-1], img[:, 1:])
    assert mask[:, -1].max() == 0.0


def test_warp_border_exit_masked():
    img = _random_image(2)
    flow = np.zeros((10, 12, 2))
    flow[0, 0] = (-1.0, 0.0)
    out, mask = warp_image(img, flow)
    assert mask[0, 0] == 0.0 and out[0, 0].max() == 0.0


def test_ssim_identical_is_zero():
    img = _random_image(3)
    assert np.max(ssim_map(img, img)) < 1e-12


def test_ssim_constant_images_closed_form():
    cfg = PhotometricConfig()
    a = np.full((8, 8, 1), 0.3)
    b = np.full((8, 8, 1), 0.7)
    # constant patches: variances and covariance vanish
    ssim = ((2 * 0.3 * 0.7 + cfg.ssim_c1) * cfg.ssim_c2) / \
           ((0.3 ** 2 + 0.7 ** 2 + cfg.ssim_c1) * cfg.ssim_c2)
    expected = (1.0 - ssim) / 2.0
    assert np.allclose(ssim_map(a, b, cfg), expected, atol=1e-12)


def test_ssim_matches_patch_oracle():
    cfg = PhotometricConfig()
    rng = np.random.default_rng(4)
    a = rng.random((6, 7, 1))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    got = ssim_map(a, b, cfg)
    for y in range(6):
        for x in range(7):
            ys = np.clip(np.arange(y - 1, y + 2), 0, 5)
            xs = np.clip(np.arange(x - 1, x + 2), 0, 6)
            pa = a[np.ix_(ys, xs)][:, :, 0].ravel()
            pb = b[np.ix_(ys, xs)][:, :, 0].ravel()
            mu_a, mu_b = pa.mean(), pb.mean()
            va, vb = pa.var(), pb.var()
            cov = (pa * pb).mean() - mu_a * mu_b
            s = ((2 * mu_a * mu_b + cfg.ssim_c1) * (2 * cov + cfg.ssim_c2)) / \
                ((mu_a ** 2 + mu_b ** 2 + cfg.ssim_c1) * (va + vb + cfg.ssim_c2))
            assert abs(got[y, x] - (1 - s) / 2) < 1e-10


def test_ssim_anticorrelated_images():
    img = _random_image(5, 16, 16)
    assert np.min(ssim_map(img, 1.0 - img)) > 0.4


def test_photometric_error_pure_l1_branch():
    img = np.full((6, 6, 3), 0.4)
    shifted = img + 0.1
    cfg = PhotometricConfig(lambda_rho=1.0)
    assert np.allclose(photometric_error(img, shifted, cfg), 0.1, atol=1e-12)


def test_photometric_error_zero_and_bounds():
    img = _random_image(6)
    assert np.max(photometric_error(img, img)) < 1e-12
    other = _random_image(7)
    err = photometric_error(img, other)
    assert err.min() >= 0.0 and err.max() <= 1.0


def test_photometric_default_weight_is_paper_value():
    assert PhotometricConfig().lambda_rho == 0.003


def test_occlusion_consistent_constant_flow():
    fwd = np.full((9, 11, 2), 3.0)
    assert occlusion_mask(fwd, -fwd).min() == 1.0


def test_occlusion_zero_flows():
    z = np.zeros((9, 11, 2))
    assert occlusion_mask(z, z).min() == 1.0


def test_occlusion_inconsistent_flow_all_occluded():
    fwd = np.zeros((9, 11, 2))
    fwd[:, :, 0] = 5.0
    # inconsistency 25 > 0.01 * 25 + 0.5
    assert occlusion_mask(fwd, np.zeros_like(fwd)).max() == 0.0


def test_occlusion_swap_invariance_constant_fields():
    fwd = np.full((9, 11, 2), 2.0)
    bwd = np.full((9, 11, 2), -1.5)
    assert np.array_equal(occlusion_mask(fwd, bwd), occlusion_mask(-fwd, -bwd))


def test_flow_loss_zero_flow_static_pair():
    img = _random_image(8)
    loss = flow_loss(img, img, np.zeros((10, 12, 2)), np.ones((10, 12)))
    assert loss < 1e-12


def test_flow_loss_empty_mask_raises():
    img = _random_image(9)
    with pytest.raises(InsufficientDataError):
        flow_loss(img, img, np.zeros((10, 12, 2)), np.zeros((10, 12)))


def test_smooth_loss_zero_for_affine_flow():
    img = _random_image(10, 9, 9)
    ys, xs = np.meshgrid(np.arange(9.0), np.arange(9.0), indexing="ij")
    # dyadic coefficients keep the field exactly affine in floating point
    flow = np.stack([0.25 * xs - 0.5 * ys + 1.0, -0.125 * xs + 0.75 * ys], axis=2)
    assert smooth_loss(flow, img) == 0.0
    assert smooth_loss(np.full((9, 9, 2), 2.5), img) == 0.0


def test_smooth_loss_step_edge_hand_computed():
    img = np.full((5, 5, 1), 0.5)
    flow = np.zeros((5, 5, 2))
    flow[:, 2:, 0] = 1.0  # step edge between columns 1 and 2
    # independent loop evaluation of the definition
    expected = 0.0
    for y in range(5):
        for x in range(1, 4):
            expected += abs(flow[y, x + 1, 0] - 2 * flow[y, x, 0] + flow[y, x - 1, 0])
    assert expected == 2.0 * 5
    assert smooth_loss(flow, img) == expected


def _stereo_pair(width=16, height=10, shift=2, seed=11):
    rng = np.random.default_rng(seed)
    base = rng.random((height, width + shift, 3))
    return base[:, :width], base[:, shift:shift + width]


def test_depth_loss_consistent_stereo_is_zero():
    intr = Intrinsics(100.0, 100.0, 7.5, 4.5)
    baseline = 0.2
    d = 100.0 * baseline / 2.0  # disparity exactly 2 px
    img_l, img_r = _stereo_pair(shift=2)
    depth = DepthMap.from_array(np.full((10, 16), d))
    loss = depth_loss(img_l, img_r, depth, depth, intr, baseline)
    assert loss < 1e-12


def test_depth_loss_wrong_depth_is_larger():
    intr = Intrinsics(100.0, 100.0, 7.5, 4.5)
    baseline = 0.2
    d = 100.0 * baseline / 2.0
    img_l, img_r = _stereo_pair(shift=2)
    good = DepthMap.from_array(np.full((10, 16), d))
    bad = DepthMap.from_array(np.full((10, 16), 2.0 * d))
    l_good = depth_loss(img_l, img_r, good, good, intr, baseline)
    l_bad = depth_loss(img_l, img_r, bad, bad, intr, baseline)
    assert l_bad > l_good


def test_depth_loss_flat_images_photometric_insensitive():
    intr = Intrinsics(100.0, 100.0, 7.5, 4.5)
    flat = np.full((10, 16, 3), 0.5)
    d1 = DepthMap.from_array(np.full((10, 16), 10.0))
    d2 = DepthMap.from_array(np.full((10, 16), 5.0))
    assert depth_loss(flat, flat, d1, d1, intr, 0.2) < 1e-12
    assert depth_loss(flat, flat, d2, d2, intr, 0.2) < 1e-12


def test_depth_loss_rejects_bad_baseline():
    flat = np.full((4, 4, 1), 0.5)
    d = DepthMap.from_array(np.ones((4, 4)))
    with pytest.raises(ValueError):
        depth_loss(flat, flat, d, d, Intrinsics(10, 10, 2, 2), 0.0)


def test_valid_target_mask_strict_interior():
    flow = np.zeros((6, 8, 2))
    m = valid_target_mask(flow)
    assert m[1:-1, 1:-1].min() == 1.0
    assert m[0].max() == 0.0 and m[:, -1].max() == 0.0
    flow[:, :, 0] = 100.0
    assert valid_target_mask(flow).max() == 0.0


def test_uncover_region_rules():
    ones = np.ones((5, 5))
    zeros = np.zeros((5, 5))
    assert uncover_region(ones, ones, ones).max() == 0.0
    assert uncover_region(ones, ones, zeros).max() == 0.0
    band = np.ones((5, 5))
    band[:, -2:] = 0.0  # optical flow leaves the frame on the right
    region = uncover_region(ones, band, ones)
    assert np.array_equal(region, 1.0 - band)


def test_uncover_loss_values():
    f = np.zeros((4, 4, 2))
    g = np.zeros((4, 4, 2))
    assert uncover_loss(f, g, np.ones((4, 4))) == 0.0
    g[1, 2] = (3.0, 4.0)
    region = np.zeros((4, 4))
    assert uncover_loss(f, g, region) == 0.0
    region[1, 2] = 1.0
    assert uncover_loss(f, g, region) == 25.0
