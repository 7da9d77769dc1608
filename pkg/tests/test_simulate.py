import numpy as np
import pytest

from rigidflow.geometry import rigid_flow
from rigidflow.photometric import warp_image, window_valid_mask
from rigidflow.simulate import (Mover, SceneConfig, generate_scene,
                                load_sample, perturb_depth, perturb_flow,
                                save_sample)


def _cfg(**kw):
    return SceneConfig(**kw)


def _mover(rect=(30, 20, 50, 36), depth=6.0, velocity=(0.25, 0.1, 0.0)):
    return Mover(rect=rect, depth=depth, velocity=velocity)


def test_same_seed_bit_identical():
    a = generate_scene(_cfg(seed=5, movers=(_mover(),)))
    b = generate_scene(_cfg(seed=5, movers=(_mover(),)))
    assert np.array_equal(a.image_t, b.image_t)
    assert np.array_equal(a.image_t1, b.image_t1)
    assert np.array_equal(a.flow_optical, b.flow_optical)
    assert np.array_equal(a.depth.values, b.depth.values)
    assert np.array_equal(a.occlusion_mask, b.occlusion_mask)


def test_identity_motion_no_movers():
    s = generate_scene(_cfg(ego_twist=(0, 0, 0, 0, 0, 0)))
    assert np.array_equal(s.image_t1, s.image_t)
    assert np.max(np.abs(s.flow_optical)) == 0.0
    assert s.moving_mask.max() == 0.0


def test_pure_x_translation_uniform_rigid_flow():
    # fronto-parallel plane at depth 10, t = (0.5, 0, 0), fx = 100
    s = generate_scene(_cfg(ego_twist=(0.5, 0, 0, 0, 0, 0), plane_depth=10.0))
    assert np.allclose(s.flow_rigid[:, :, 0], 100.0 * 0.5 / 10.0, atol=1e-9)
    assert np.allclose(s.flow_rigid[:, :, 1], 0.0, atol=1e-9)


def test_moving_mask_matches_mover_rect():
    m = _mover(rect=(30, 20, 50, 36))
    s = generate_scene(_cfg(movers=(m,)))
    expected = np.zeros((64, 96))
    expected[20:36, 30:50] = 1.0
    assert np.array_equal(s.moving_mask, expected)


def test_flows_agree_on_static_pixels():
    s = generate_scene(_cfg(movers=(_mover(),), seed=3))
    static = s.moving_mask == 0.0
    assert np.array_equal(s.flow_optical[static], s.flow_rigid[static])
    moving = ~static
    assert np.max(np.abs(s.flow_optical[moving] - s.flow_rigid[moving])) > 1.0


def test_simulator_rigid_flow_matches_geometry_path():
    for seed in range(3):
        s = generate_scene(_cfg(seed=seed, plane_tilt=(0.1, -0.05),
                                movers=(_mover(),),
                                ego_twist=(0.3, -0.1, 0.1, 0.01, -0.004, 0.008)))
        flow, valid = rigid_flow(s.depth, s.intrinsics, s.pose)
        assert valid.all()
        assert np.max(np.abs(flow - s.flow_rigid)) < 1e-12


def test_backward_warp_reproduces_frame_t():
    s = generate_scene(_cfg(seed=9, movers=(_mover(),)))
    warped, wmask = warp_image(s.image_t1, s.flow_optical)
    ok = (wmask > 0) & (s.occlusion_mask == 0)
    err = np.abs(warped - s.image_t)[..., 0][ok]
    assert err.mean() < 1e-3


def test_stereo_consistency():
    s = generate_scene(_cfg(seed=12))
    h, w = s.depth.shape
    disp_flow = np.zeros((h, w, 2))
    disp_flow[:, :, 0] = -s.intrinsics.fx * s.baseline / s.depth.values
    warped, wmask = warp_image(s.image_right, disp_flow)
    ok = wmask > 0
    err = np.abs(warped - s.image_t)[..., 0][ok]
    assert err.mean() < 1e-3


def test_occlusion_mask_marks_out_of_frame_targets():
    s = generate_scene(_cfg(ego_twist=(0.5, 0, 0, 0, 0, 0)))
    target_u = np.arange(96)[None, :] + s.flow_optical[:, :, 0]
    outside = (target_u < 0) | (target_u > 95)
    assert np.all(s.occlusion_mask[outside] == 1.0)
    assert np.all(s.occlusion_mask[~outside] == 0.0)


def test_occlusion_mask_covers_mover_leading_edge():
    # the mover slides right; background to its right gets covered in t+1
    m = _mover(rect=(30, 20, 50, 36), velocity=(0.3, 0.0, 0.0))
    s = generate_scene(_cfg(movers=(m,), ego_twist=(0, 0, 0, 0, 0, 0)))
    band = s.occlusion_mask[22:34, 50:54]
    assert band.mean() > 0.5


def test_mover_outside_frame_rejected():
    with pytest.raises(ValueError):
        _cfg(movers=(_mover(rect=(80, 20, 120, 36)),))


def test_mover_behind_background_rejected():
    with pytest.raises(ValueError):
        _cfg(movers=(_mover(depth=50.0),))


def test_perturb_flow_zero_amplitude_identity():
    s = generate_scene(_cfg(seed=1))
    out = perturb_flow(s.flow_optical, 0.0, seed=4)
    assert np.array_equal(out, s.flow_optical)
    assert out is not s.flow_optical


def test_perturb_flow_rms_amplitude():
    base = np.zeros((64, 96, 2))
    for seed in range(20):
        noisy = perturb_flow(base, 2.0, correlation_px=12.0, seed=seed)
        rms = np.sqrt(((noisy - base) ** 2).sum(axis=2).mean())
        assert abs(rms - 2.0) <= 0.2


def test_perturb_depth():
    s = generate_scene(_cfg(seed=2))
    same = perturb_depth(s.depth, 0.0, seed=1)
    assert np.array_equal(same.values, s.depth.values)
    noisy = perturb_depth(s.depth, 0.02, seed=1)
    rel = np.abs(noisy.values / s.depth.values - 1.0)
    assert 0.005 < rel.mean() < 0.05
    assert noisy.values.min() > 0


def test_save_load_round_trip(tmp_path):
    s = generate_scene(_cfg(seed=8, movers=(_mover(),)))
    save_sample(s, tmp_path / "sample")
    back = load_sample(tmp_path / "sample")
    assert np.array_equal(back.flow_optical.astype(np.float32),
                          s.flow_optical.astype(np.float32))
    assert np.array_equal(back.depth.values.astype(np.float32),
                          s.depth.values.astype(np.float32))
    assert np.array_equal(back.moving_mask, s.moving_mask)
    assert np.array_equal(back.occlusion_mask, s.occlusion_mask)
    assert np.allclose(back.pose.R, s.pose.R)
    assert back.baseline == s.baseline
    # images are 8-bit quantized and channel-replicated on reload
    assert back.image_t.shape == (64, 96, 3)
    assert np.max(np.abs(back.image_t[..., 0] - s.image_t[..., 0])) <= 1.0 / 255.0 + 1e-9
