"""Synthetic scene generator with closed-form ground truth.

Scenes are piecewise planar: a (possibly tilted) background plane plus
fronto-parallel rectangular movers that translate independently between the
two frames.  Every output (images, depth, stereo pair, flows, masks) comes
from exact ray-plane intersection against procedurally textured surfaces, so
the generator serves as an independent oracle for the geometry and loss
code paths.  Everything is deterministic per seed.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import flowio
from .geometry import CameraPose, DepthMap, Intrinsics, se3_exp

_RAY_EPS = 1e-9


@dataclass(frozen=True)
class Mover:
    """Fronto-parallel rectangle at `depth`, covering pixel rect
    [u0, u1) x [v0, v1) in frame t, translating by `velocity` (scene units)
    between the frames."""

    rect: tuple
    depth: float
    velocity: tuple

    def to_dict(self):
        return {"rect": list(self.rect), "depth": self.depth,
                "velocity": list(self.velocity)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["rect"]), float(d["depth"]), tuple(d["velocity"]))


@dataclass(frozen=True)
class TextureConfig:
    """Multi-octave value-noise texture; cells are in scene units."""

    cells: tuple = (3.2, 1.6, 0.8)
    amplitudes: tuple = (0.5, 0.3, 0.2)
    contrast: float = 0.8

    def to_dict(self):
        return {"cells": list(self.cells), "amplitudes": list(self.amplitudes),
                "contrast": self.contrast}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["cells"]), tuple(d["amplitudes"]), float(d["contrast"]))


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 96
    intrinsics: Intrinsics = Intrinsics(100.0, 100.0, 47.5, 31.5)
    baseline: float = 0.3
    ego_twist: tuple = (0.2, 0.0, 0.05, 0.0, 0.002, 0.0)
    plane_depth: float = 10.0
    plane_tilt: tuple = (0.0, 0.0)
    movers: tuple = field(default_factory=tuple)
    texture: TextureConfig = TextureConfig()
    seed: int = 0

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ValueError("grid must be at least 16x16")
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")
        if self.plane_depth <= 0:
            raise ValueError("plane depth must be positive")
        if max(abs(t) for t in self.plane_tilt) > 0.4:
            raise ValueError("plane tilt is limited to |t| <= 0.4")
        for m in self.movers:
            u0, v0, u1, v1 = m.rect
            if not (0 <= u0 < u1 <= self.width and 0 <= v0 < v1 <= self.height):
                raise ValueError(f"mover rect {m.rect} is outside the frame")
            if m.depth <= 0:
                raise ValueError("mover depth must be positive")
            if m.depth >= self._plane_depth_at(u0, v0) or \
                    m.depth >= self._plane_depth_at(u1 - 1, v1 - 1):
                raise ValueError("mover must be nearer than the background")

    def _plane_depth_at(self, u, v):
        n, h = _plane_of(self)
        ray = np.array([(u - self.intrinsics.cx) / self.intrinsics.fx,
                        (v - self.intrinsics.cy) / self.intrinsics.fy, 1.0])
        return h / float(n @ ray)

    def to_dict(self):
        return {
            "height": self.height, "width": self.width,
            "intrinsics": self.intrinsics.to_dict(),
            "baseline": self.baseline,
            "ego_twist": list(self.ego_twist),
            "plane_depth": self.plane_depth,
            "plane_tilt": list(self.plane_tilt),
            "movers": [m.to_dict() for m in self.movers],
            "texture": self.texture.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            height=int(d.get("height", 64)), width=int(d.get("width", 96)),
            intrinsics=Intrinsics.from_dict(d["intrinsics"]) if "intrinsics" in d
            else SceneConfig.__dataclass_fields__["intrinsics"].default,
            baseline=float(d.get("baseline", 0.3)),
            ego_twist=tuple(d.get("ego_twist", (0, 0, 0, 0, 0, 0))),
            plane_depth=float(d.get("plane_depth", 10.0)),
            plane_tilt=tuple(d.get("plane_tilt", (0.0, 0.0))),
            movers=tuple(Mover.from_dict(m) for m in d.get("movers", [])),
            texture=TextureConfig.from_dict(d["texture"]) if "texture" in d
            else TextureConfig(),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class SceneSample:
    """Everything the pipeline consumes, with exact ground truth attached."""

    image_t: np.ndarray
    image_t1: np.ndarray
    image_right: np.ndarray
    depth: DepthMap
    depth_right: DepthMap
    pose: CameraPose
    intrinsics: Intrinsics
    baseline: float
    flow_optical: np.ndarray
    flow_rigid: np.ndarray
    moving_mask: np.ndarray
    occlusion_mask: np.ndarray
    seed: int
    config: dict


def _plane_of(cfg):
    """Background plane as (unit normal, offset): n . X = h, passing through
    (0, 0, plane_depth)."""
    n = np.array([cfg.plane_tilt[0], cfg.plane_tilt[1], 1.0])
    n = n / np.linalg.norm(n)
    return n, n[2] * cfg.plane_depth


_H1 = np.uint64(0x9E3779B97F4A7C15)
_H2 = np.uint64(0xC2B2AE3D27D4EB4F)
_H3 = np.uint64(0xD6E8FEB86659FD93)


def _hash01(ix, iy, key):
    key_mixed = np.uint64((int(key) * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
    z = ix.astype(np.uint64) * _H1 ^ iy.astype(np.uint64) * _H2 ^ key_mixed
    z = (z ^ (z >> np.uint64(31))) * _H3
    z = z ^ (z >> np.uint64(29))
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _value_noise(x, y, cell, key):
    gx = x / cell
    gy = y / cell
    ix = np.floor(gx).astype(np.int64)
    iy = np.floor(gy).astype(np.int64)
    fx = _smoothstep(gx - ix)
    fy = _smoothstep(gy - iy)
    h00 = _hash01(ix, iy, key)
    h10 = _hash01(ix + 1, iy, key)
    h01 = _hash01(ix, iy + 1, key)
    h11 = _hash01(ix + 1, iy + 1, key)
    top = h00 + fx * (h10 - h00)
    bottom = h01 + fx * (h11 - h01)
    return top + fy * (bottom - top)


def _texture(x, y, key, tex):
    total = np.zeros_like(x)
    norm = 0.0
    for i, (cell, amp) in enumerate(zip(tex.cells, tex.amplitudes)):
        total = total + amp * _value_noise(x, y, cell, key + 101 * i)
        norm += amp
    v = total / norm
    return np.clip(0.5 + tex.contrast * (v - 0.5), 0.02, 0.98)


def _pixel_rays(intr, h, w, pixels=None):
    if pixels is None:
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    else:
        xs, ys = pixels[..., 0], pixels[..., 1]
    return np.stack([(xs - intr.cx) / intr.fx, (ys - intr.cy) / intr.fy,
                     np.ones_like(xs)], axis=-1)


def _mover_bounds(mover, intr, at_t1):
    u0, v0, u1, v1 = mover.rect
    z = mover.depth
    x0 = (u0 - intr.cx) / intr.fx * z
    x1 = (u1 - intr.cx) / intr.fx * z
    y0 = (v0 - intr.cy) / intr.fy * z
    y1 = (v1 - intr.cy) / intr.fy * z
    if at_t1:
        vx, vy, vz = mover.velocity
        return (x0 + vx, x1 + vx, y0 + vy, y1 + vy, z + vz)
    return (x0, x1, y0, y1, z)


def _raycast(cfg, origin, dirs, at_t1):
    """Nearest surface along each ray.  Returns (surface id, hit points);
    id 0 is the background, movers are 1-based in config order."""
    n, h = _plane_of(cfg)
    denom = dirs @ n
    s_bg = np.where(np.abs(denom) > _RAY_EPS, (h - origin @ n) / denom, np.inf)
    s_bg = np.where(s_bg > _RAY_EPS, s_bg, np.inf)

    candidates = [s_bg]
    for mover in cfg.movers:
        x0, x1, y0, y1, z = _mover_bounds(mover, cfg.intrinsics, at_t1)
        dz = dirs[..., 2]
        s = np.where(np.abs(dz) > _RAY_EPS, (z - origin[2]) / dz, np.inf)
        px = origin[0] + s * dirs[..., 0]
        py = origin[1] + s * dirs[..., 1]
        inside = (s > _RAY_EPS) & (px >= x0) & (px < x1) & (py >= y0) & (py < y1)
        candidates.append(np.where(inside, s, np.inf))

    stack = np.stack(candidates, axis=0)
    sid = np.argmin(stack, axis=0)
    s_hit = np.take_along_axis(stack, sid[None], axis=0)[0]
    if not np.all(np.isfinite(s_hit)):
        raise ValueError("a ray misses every surface; check plane tilt")
    points = origin + s_hit[..., None] * dirs
    return sid, points


def _shade(cfg, sid, points, at_t1):
    tex = cfg.texture
    img = _texture(points[..., 0], points[..., 1], 7919 * (cfg.seed + 1), tex)
    for i, mover in enumerate(cfg.movers, start=1):
        dx, dy = (mover.velocity[0], mover.velocity[1]) if at_t1 else (0.0, 0.0)
        local = _texture(points[..., 0] - dx, points[..., 1] - dy,
                         7919 * (cfg.seed + 1) + 131 * i, tex)
        img = np.where(sid == i, local, img)
    return img[..., None]


def _project_pixels(intr, pts):
    z = pts[..., 2]
    return np.stack([intr.fx * pts[..., 0] / z + intr.cx,
                     intr.fy * pts[..., 1] / z + intr.cy], axis=-1)


def _motion_flow(intr, pose, rays, ray_depth, offsets):
    """Flow of ray-cast points moved by `offsets` then by the camera pose.

    Works on the 1/depth-scaled homogeneous point so that identity motion
    with zero offsets yields exactly zero flow in floating point."""
    shift = (offsets @ pose.R.T + pose.t) / ray_depth[..., None]
    q = rays @ pose.R.T + shift
    qz = q[..., 2]
    return np.stack([intr.fx * (q[..., 0] / qz - rays[..., 0]),
                     intr.fy * (q[..., 1] / qz - rays[..., 1])], axis=-1)


def _velocity_field(cfg, sid):
    vel = np.zeros(sid.shape + (3,))
    for i, mover in enumerate(cfg.movers, start=1):
        vel[sid == i] = mover.velocity
    return vel


def generate_scene(cfg):
    """Render a SceneSample with exact ground truth; deterministic per seed."""
    intr = cfg.intrinsics
    h, w = cfg.height, cfg.width
    pose = se3_exp(cfg.ego_twist)

    rays = _pixel_rays(intr, h, w)
    sid_t, pts_t = _raycast(cfg, np.zeros(3), rays, at_t1=False)
    image_t = _shade(cfg, sid_t, pts_t, at_t1=False)
    depth = DepthMap.from_array(pts_t[..., 2])

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    pix_t = np.stack([xs, ys], axis=-1)

    ray_depth = pts_t[..., 2]
    flow_rigid = _motion_flow(intr, pose, rays, ray_depth, np.zeros(pts_t.shape))
    velocity = _velocity_field(cfg, sid_t)
    advected = pts_t + velocity
    flow_optical = _motion_flow(intr, pose, rays, ray_depth, velocity)
    moving_mask = (np.linalg.norm(velocity, axis=-1) > 0).astype(np.float64)

    # frame t+1: camera moved by the pose, movers by their velocities
    cam_origin = -pose.R.T @ pose.t
    dirs_t1 = rays @ pose.R  # R^T applied to each K^-1 ray
    sid_t1, pts_t1 = _raycast(cfg, cam_origin, dirs_t1, at_t1=True)
    image_t1 = _shade(cfg, sid_t1, pts_t1, at_t1=True)

    # right view at time t (rectified: right camera at +baseline along x)
    right_origin = np.array([cfg.baseline, 0.0, 0.0])
    sid_r, pts_r = _raycast(cfg, right_origin, rays, at_t1=False)
    image_right = _shade(cfg, sid_r, pts_r, at_t1=False)
    depth_right = DepthMap.from_array(pts_r[..., 2])

    # occlusion: flow target out of frame, or the advected point is covered
    # by a nearer surface in the t+1 view
    target = pix_t + flow_optical
    inside = (target[..., 0] >= 0) & (target[..., 0] <= w - 1) & \
             (target[..., 1] >= 0) & (target[..., 1] <= h - 1)
    vis_rays = _pixel_rays(intr, h, w, pixels=target) @ pose.R
    sid_vis, pts_vis = _raycast(cfg, cam_origin, vis_rays, at_t1=True)
    same_point = np.linalg.norm(pts_vis - advected, axis=-1) <= 1e-6 * cfg.plane_depth
    occluded = ~inside | ~(same_point & (sid_vis == sid_t))

    return SceneSample(
        image_t=image_t, image_t1=image_t1, image_right=image_right,
        depth=depth, depth_right=depth_right, pose=pose, intrinsics=intr,
        baseline=cfg.baseline, flow_optical=flow_optical,
        flow_rigid=flow_rigid, moving_mask=moving_mask,
        occlusion_mask=occluded.astype(np.float64),
        seed=cfg.seed, config=cfg.to_dict(),
    )


def _unit_rms_field(shape, correlation_px, channels, rng):
    """Smooth random field with approximately unit RMS magnitude."""
    h, w = shape
    cell = max(float(correlation_px), 1.0)
    gh = int(np.floor((h - 1) / cell)) + 2
    gw = int(np.floor((w - 1) / cell)) + 2
    lattice = rng.standard_normal((gh, gw, channels))
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64) / cell,
                         np.arange(w, dtype=np.float64) / cell, indexing="ij")
    iy = np.floor(ys).astype(np.intp)
    ix = np.floor(xs).astype(np.intp)
    fy = _smoothstep(ys - iy)[:, :, None]
    fx = _smoothstep(xs - ix)[:, :, None]
    v00 = lattice[iy, ix]
    v10 = lattice[iy, ix + 1]
    v01 = lattice[iy + 1, ix]
    v11 = lattice[iy + 1, ix + 1]
    top = v00 + fx * (v10 - v00)
    bottom = v01 + fx * (v11 - v01)
    return top + fy * (bottom - top)


def perturb_flow(flow, amplitude_px, correlation_px=16.0, seed=0):
    """Add seeded band-limited noise with RMS magnitude `amplitude_px`.

    Amplitude zero returns the input unchanged (bit-exact copy)."""
    flow = np.asarray(flow, dtype=np.float64)
    if amplitude_px < 0:
        raise ValueError("amplitude must be >= 0")
    if amplitude_px == 0:
        return flow.copy()
    rng = np.random.default_rng(seed)
    noise = _unit_rms_field(flow.shape[:2], correlation_px, 2, rng)
    rms = np.sqrt((noise ** 2).sum(axis=2).mean())
    if rms < 1e-12:
        return flow.copy()
    return flow + noise * (amplitude_px / rms)


def perturb_depth(depth_map, rel_sigma, seed=0, correlation_px=16.0):
    """Multiplicative band-limited depth noise; rel_sigma 0 is the identity."""
    if rel_sigma < 0:
        raise ValueError("rel_sigma must be >= 0")
    if rel_sigma == 0:
        return DepthMap(depth_map.values.copy(), depth_map.valid.copy())
    rng = np.random.default_rng(seed)
    noise = _unit_rms_field(depth_map.shape, correlation_px, 1, rng)[:, :, 0]
    rms = np.sqrt((noise ** 2).mean())
    if rms >= 1e-12:
        noise = noise / rms
    factor = np.maximum(1.0 + rel_sigma * noise, 0.05)
    return DepthMap(depth_map.values * factor, depth_map.valid.copy())


_SAMPLE_FILES = {
    "image_t": "image_t.ppm",
    "image_t1": "image_t1.ppm",
    "image_right": "image_right.ppm",
    "depth": "depth.pfm",
    "depth_right": "depth_right.pfm",
    "pose": "pose.json",
    "intrinsics": "intrinsics.json",
    "flow_optical": "flow_optical.flo",
    "flow_rigid": "flow_rigid.flo",
    "moving_mask": "moving_mask.png",
    "occlusion_mask": "occlusion_mask.png",
}


def save_sample(sample, out_dir):
    """Write a sample directory with a manifest inventory."""
    os.makedirs(out_dir, exist_ok=True)
    join = lambda name: os.path.join(out_dir, _SAMPLE_FILES[name])
    flowio.write_image(join("image_t"), sample.image_t)
    flowio.write_image(join("image_t1"), sample.image_t1)
    flowio.write_image(join("image_right"), sample.image_right)
    flowio.write_pfm(join("depth"), sample.depth.values)
    flowio.write_pfm(join("depth_right"), sample.depth_right.values)
    flowio.write_json(join("pose"), sample.pose.to_dict())
    flowio.write_json(join("intrinsics"),
                      dict(sample.intrinsics.to_dict(), baseline=sample.baseline))
    flowio.write_flo(join("flow_optical"), sample.flow_optical)
    flowio.write_flo(join("flow_rigid"), sample.flow_rigid)
    flowio.write_mask_png(join("moving_mask"), sample.moving_mask)
    flowio.write_mask_png(join("occlusion_mask"), sample.occlusion_mask)
    manifest = flowio.build_manifest(sample.seed, sample.config, _SAMPLE_FILES)
    flowio.write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def load_sample(sample_dir):
    """Load a sample directory written by save_sample.

    Images come back 8-bit quantized and 3-channel; flows, depths and masks
    are exact."""
    manifest = flowio.check_manifest(
        flowio.read_json(os.path.join(sample_dir, "manifest.json")))
    files = manifest["files"]
    join = lambda name: os.path.join(sample_dir, files[name])
    intr_doc = flowio.read_json(join("intrinsics"))
    baseline = float(intr_doc.pop("baseline"))
    return SceneSample(
        image_t=flowio.read_image(join("image_t")),
        image_t1=flowio.read_image(join("image_t1")),
        image_right=flowio.read_image(join("image_right")),
        depth=DepthMap.from_array(flowio.read_pfm(join("depth"))),
        depth_right=DepthMap.from_array(flowio.read_pfm(join("depth_right"))),
        pose=CameraPose.from_dict(flowio.read_json(join("pose"))),
        intrinsics=Intrinsics.from_dict(intr_doc),
        baseline=baseline,
        flow_optical=flowio.read_flo(join("flow_optical")),
        flow_rigid=flowio.read_flo(join("flow_rigid")),
        moving_mask=(flowio.read_mask_png(join("moving_mask")) > 0.5).astype(np.float64),
        occlusion_mask=(flowio.read_mask_png(join("occlusion_mask")) > 0.5).astype(np.float64),
        seed=int(manifest["seed"]),
        config=manifest["config"],
    )
