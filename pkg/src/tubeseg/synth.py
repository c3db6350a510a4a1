"""Synthetic labelings: moving shapes and image-to-clip affine jitter."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import InstanceLabeling, VolumeDims

SHAPES = ("rect", "disk")


@dataclass(frozen=True)
class SynthConfig:
    dims: VolumeDims = VolumeDims(8, 48, 48)
    num_instances: int = 2
    shapes: tuple[str, ...] = SHAPES
    max_speed: float = 1.5            # pixels / frame, per axis
    size_range: tuple[int, int] = (10, 18)
    allow_enter_exit: bool = False
    # minimum pixel gap between bounding boxes in every frame; None allows occlusion
    min_gap: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_instances < 0:
            raise ValueError("num_instances must be >= 0")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise ValueError(f"shapes must be a non-empty subset of {SHAPES}")
        lo, hi = self.size_range
        if not 1 <= lo <= hi:
            raise ValueError("size_range must satisfy 1 <= min <= max")
        if hi > min(self.dims.height, self.dims.width):
            raise ValueError("shapes larger than the frame are infeasible")
        if self.max_speed < 0:
            raise ValueError("max_speed must be non-negative")


@dataclass
class Trajectory:
    instance_id: int
    kind: str
    size: tuple[int, int]                       # (height, width) extent in pixels
    velocity: tuple[float, float]               # (vx, vy) pixels / frame
    centers: list[tuple[float, float]] = field(default_factory=list)   # (cx, cy) per frame


def _start_range(half: float, extent: int, travel: float, allow_exit: bool):
    if allow_exit:
        return 0.0, extent - 1.0
    lo = half - min(0.0, travel)
    hi = extent - 1.0 - half - max(0.0, travel)
    return lo, hi


def _sample_trajectory(rng, k: int, cfg: SynthConfig) -> Trajectory:
    dims = cfg.dims
    kind = str(rng.choice(cfg.shapes))
    lo, hi = cfg.size_range
    if kind == "disk":
        d = int(rng.integers(lo, hi + 1))
        size = (d, d)
    else:
        size = (int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)))
    span = dims.t_len - 1
    centers_axes, vel = [], []
    for extent, s in ((dims.width, size[1]), (dims.height, size[0])):
        half = (s - 1) / 2.0
        v = float(rng.uniform(-cfg.max_speed, cfg.max_speed))
        start_lo, start_hi = _start_range(half, extent, v * span, cfg.allow_enter_exit)
        if start_lo > start_hi:
            # slow down until the shape stays inside for the whole clip
            room = max(0.0, extent - 1.0 - 2 * half)
            v = float(np.sign(v) * min(abs(v), room / span if span else 0.0))
            start_lo, start_hi = _start_range(half, extent, v * span, cfg.allow_enter_exit)
        c0 = float(rng.uniform(start_lo, start_hi))
        centers_axes.append([c0 + v * t for t in range(dims.t_len)])
        vel.append(v)
    centers = list(zip(centers_axes[0], centers_axes[1]))
    return Trajectory(k, kind, size, (vel[0], vel[1]), centers)


def _shape_mask(traj: Trajectory, t: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    cx, cy = traj.centers[t]
    h, w = traj.size
    if traj.kind == "disk":
        r = (h - 1) / 2.0 + 0.5
        return (cols - cx) ** 2 + (rows - cy) ** 2 <= r * r
    return (np.abs(cols - cx) <= (w - 1) / 2.0 + 1e-9) & (np.abs(rows - cy) <= (h - 1) / 2.0 + 1e-9)


def _boxes_clear(a: Trajectory, b: Trajectory, gap: int) -> bool:
    for (ax, ay), (bx, by) in zip(a.centers, b.centers):
        dx = abs(ax - bx) - (a.size[1] + b.size[1]) / 2.0
        dy = abs(ay - by) - (a.size[0] + b.size[0]) / 2.0
        if max(dx, dy) < gap:
            return False
    return True


def render_labels(dims: VolumeDims, trajectories: list[Trajectory]) -> np.ndarray:
    rows, cols = np.mgrid[0:dims.height, 0:dims.width]
    labels = np.zeros(dims.shape, dtype=np.int64)
    for t in range(dims.t_len):
        # increasing id order: the higher id is in front
        for traj in trajectories:
            labels[t][_shape_mask(traj, t, rows, cols)] = traj.instance_id
    return labels


def generate_clip(cfg: SynthConfig, max_tries: int = 1000) -> tuple[InstanceLabeling, list[Trajectory]]:
    """Constant-velocity shapes rendered into a ground-truth labeling."""
    rng = np.random.default_rng(cfg.seed)
    trajectories: list[Trajectory] = []
    for k in range(1, cfg.num_instances + 1):
        for _ in range(max_tries):
            traj = _sample_trajectory(rng, k, cfg)
            if cfg.min_gap is None or all(_boxes_clear(traj, o, cfg.min_gap) for o in trajectories):
                break
        else:
            raise ValueError(f"could not place instance {k} with min_gap={cfg.min_gap}")
        trajectories.append(traj)
    labels = render_labels(cfg.dims, trajectories)
    return InstanceLabeling(cfg.dims, labels), trajectories


# ---------------------------------------------------------------------------
# image-to-clip augmentation


@dataclass(frozen=True)
class AffineJitterConfig:
    rotation_deg: float = 10.0
    translate_frac: float = 0.1
    scale_range: tuple[float, float] = (0.8, 1.2)
    seed: int = 0

    def __post_init__(self):
        if self.rotation_deg < 0 or self.translate_frac < 0:
            raise ValueError("jitter ranges must be non-negative")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < min <= max")


@dataclass(frozen=True)
class AffineParams:
    angle_deg: float
    tx: float   # pixels, along columns
    ty: float   # pixels, along rows
    scale: float


def sample_affine(rng, cfg: AffineJitterConfig, height: int, width: int) -> AffineParams:
    return AffineParams(
        angle_deg=float(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)),
        tx=float(rng.uniform(-cfg.translate_frac, cfg.translate_frac) * width),
        ty=float(rng.uniform(-cfg.translate_frac, cfg.translate_frac) * height),
        scale=float(rng.uniform(*cfg.scale_range)),
    )


def affine_warp_labels(labels: np.ndarray, params: AffineParams) -> np.ndarray:
    """Nearest-neighbour warp of a 2-D label image about its centre.

    Output pixels whose source falls outside the image become background.
    """
    h, w = labels.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    th = np.deg2rad(params.angle_deg)
    c, s = np.cos(th), np.sin(th)
    # invert q = c + scale * R (p - c) + t
    qx = cols - cx - params.tx
    qy = rows - cy - params.ty
    px = (c * qx + s * qy) / params.scale + cx
    py = (-s * qx + c * qy) / params.scale + cy
    src_c = np.rint(px).astype(np.int64)
    src_r = np.rint(py).astype(np.int64)
    inside = (src_c >= 0) & (src_c < w) & (src_r >= 0) & (src_r < h)
    out = np.zeros_like(labels)
    out[inside] = labels[src_r[inside], src_c[inside]]
    return out


def augment_image_to_clip(base: InstanceLabeling, t_len: int,
                          cfg: AffineJitterConfig = AffineJitterConfig()) -> InstanceLabeling:
    """Frame 0 is the base; every later frame is an independent jitter of it."""
    if base.dims.t_len != 1:
        raise ValueError("base labeling must be a single frame")
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    frame0 = base.labels[0]
    frames = [frame0.copy()]
    for _ in range(1, t_len):
        params = sample_affine(rng, cfg, *frame0.shape)
        frames.append(affine_warp_labels(frame0, params))
    dims = VolumeDims(t_len, base.dims.height, base.dims.width)
    return InstanceLabeling(dims, np.stack(frames))
