"""Direct-field trainer: per-pixel raw fields optimized by SGD with momentum.

Stands in for an encoder-decoder network at desk scale. Every pixel owns its
own raw embedding, raw variance and heat logit; :func:`forward` maps them to a
:class:`FieldSet` and the losses are minimized directly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .inference import FieldSet
from .losses import Gradients, LossConfig, total_loss
from .mixing import MixingSpec, apply_mixing, apply_variance_policy
from .volume import FormatError, InstanceLabeling, VolumeDims, coordinate_grid

log = logging.getLogger(__name__)

INIT_VARIANCE = 0.1
INIT_HEAT_LOGIT = -2.0
INIT_EMBED_STD = 1e-3
CONVERGENCE_WINDOW = 50


class DivergenceError(RuntimeError):
    pass


def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def inverse_softplus(y):
    return np.log(np.expm1(y))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class RawFields:
    raw_embeddings: np.ndarray
    raw_variances: np.ndarray
    heat_logits: np.ndarray

    def __post_init__(self):
        self.raw_embeddings = np.asarray(self.raw_embeddings, dtype=np.float64)
        self.raw_variances = np.asarray(self.raw_variances, dtype=np.float64)
        self.heat_logits = np.asarray(self.heat_logits, dtype=np.float64).ravel()
        n = self.raw_embeddings.shape[0]
        if self.raw_variances.shape != self.raw_embeddings.shape or self.heat_logits.shape != (n,):
            raise ValueError("raw field shapes are inconsistent")

    def copy(self) -> "RawFields":
        return RawFields(self.raw_embeddings.copy(), self.raw_variances.copy(), self.heat_logits.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.raw_embeddings.ravel(), self.raw_variances.ravel(), self.heat_logits])

    @classmethod
    def from_flat(cls, x: np.ndarray, n: int, dim: int) -> "RawFields":
        a = n * dim
        return cls(x[:a].reshape(n, dim), x[a:2 * a].reshape(n, dim), x[2 * a:])


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    momentum: float = 0.9
    decay: float = 0.9997
    max_steps: int = 3000
    tol: float = 1e-6
    seed: int = 0
    pixel_scaled: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")


def forward(raw: RawFields, dims: VolumeDims, spec: MixingSpec,
            coords: np.ndarray | None = None) -> FieldSet:
    if raw.raw_embeddings.shape != (dims.n_pixels, spec.dim):
        raise ValueError(f"raw fields must be {dims.n_pixels} x {spec.dim}, got {raw.raw_embeddings.shape}")
    if coords is None:
        coords = coordinate_grid(dims)
    emb = apply_mixing(raw.raw_embeddings, coords, spec)
    var = apply_variance_policy(softplus(raw.raw_variances), spec)
    return FieldSet(dims, emb, var, sigmoid(raw.heat_logits))


def backward(raw: RawFields, fields: FieldSet, grads: Gradients, spec: MixingSpec) -> RawFields:
    """Chain field gradients back to the raw parameters."""
    g_var = grads.variances * sigmoid(raw.raw_variances)
    g_var[:, spec.free_slice] = 0.0
    h = fields.heat
    return RawFields(grads.embeddings.copy(), g_var, grads.heat * h * (1.0 - h))


def loss_and_grad(raw: RawFields, dims: VolumeDims, gt: InstanceLabeling, spec: MixingSpec,
                  loss_cfg: LossConfig = LossConfig(), coords=None, targets=None):
    fields = forward(raw, dims, spec, coords)
    breakdown, grads = total_loss(fields, gt, loss_cfg, targets)
    return breakdown, backward(raw, fields, grads, spec)


def init_fields(dims: VolumeDims, spec: MixingSpec, seed: int) -> RawFields:
    rng = np.random.default_rng(seed)
    n = dims.n_pixels
    return RawFields(
        raw_embeddings=rng.normal(0.0, INIT_EMBED_STD, size=(n, spec.dim)),
        raw_variances=np.full((n, spec.dim), inverse_softplus(INIT_VARIANCE)),
        heat_logits=np.full(n, INIT_HEAT_LOGIT),
    )


@dataclass
class TrainResult:
    raw: RawFields
    history: list = field(default_factory=list)   # LossBreakdown per step
    steps: int = 0
    converged: bool = False


def has_converged(losses, tol: float, window: int = CONVERGENCE_WINDOW) -> bool:
    """True once every loss change within the last ``window`` steps is below ``tol``.

    Comparing only the two window endpoints can fire by chance while the loss
    still oscillates, so the whole window's spread is used.
    """
    if len(losses) <= window:
        return False
    recent = losses[-1 - window:]
    return max(recent) - min(recent) < tol


def optimize_fields(gt: InstanceLabeling, spec: MixingSpec, opt: OptimConfig = OptimConfig(),
                    loss_cfg: LossConfig = LossConfig(), init: RawFields | None = None) -> TrainResult:
    """Minimize the total loss over raw per-pixel fields.

    With ``opt.pixel_scaled`` the gradient is multiplied by the pixel count,
    i.e. each pixel's parameters follow the gradient of the summed rather
    than the averaged loss, which keeps the step size independent of N.
    """
    if gt.n_instances == 0:
        raise ValueError("ground truth has no instances")
    dims = gt.dims
    coords = coordinate_grid(dims)
    raw = init.copy() if init is not None else init_fields(dims, spec, opt.seed)
    scale = float(dims.n_pixels) if opt.pixel_scaled else 1.0
    x = raw.flat()
    velocity = np.zeros_like(x)
    lr = opt.lr
    result = TrainResult(raw=raw)
    losses = []

    for step in range(opt.max_steps):
        cur = RawFields.from_flat(x, dims.n_pixels, spec.dim)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite parameters at step {step}, lr={lr:.3g}")
        try:
            breakdown, g = loss_and_grad(cur, dims, gt, spec, loss_cfg, coords)
        except ValueError as exc:
            # shapes were checked up front, so this is a variance underflow or similar
            raise DivergenceError(f"fields left their valid range at step {step}: {exc}") from None
        if not np.isfinite(breakdown.total):
            raise DivergenceError(
                f"non-finite loss at step {step}: emb={breakdown.emb} smooth={breakdown.smooth} "
                f"center={breakdown.center} lr={lr:.3g}")
        result.history.append(breakdown)
        losses.append(breakdown.total)
        velocity = opt.momentum * velocity - lr * scale * g.flat()
        x = x + velocity
        lr *= opt.decay
        if has_converged(losses, opt.tol):
            result.converged = True
            result.steps = step + 1
            break
    else:
        result.steps = opt.max_steps

    result.raw = RawFields.from_flat(x, dims.n_pixels, spec.dim) if opt.max_steps else raw
    log.debug("optimized %d steps, final loss %.5f", result.steps,
              losses[-1] if losses else float("nan"))
    return result


# ---------------------------------------------------------------------------
# checkpoints: an optional "dims T H W" line, then blocks of
# "field <name> <E> <N>" followed by N rows of E floats

_FIELD_NAMES = ("raw_embeddings", "raw_variances", "heat_logits")


def format_raw_fields(raw: RawFields, dims: VolumeDims | None = None) -> str:
    out = [f"dims {dims.t_len} {dims.height} {dims.width}\n"] if dims is not None else []
    for name in _FIELD_NAMES:
        arr = getattr(raw, name)
        arr2 = arr.reshape(arr.shape[0], -1)
        out.append(f"field {name} {arr2.shape[1]} {arr2.shape[0]}\n")
        out.extend(" ".join(repr(float(v)) for v in row) + "\n" for row in arr2)
    return "".join(out)


def parse_raw_fields(text: str) -> tuple[RawFields, VolumeDims | None]:
    try:
        return _parse_raw_fields(text)
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def _parse_raw_fields(text: str) -> tuple[RawFields, VolumeDims | None]:
    lines = text.splitlines()
    blocks = {}
    dims = None
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "dims" and len(parts) == 4 and not blocks:
            dims = VolumeDims(*(int(p) for p in parts[1:]))
            i += 1
            continue
        if len(parts) != 4 or parts[0] != "field" or parts[1] not in _FIELD_NAMES:
            raise FormatError(f"bad field header: {lines[i]!r}")
        name, dim, n = parts[1], int(parts[2]), int(parts[3])
        rows = [ln.split() for ln in lines[i + 1:i + 1 + n]]
        if len(rows) != n or any(len(r) != dim for r in rows):
            raise FormatError(f"field {name}: expected {n} rows of {dim} values")
        blocks[name] = np.array(rows, dtype=np.float64).reshape(n, dim)
        i += 1 + n
    missing = set(_FIELD_NAMES) - set(blocks)
    if missing:
        raise FormatError(f"missing fields: {sorted(missing)}")
    raw = RawFields(blocks["raw_embeddings"], blocks["raw_variances"], blocks["heat_logits"].ravel())
    if dims is not None and dims.n_pixels != raw.raw_embeddings.shape[0]:
        raise FormatError("dims header disagrees with the field size")
    return raw, dims


def write_raw_fields(path, raw: RawFields, dims: VolumeDims | None = None) -> None:
    Path(path).write_text(format_raw_fields(raw, dims))


def read_raw_fields(path) -> tuple[RawFields, VolumeDims | None]:
    return parse_raw_fields(Path(path).read_text())


def write_history(path, history) -> None:
    lines = ["step,emb,smooth,center,total\n"]
    lines += [f"{i},{b.emb!r},{b.smooth!r},{b.center!r},{b.total!r}\n" for i, b in enumerate(history)]
    Path(path).write_text("".join(lines))
