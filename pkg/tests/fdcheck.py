"""Finite-difference check of the raw-field gradients at random points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from oracles import smoothness_signature
from tubeseg.instance_model import ProbMode
from tubeseg.losses import LossConfig, center_targets, total_loss
from tubeseg.mixing import MixingSpec
from tubeseg.trainer import RawFields, forward, loss_and_grad
from tubeseg.volume import InstanceLabeling, VolumeDims, coordinate_grid

# probes evaluated per vectorized pass
BATCH = 512


@dataclass
class FdResult:
    n_checked: int
    n_kinks: int
    max_rel_err: float     # over components with |fd| above the noise floor
    max_abs_err: float
    failures: list


def random_point(rng, dims: VolumeDims, spec: MixingSpec, max_instances: int = 3):
    n = dims.n_pixels
    k = int(rng.integers(1, max_instances + 1))
    labels = rng.integers(0, k + 1, size=n)
    for j in range(1, k + 1):
        if not np.any(labels == j):
            labels[rng.integers(n)] = j
    gt = InstanceLabeling(dims, labels.reshape(dims.shape))
    raw = RawFields(rng.normal(0.0, 0.3, (n, spec.dim)),
                    rng.uniform(-2.5, 0.5, (n, spec.dim)),
                    rng.normal(0.0, 1.0, n))
    return gt, raw


def batch_loss(xs: np.ndarray, gt: InstanceLabeling, spec: MixingSpec, cfg: LossConfig,
               coords: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Total loss at each row of ``xs`` (flat raw fields), written from the
    definitions and vectorized over rows. Values only, no gradients."""
    b = xs.shape[0]
    n, dim = gt.dims.n_pixels, spec.dim
    a = n * dim
    emb = xs[:, :a].reshape(b, n, dim) + spec.offsets(coords)
    raw_v = xs[:, a:2 * a].reshape(b, n, dim)
    var = np.logaddexp(0.0, raw_v)
    var[:, :, spec.free_slice] = spec.v_free
    heat = 1.0 / (1.0 + np.exp(-xs[:, 2 * a:]))
    labels = gt.flat()
    ids = [k for k in np.unique(labels) if k != 0]
    emb_loss = np.zeros(b)
    smooth = np.zeros(b)
    for k in ids:
        y = labels == k
        mu = emb[:, y].mean(axis=1)
        s = var[:, y].mean(axis=1)
        logp = -0.5 * (((emb - mu[:, None]) ** 2) / s[:, None]).sum(axis=2)
        if cfg.mode is ProbMode.NORMALIZED:
            logp += (-0.5 * (dim * np.log(2 * np.pi) + np.log(s).sum(axis=1)))[:, None]
        p = np.clip(np.exp(logp), cfg.eps, 1.0 - cfg.eps)
        score = np.log(p) - np.log1p(-p)
        inside = (np.exp(logp) > cfg.eps) & (np.exp(logp) < 1.0 - cfg.eps)
        score[inside] = logp[inside] - np.log(-np.expm1(logp[inside]))
        # Lovasz extension of the Jaccard loss on the full descending sort
        errors = 1.0 - score * np.where(y, 1.0, -1.0)
        order = np.argsort(-errors, axis=1)
        ys = y[order]
        n_pos = y.sum()
        jac = 1.0 - (n_pos - np.cumsum(ys, axis=1)) / (n_pos + np.cumsum(~ys, axis=1))
        weights = np.diff(jac, axis=1, prepend=0.0)
        emb_loss += (np.maximum(np.take_along_axis(errors, order, axis=1), 0.0) * weights).sum(axis=1)
        dev = var[:, y] - s[:, None]
        smooth += (dev ** 2).sum(axis=(1, 2)) / y.sum()
    k = max(len(ids), 1)
    center = ((heat - targets) ** 2).mean(axis=1)
    return cfg.w_emb * emb_loss / k + cfg.w_smooth * smooth / k + cfg.w_center * center


def check_point(gt: InstanceLabeling, raw: RawFields, spec: MixingSpec,
                cfg: LossConfig = LossConfig(), h: float = 1e-5, rtol: float = 1e-4,
                atol: float = 1e-9) -> FdResult:
    """Compare analytic and central-difference gradients for every raw parameter.

    The heat-map target is a stop-gradient quantity, so it is frozen at the
    base point for both the analytic gradient and the probes. A component that
    disagrees is counted as a kink (not a failure) only if a probe point lands
    in a different combinatorial state of the Lovasz sort or the clamp.
    """
    dims = gt.dims
    n, dim = dims.n_pixels, spec.dim
    coords = coordinate_grid(dims)
    base_fields = forward(raw, dims, spec, coords)
    targets = center_targets(base_fields, gt, cfg.mode)
    _, g = loss_and_grad(raw, dims, gt, spec, cfg, coords, targets)
    x = raw.flat()
    analytic = g.flat()

    def loss(xx):
        return loss_and_grad(RawFields.from_flat(xx, n, dim), dims, gt, spec, cfg,
                             coords, targets)[0].total

    # all +h and -h probes, evaluated in vectorized batches
    fd = np.empty(x.size)
    for lo in range(0, x.size, BATCH):
        idx = np.arange(lo, min(lo + BATCH, x.size))
        probes = np.repeat(x[None], 2 * idx.size, axis=0)
        probes[np.arange(idx.size), idx] += h
        probes[idx.size + np.arange(idx.size), idx] -= h
        vals = batch_loss(probes, gt, spec, cfg, coords, targets)
        fd[idx] = (vals[:idx.size] - vals[idx.size:]) / (2 * h)
    # the batched values must agree with the library loss itself
    base = loss(x)
    if abs(batch_loss(x[None], gt, spec, cfg, coords, targets)[0] - base) > 1e-12 * max(1.0, abs(base)):
        raise AssertionError("batched loss disagrees with the library loss")

    def state(xx):
        f = forward(RawFields.from_flat(xx, n, dim), dims, spec, coords)
        return smoothness_signature(f.embeddings, f.variances, gt.labels, cfg.eps,
                                    cfg.mode is ProbMode.NORMALIZED)

    base_state = None
    kinks, failures = 0, []
    max_rel = max_abs = 0.0
    for i in range(x.size):
        d = fd[i]
        err = abs(d - analytic[i])
        if err > rtol * abs(d) + atol:
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            # recheck with the library loss before calling it a kink or a failure
            d = (loss(xp) - loss(xm)) / (2 * h)
            err = abs(d - analytic[i])
        if err > rtol * abs(d) + atol:
            if base_state is None:
                base_state = state(x)
            if state(xp) != base_state or state(xm) != base_state:
                kinks += 1
                continue
            failures.append((i, analytic[i], d))
        max_abs = max(max_abs, err)
        if abs(d) > 1e-6:
            max_rel = max(max_rel, err / abs(d))
    return FdResult(x.size - kinks, kinks, max_rel, max_abs, failures)


def total_loss_value(fields, gt, cfg=LossConfig(), targets=None) -> float:
    return total_loss(fields, gt, cfg, targets)[0].total
