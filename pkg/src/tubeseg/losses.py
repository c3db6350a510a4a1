"""Training objective: Lovasz-hinge embedding loss, variance smoothness and
center heat-map regression, each returning exact gradients.

All gradients are with respect to the mixed embeddings, the (post-policy)
variances and the heat map of a :class:`~tubeseg.inference.FieldSet`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import FieldSet
from .instance_model import ProbMode, log_norm_const
from .volume import InstanceLabeling, MaskTube

DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class LossConfig:
    w_emb: float = 1.0
    w_smooth: float = 1.0
    w_center: float = 1.0
    eps: float = DEFAULT_EPS
    mode: ProbMode = ProbMode.UNNORMALIZED

    def __post_init__(self):
        for name in ("w_emb", "w_smooth", "w_center"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")
        object.__setattr__(self, "mode", ProbMode(self.mode))


@dataclass
class LossBreakdown:
    emb: float
    smooth: float
    center: float
    total: float


@dataclass
class Gradients:
    embeddings: np.ndarray
    variances: np.ndarray
    heat: np.ndarray

    def scaled(self, w: float) -> "Gradients":
        return Gradients(w * self.embeddings, w * self.variances, w * self.heat)

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(self.embeddings + other.embeddings,
                         self.variances + other.variances,
                         self.heat + other.heat)


def _gt_flat(gt) -> np.ndarray:
    if isinstance(gt, MaskTube):
        return gt.dense().ravel()
    return np.asarray(gt, dtype=bool).ravel()


def lovasz_hinge(scores: np.ndarray, gt) -> tuple[float, np.ndarray]:
    """Binary Lovasz hinge and its subgradient with respect to ``scores``.

    Hinge errors ``1 - F * y`` are sorted in decreasing order and weighted by
    the increments of the Jaccard loss along the sorted prefix chain.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    y = _gt_flat(gt)
    if y.shape != scores.shape:
        raise ValueError("scores and ground truth differ in size")
    n_pos = np.count_nonzero(y)
    if n_pos == 0:
        return 0.0, np.zeros_like(scores)
    signs = np.where(y, 1.0, -1.0)
    errors = 1.0 - scores * signs
    # Pixels with non-positive error sort after every positive one and carry
    # zero hinge, so only the positive prefix of the chain is needed.
    pos = np.flatnonzero(errors > 0)
    grad = np.zeros_like(scores)
    if pos.size == 0:
        return 0.0, grad
    order = pos[np.argsort(-errors[pos], kind="stable")]
    y_sorted = y[order]
    intersection = n_pos - np.cumsum(y_sorted)
    union = n_pos + np.cumsum(~y_sorted)
    jaccard = 1.0 - intersection / union
    weights = jaccard.copy()
    weights[1:] -= jaccard[:-1]
    loss = float(np.dot(errors[order], weights))
    grad[order] = -weights * signs[order]
    return loss, grad


def _instance_pixels(gt: InstanceLabeling) -> list[np.ndarray]:
    flat = gt.flat()
    return [np.flatnonzero(flat == k) for k in gt.ids()]


def _scores(logp: np.ndarray, eps: float):
    """Clamped logit of exp(logp); also returns d score / d logp."""
    p = np.exp(logp)
    active = (p > eps) & (p < 1.0 - eps)
    clamped = np.clip(p, eps, 1.0 - eps)
    scores = np.log(clamped) - np.log1p(-clamped)
    lp = logp[active]
    # log p - log(1 - p) computed from log p for accuracy near p -> 0
    scores[active] = lp - np.log(-np.expm1(lp))
    dscore = np.zeros_like(p)
    dscore[active] = 1.0 / (1.0 - p[active])
    return scores, dscore, p


def _instance_embedding_term(e, v, idx, mode, eps):
    """Lovasz loss for one instance plus gradients and the per-pixel probabilities."""
    n = e.shape[0]
    mu = e[idx].mean(axis=0)
    s = v[idx].mean(axis=0)
    diff = e - mu
    logp = -0.5 * (diff * diff) @ (1.0 / s)
    if mode is ProbMode.NORMALIZED:
        logp = logp + log_norm_const(s)
    scores, dscore, p = _scores(logp, eps)
    gt = np.zeros(n, dtype=bool)
    gt[idx] = True
    loss, g_scores = lovasz_hinge(scores, gt)
    a = g_scores * dscore                    # dL / dlogp_i
    nz = np.flatnonzero(a)                   # saturated pixels carry no gradient
    z = diff[nz] / s
    az = a[nz, None] * z
    g_e = np.zeros_like(e)
    g_e[nz] = -az                            # direct path through e_i
    d_mu = az.sum(axis=0)
    d_s = 0.5 * (az * z).sum(axis=0)
    if mode is ProbMode.NORMALIZED:
        d_s -= 0.5 * a[nz].sum() / s
    g_e[idx] += d_mu / idx.size
    g_v = np.zeros_like(v)
    g_v[idx] += d_s / idx.size
    return loss, g_e, g_v, p


def embedding_loss(fields: FieldSet, gt: InstanceLabeling,
                   mode: ProbMode = ProbMode.UNNORMALIZED,
                   eps: float = DEFAULT_EPS) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean Lovasz hinge over instances; returns ``(loss, d_emb, d_var)``."""
    parts = _instance_pixels(gt)
    if not parts:
        raise ValueError("embedding loss needs at least one instance")
    loss, g_e, g_v, _ = _embedding_pass(fields, parts, ProbMode(mode), eps)
    return loss, g_e, g_v


def _embedding_pass(fields, parts, mode, eps):
    e, v = fields.embeddings, fields.variances
    g_e = np.zeros_like(e)
    g_v = np.zeros_like(v)
    total = 0.0
    probs = []
    for idx in parts:
        loss_j, ge_j, gv_j, p_j = _instance_embedding_term(e, v, idx, mode, eps)
        total += loss_j
        g_e += ge_j
        g_v += gv_j
        probs.append(p_j)
    k = len(parts)
    return total / k, g_e / k, g_v / k, probs


def smoothness_loss(variances_j: np.ndarray) -> tuple[float, np.ndarray]:
    v = np.asarray(variances_j, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] == 0:
        raise ValueError("smoothness loss of an empty instance")
    dev = v - v.mean(axis=0)
    n = v.shape[0]
    return float((dev ** 2).sum() / n), 2.0 * dev / n


def instance_smoothness(fields: FieldSet, gt: InstanceLabeling) -> tuple[float, np.ndarray]:
    """Smoothness averaged over instances; background variances get no loss."""
    parts = _instance_pixels(gt)
    g = np.zeros_like(fields.variances)
    if not parts:
        return 0.0, g
    total = 0.0
    for idx in parts:
        loss_j, g_j = smoothness_loss(fields.variances[idx])
        total += loss_j
        g[idx] += g_j
    return total / len(parts), g / len(parts)


def center_targets(fields: FieldSet, gt: InstanceLabeling,
                   mode: ProbMode = ProbMode.UNNORMALIZED) -> np.ndarray:
    """Heat-map regression target: own-instance probability, 0 on background."""
    target = np.zeros(fields.dims.n_pixels)
    e, v = fields.embeddings, fields.variances
    for idx in _instance_pixels(gt):
        mu = e[idx].mean(axis=0)
        s = v[idx].mean(axis=0)
        logp = -0.5 * (((e[idx] - mu) ** 2) / s).sum(axis=1)
        if ProbMode(mode) is ProbMode.NORMALIZED:
            logp += log_norm_const(s)
        target[idx] = np.exp(logp)
    return target


def center_loss(heat: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error to detached targets; gradient flows to the heat map only."""
    h = np.asarray(heat, dtype=np.float64).ravel()
    diff = h - np.asarray(targets, dtype=np.float64).ravel()
    return float(np.mean(diff ** 2)), 2.0 * diff / h.size


def total_loss(fields: FieldSet, gt: InstanceLabeling, cfg: LossConfig = LossConfig(),
               targets: np.ndarray | None = None) -> tuple[LossBreakdown, Gradients]:
    """Weighted sum of the three terms with the summed gradients.

    ``targets`` overrides the heat-map regression target; gradient checks pass
    the target computed at the base point so the stop-gradient is respected.
    """
    parts = _instance_pixels(gt)
    n, dim = fields.embeddings.shape
    zero = np.zeros((n, dim))
    if parts:
        emb, g_e, g_v_emb, probs = _embedding_pass(fields, parts, cfg.mode, cfg.eps)
    else:
        emb, g_e, g_v_emb, probs = 0.0, zero, zero.copy(), []
    smooth, g_v_smooth = instance_smoothness(fields, gt)
    if targets is None:
        targets = np.zeros(n)
        for idx, p in zip(parts, probs):
            targets[idx] = p[idx]
    center, g_h = center_loss(fields.heat, targets)

    breakdown = LossBreakdown(
        emb=emb, smooth=smooth, center=center,
        total=cfg.w_emb * emb + cfg.w_smooth * smooth + cfg.w_center * center,
    )
    grads = Gradients(
        embeddings=cfg.w_emb * g_e,
        variances=cfg.w_emb * g_v_emb + cfg.w_smooth * g_v_smooth,
        heat=cfg.w_center * g_h,
    )
    return breakdown, grads
