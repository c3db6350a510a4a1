"""Gaussian instance models: statistics, probabilities and threshold masks."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .volume import MaskTube, VolumeDims


class ProbMode(str, Enum):
    UNNORMALIZED = "unnormalized"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class GaussianInstance:
    mean: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        var = np.asarray(self.variances, dtype=np.float64).ravel()
        if mean.shape != var.shape:
            raise ValueError("mean and variances must have the same length")
        if np.any(~(var > 0)):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variances", var)

    @property
    def dim(self) -> int:
        return self.mean.size


def instance_stats(embeddings_j: np.ndarray, variances_j: np.ndarray) -> GaussianInstance:
    """Mean embedding and mean (diagonal) variance over an instance's pixels."""
    e = np.asarray(embeddings_j, dtype=np.float64)
    v = np.asarray(variances_j, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ValueError("instance has no pixels")
    if e.shape != v.shape:
        raise ValueError("embedding and variance rows disagree in shape")
    return GaussianInstance(e.mean(axis=0), v.mean(axis=0))


def log_norm_const(variances: np.ndarray) -> float:
    """log of (2 pi)^(-E/2) |Sigma|^(-1/2) for a diagonal Sigma."""
    return -0.5 * (variances.size * np.log(2 * np.pi) + np.log(variances).sum())


def log_prob_field(embeddings: np.ndarray, g: GaussianInstance,
                   mode: ProbMode = ProbMode.UNNORMALIZED) -> np.ndarray:
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] != g.dim:
        raise ValueError(f"embeddings must be N x {g.dim}, got {e.shape}")
    maha = (((e - g.mean) ** 2) / g.variances).sum(axis=1)
    logp = -0.5 * maha
    if ProbMode(mode) is ProbMode.NORMALIZED:
        logp += log_norm_const(g.variances)
    return logp


def prob_field(embeddings: np.ndarray, g: GaussianInstance,
               mode: ProbMode = ProbMode.UNNORMALIZED) -> np.ndarray:
    return np.exp(log_prob_field(embeddings, g, mode))


def gaussian_prob(e: np.ndarray, g: GaussianInstance,
                  mode: ProbMode = ProbMode.UNNORMALIZED) -> float:
    e = np.asarray(e, dtype=np.float64).reshape(1, -1)
    return float(prob_field(e, g, mode)[0])


def threshold_mask(probs: np.ndarray, dims: VolumeDims, threshold: float = 0.5) -> MaskTube:
    """Pixels with probability strictly above ``threshold``."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("probabilities must be finite and non-negative")
    return MaskTube.from_dense(dims, p > threshold)
