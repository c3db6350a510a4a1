"""Sequential cluster peeling over embedding / variance / heat fields."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instance_model import GaussianInstance, ProbMode, prob_field
from .volume import InstanceLabeling, MaskTube, VolumeDims

DEFAULT_HEAT_THRESHOLD = 0.5
DEFAULT_MIN_PIXELS = 8


@dataclass(frozen=True)
class FieldSet:
    """Mixed embeddings (N x E), positive variances (N x E) and heat (N,)."""

    dims: VolumeDims
    embeddings: np.ndarray
    variances: np.ndarray
    heat: np.ndarray

    def __post_init__(self):
        n = self.dims.n_pixels
        e = np.asarray(self.embeddings, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        h = np.asarray(self.heat, dtype=np.float64).ravel()
        if e.ndim != 2 or e.shape[0] != n:
            raise ValueError(f"embeddings must be {n} x E, got {e.shape}")
        if v.shape != e.shape:
            raise ValueError(f"variances shape {v.shape} != embeddings shape {e.shape}")
        if h.shape != (n,):
            raise ValueError(f"heat must have {n} entries, got {h.shape}")
        if np.any(~(v > 0)):
            raise ValueError("variances must be strictly positive")
        if np.any(~((h >= 0) & (h <= 1))):
            raise ValueError("heat must lie in [0, 1]")
        object.__setattr__(self, "embeddings", e)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "heat", h)

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class ExtractedInstance:
    instance_id: int
    gaussian: GaussianInstance
    seed_index: int
    seed_coord: tuple[int, int, int]   # (t, row, col)
    seed_heat: float
    n_pixels: int


@dataclass(frozen=True)
class ClusterResult:
    labeling: InstanceLabeling
    instances: list[ExtractedInstance] = field(default_factory=list)

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    def confidence(self, instance_id: int) -> float:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst.seed_heat
        raise KeyError(instance_id)


def cluster_instances(fields: FieldSet,
                      heat_threshold: float = DEFAULT_HEAT_THRESHOLD,
                      min_pixels: int = DEFAULT_MIN_PIXELS,
                      mode: ProbMode = ProbMode.UNNORMALIZED) -> ClusterResult:
    """Peel instances off the volume, highest remaining heat peak first.

    Each seed's embedding and variance define a Gaussian; remaining pixels
    whose probability exceeds 0.5 form the tube and are removed. A tube smaller
    than ``min_pixels`` is discarded and only its seed pixel is removed.
    """
    if not 0 < heat_threshold < 1:
        raise ValueError("heat_threshold must lie in (0, 1)")
    if min_pixels < 1:
        raise ValueError("min_pixels must be >= 1")
    dims = fields.dims
    n = dims.n_pixels
    heat = fields.heat.copy()
    remaining = np.ones(n, dtype=bool)
    labels = np.zeros(n, dtype=np.int64)
    instances = []

    while remaining.any():
        # masked pixels get -inf; argmax returns the lowest index among ties
        seed = int(np.argmax(np.where(remaining, heat, -np.inf)))
        seed_heat = float(heat[seed])
        if seed_heat < heat_threshold:
            break
        g = GaussianInstance(fields.embeddings[seed], fields.variances[seed])
        idx = np.flatnonzero(remaining)
        inside = prob_field(fields.embeddings[idx], g, mode) > 0.5
        members = idx[inside]
        if members.size >= min_pixels:
            k = len(instances) + 1
            labels[members] = k
            remaining[members] = False
            instances.append(ExtractedInstance(k, g, seed, dims.unravel(seed), seed_heat,
                                               int(members.size)))
        # rejected seeds drop only themselves; a normalized-mode tube may
        # also exclude its own seed
        remaining[seed] = False

    return ClusterResult(InstanceLabeling(dims, labels.reshape(dims.shape)), instances)


def assign_category(instance_mask: MaskTube, class_logits: np.ndarray) -> int:
    """Class with the highest mean logit over the instance's pixels."""
    logits = np.asarray(class_logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] != instance_mask.dims.n_pixels or logits.shape[1] < 1:
        raise ValueError("class logits must be N x C with C >= 1")
    member = instance_mask.dense().ravel()
    if not member.any():
        raise ValueError("cannot assign a category to an empty mask")
    means = logits[member].mean(axis=0)
    return int(np.argmax(means))
