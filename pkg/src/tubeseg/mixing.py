"""Embedding mixing functions and the free-dimension variance policy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# For each kind: which coordinate columns (0=x, 1=y, 2=t) are added to the
# leading embedding dims, and how many trailing free dims follow them.
_LAYOUT = {
    "identity": ((), 2),
    "xy": ((0, 1), 0),
    "xyt": ((0, 1, 2), 0),
    "xyf": ((0, 1), 1),
    "xytf": ((0, 1, 2), 1),
    "xyff": ((0, 1), 2),
    "xyfff": ((0, 1), 3),
}

KINDS = tuple(_LAYOUT)

DEFAULT_V_FREE = 0.05


@dataclass(frozen=True)
class MixingSpec:
    kind: str = "xyff"
    v_free: float = DEFAULT_V_FREE

    def __post_init__(self):
        if self.kind not in _LAYOUT:
            raise ValueError(f"unknown mixing kind {self.kind!r}; expected one of {KINDS}")
        if not (self.v_free > 0 and np.isfinite(self.v_free)):
            raise ValueError(f"v_free must be positive, got {self.v_free!r}")

    @property
    def coord_axes(self) -> tuple[int, ...]:
        return _LAYOUT[self.kind][0]

    @property
    def n_free(self) -> int:
        # identity leaves both dims unconstrained but has no pinned variances
        return 0 if self.kind == "identity" else _LAYOUT[self.kind][1]

    @property
    def dim(self) -> int:
        axes, extra = _LAYOUT[self.kind]
        return len(axes) + extra

    @property
    def free_slice(self) -> slice:
        return slice(self.dim - self.n_free, self.dim)

    def offsets(self, coords: np.ndarray) -> np.ndarray:
        """Per-pixel offset vectors, shape ``(N, E)``."""
        out = np.zeros((coords.shape[0], self.dim))
        for d, axis in enumerate(self.coord_axes):
            out[:, d] = coords[:, axis]
        return out


def _check_dim(field: np.ndarray, spec: MixingSpec, what: str) -> np.ndarray:
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2 or field.shape[1] != spec.dim:
        raise ValueError(f"{what} must be N x {spec.dim} for kind {spec.kind!r}, got {field.shape}")
    return field


def apply_mixing(raw_embeddings: np.ndarray, coords: np.ndarray, spec: MixingSpec) -> np.ndarray:
    raw = _check_dim(raw_embeddings, spec, "raw embeddings")
    if coords.shape[0] != raw.shape[0]:
        raise ValueError("coordinate grid and embeddings disagree on N")
    if not spec.coord_axes:
        return raw.copy()
    return raw + spec.offsets(coords)


def apply_variance_policy(raw_variances: np.ndarray, spec: MixingSpec) -> np.ndarray:
    """Pin every free-dimension variance to ``spec.v_free``."""
    v = _check_dim(raw_variances, spec, "variances")
    if np.any(~(v > 0)):
        raise ValueError("variances must be strictly positive")
    out = v.copy()
    out[:, spec.free_slice] = spec.v_free
    return out
