"""Clip geometry, coordinate grids and mask tubes over T x H x W volumes.

Pixels are addressed by a linear index in t-major, then row, then column
order, which is the order used by every file format in this package.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class FormatError(ValueError):
    """Raised for malformed run lists or mask/labeling files."""


@dataclass(frozen=True)
class VolumeDims:
    t_len: int
    height: int
    width: int

    def __post_init__(self):
        for name in ("t_len", "height", "width"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.n_pixels >= np.iinfo(np.int64).max:
            raise ValueError("volume too large for int64 indexing")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.t_len, self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.t_len * self.height * self.width

    @property
    def frame_size(self) -> int:
        return self.height * self.width

    def unravel(self, index: int) -> tuple[int, int, int]:
        t, rem = divmod(int(index), self.frame_size)
        row, col = divmod(rem, self.width)
        return t, row, col

    def ravel(self, t: int, row: int, col: int) -> int:
        return (t * self.height + row) * self.width + col


def _normalize(idx: np.ndarray, size: int) -> np.ndarray:
    if size == 1:
        return np.zeros(idx.shape, dtype=np.float64)
    return idx.astype(np.float64) / (size - 1)


def coordinate_grid(dims: VolumeDims) -> np.ndarray:
    """Normalized ``(x, y, t)`` coordinates for every pixel, shape ``(N, 3)``.

    Row ``i`` holds the coordinates of linear index ``i``; each axis maps its
    integer index onto ``[0, 1]`` (a singleton axis maps to 0).
    """
    t, row, col = np.unravel_index(np.arange(dims.n_pixels), dims.shape)
    return np.stack(
        [_normalize(col, dims.width), _normalize(row, dims.height), _normalize(t, dims.t_len)],
        axis=1,
    )


# ---------------------------------------------------------------------------
# run-length encoding


def rle_encode(flat: np.ndarray) -> np.ndarray:
    """Encode a flat boolean array as an ``(R, 2)`` array of ``(start, length)`` runs."""
    flat = np.asarray(flat, dtype=bool).ravel()
    if flat.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    padded = np.concatenate([[False], flat, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, ends = edges[0::2], edges[1::2]
    return np.stack([starts, ends - starts], axis=1).astype(np.int64)


def validate_runs(runs: np.ndarray, n_pixels: int) -> np.ndarray:
    runs = np.asarray(runs, dtype=np.int64).reshape(-1, 2)
    if len(runs) == 0:
        return runs
    starts, lengths = runs[:, 0], runs[:, 1]
    if np.any(lengths < 1) or np.any(starts < 0):
        raise FormatError("runs must have non-negative start and positive length")
    ends = starts + lengths
    if ends[-1] > n_pixels or np.any(ends > n_pixels):
        raise FormatError("run extends beyond the volume")
    # canonical form: sorted and separated by at least one unset pixel
    if np.any(starts[1:] <= ends[:-1]):
        raise FormatError("runs must be sorted, non-overlapping and non-adjacent")
    return runs


def rle_decode(runs: np.ndarray, n_pixels: int) -> np.ndarray:
    runs = validate_runs(runs, n_pixels)
    flat = np.zeros(n_pixels, dtype=bool)
    for start, length in runs:
        flat[start:start + length] = True
    return flat


class MaskTube:
    """Boolean membership over a clip, stored as canonical runs."""

    __slots__ = ("dims", "runs", "_dense")

    def __init__(self, dims: VolumeDims, runs):
        self.dims = dims
        self.runs = validate_runs(runs, dims.n_pixels)
        self.runs.setflags(write=False)
        self._dense = None

    @classmethod
    def from_dense(cls, dims: VolumeDims, mask) -> "MaskTube":
        mask = np.asarray(mask, dtype=bool)
        if mask.size != dims.n_pixels:
            raise ValueError(f"mask has {mask.size} pixels, dims expect {dims.n_pixels}")
        tube = cls(dims, rle_encode(mask.ravel()))
        tube._dense = mask.reshape(dims.shape).copy()
        tube._dense.setflags(write=False)
        return tube

    @classmethod
    def empty(cls, dims: VolumeDims) -> "MaskTube":
        return cls(dims, np.zeros((0, 2), dtype=np.int64))

    def dense(self) -> np.ndarray:
        """Read-only ``(T, H, W)`` boolean array."""
        if self._dense is None:
            d = rle_decode(self.runs, self.dims.n_pixels).reshape(self.dims.shape)
            d.setflags(write=False)
            self._dense = d
        return self._dense

    @property
    def n_pixels(self) -> int:
        return int(self.runs[:, 1].sum())

    def __len__(self) -> int:
        return self.n_pixels

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskTube):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.runs, other.runs)

    def __hash__(self):
        return hash((self.dims, self.runs.tobytes()))

    def __repr__(self) -> str:
        return f"MaskTube({self.dims.shape}, n_pixels={self.n_pixels}, runs={len(self.runs)})"

    def frames(self, start: int, stop: int) -> "MaskTube":
        """Restriction to frames ``[start, stop)`` as a shorter tube."""
        sub = self.dense()[start:stop]
        return MaskTube.from_dense(VolumeDims(sub.shape[0], self.dims.height, self.dims.width), sub)


def tube_iou(a: MaskTube, b: MaskTube) -> float:
    """Intersection over union of two tubes; two empty tubes score 1."""
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    da, db = a.dense(), b.dense()
    union = np.count_nonzero(da | db)
    if union == 0:
        return 1.0
    return np.count_nonzero(da & db) / union


class InstanceLabeling:
    """Per-pixel instance ids over a clip; 0 is background."""

    __slots__ = ("dims", "labels")

    def __init__(self, dims: VolumeDims, labels):
        labels = np.asarray(labels)
        if labels.size != dims.n_pixels:
            raise ValueError(f"labels have {labels.size} pixels, dims expect {dims.n_pixels}")
        if labels.size and (labels.min() < 0 or not np.issubdtype(labels.dtype, np.integer)):
            raise ValueError("labels must be non-negative integers")
        self.dims = dims
        self.labels = labels.astype(np.int64).reshape(dims.shape)
        self.labels.setflags(write=False)

    @classmethod
    def background(cls, dims: VolumeDims) -> "InstanceLabeling":
        return cls(dims, np.zeros(dims.shape, dtype=np.int64))

    @classmethod
    def from_tubes(cls, dims: VolumeDims, tubes: dict[int, MaskTube]) -> "InstanceLabeling":
        labels = np.zeros(dims.shape, dtype=np.int64)
        for k, tube in tubes.items():
            if k < 1:
                raise ValueError("instance ids must be >= 1")
            d = tube.dense()
            if np.any(labels[d] != 0):
                raise ValueError("tubes overlap; each pixel takes exactly one label")
            labels[d] = k
        return cls(dims, labels)

    def ids(self) -> list[int]:
        return [int(k) for k in np.unique(self.labels) if k != 0]

    @property
    def n_instances(self) -> int:
        return len(self.ids())

    def flat(self) -> np.ndarray:
        return self.labels.ravel()

    def tube(self, k: int) -> MaskTube:
        return MaskTube.from_dense(self.dims, self.labels == k)

    def tubes(self) -> dict[int, MaskTube]:
        return {k: self.tube(k) for k in self.ids()}

    def frames(self, start: int, stop: int) -> "InstanceLabeling":
        sub = self.labels[start:stop]
        return InstanceLabeling(VolumeDims(sub.shape[0], self.dims.height, self.dims.width), sub)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InstanceLabeling):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.labels, other.labels)

    def __repr__(self) -> str:
        return f"InstanceLabeling({self.dims.shape}, ids={self.ids()})"


# ---------------------------------------------------------------------------
# text formats


def _header(dims: VolumeDims) -> str:
    return f"dims {dims.t_len} {dims.height} {dims.width}\n"


def _parse_header(line: str) -> VolumeDims:
    parts = line.split()
    if len(parts) != 4 or parts[0] != "dims":
        raise FormatError(f"bad header line: {line.strip()!r}")
    try:
        return VolumeDims(*(int(p) for p in parts[1:]))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def _data_lines(lines: Iterable[str]) -> Iterator[list[int]]:
    for line in lines:
        if line.strip():
            try:
                yield [int(p) for p in line.split()]
            except ValueError:
                raise FormatError(f"non-integer field in line {line.strip()!r}") from None


def format_tube(tube: MaskTube) -> str:
    return _header(tube.dims) + "".join(f"{s} {n}\n" for s, n in tube.runs)


def parse_tube(text: str) -> MaskTube:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty mask-tube file")
    dims = _parse_header(lines[0])
    rows = list(_data_lines(lines[1:]))
    if any(len(r) != 2 for r in rows):
        raise FormatError("mask-tube rows must be 'start length'")
    return MaskTube(dims, np.array(rows, dtype=np.int64).reshape(-1, 2))


def format_labeling(lab: InstanceLabeling) -> str:
    flat = lab.flat()
    out = [_header(lab.dims)]
    # runs of constant nonzero label, in linear-index order
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    for s, e in zip(starts, ends):
        if flat[s] != 0:
            out.append(f"{flat[s]} {s} {e - s}\n")
    return "".join(out)


def parse_labeling(text: str) -> InstanceLabeling:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty labeling file")
    dims = _parse_header(lines[0])
    labels = np.zeros(dims.n_pixels, dtype=np.int64)
    last_end = 0
    for row in _data_lines(lines[1:]):
        if len(row) != 3:
            raise FormatError("labeling rows must be 'id start length'")
        k, s, n = row
        if k < 1 or n < 1 or s < last_end or s + n > dims.n_pixels:
            raise FormatError(f"bad labeling run {row}")
        labels[s:s + n] = k
        last_end = s + n
    return InstanceLabeling(dims, labels)


def write_labeling(path, lab: InstanceLabeling) -> None:
    Path(path).write_text(format_labeling(lab))


def read_labeling(path) -> InstanceLabeling:
    return parse_labeling(Path(path).read_text())


def write_tube(path, tube: MaskTube) -> None:
    Path(path).write_text(format_tube(tube))


def read_tube(path) -> MaskTube:
    return parse_tube(Path(path).read_text())
