"""Overlapping clip windows and tracklet association into full-video tracks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .inference import ClusterResult
from .volume import InstanceLabeling, VolumeDims, format_labeling, parse_labeling

DEFAULT_MIN_ASSOC_IOU = 0.1


@dataclass(frozen=True)
class ClipWindow:
    start: int
    end: int          # exclusive
    t_len: int
    overlap: int

    @property
    def frames(self) -> range:
        return range(self.start, self.end)


def split_clips(video_len: int, t_len: int, overlap: int) -> list[ClipWindow]:
    """Windows of ``t_len`` frames advancing by ``t_len - overlap``.

    The last window is shifted left to end exactly at ``video_len``; a video
    shorter than one clip yields a single short window.
    """
    if t_len < 1 or not 0 <= overlap < t_len:
        raise ValueError(f"need t_len >= 1 and 0 <= overlap < t_len, got T={t_len}, T_c={overlap}")
    if video_len < 1:
        raise ValueError("video_len must be >= 1")
    if video_len <= t_len:
        return [ClipWindow(0, video_len, t_len, overlap)]
    stride = t_len - overlap
    windows = []
    start = 0
    while start + t_len < video_len:
        windows.append(ClipWindow(start, start + t_len, t_len, overlap))
        start += stride
    windows.append(ClipWindow(video_len - t_len, video_len, t_len, overlap))
    return windows


def output_delays(windows: list[ClipWindow]) -> dict[int, int]:
    """Frames of output latency per frame under first-write-wins stitching.

    A frame is final once the first window containing it has been processed,
    i.e. when that window's last frame has arrived. Steady-state frames wait
    at most ``t_len - overlap - 1`` frames; the first ``overlap`` frames of the
    video also wait for the first clip to fill.
    """
    delays = {}
    committed = 0
    for w in windows:
        for f in range(committed, w.end):
            delays[f] = w.end - 1 - f
        committed = w.end
    return delays


def linear_assignment(cost, minimize: bool = True) -> list[tuple[int, int]]:
    """Optimal one-to-one matching on a rectangular matrix, as ``(row, col)`` pairs."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost entries must be finite")
    rows, cols = linear_sum_assignment(cost, maximize=not minimize)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def _ids_in(labels: np.ndarray) -> list[int]:
    return [int(k) for k in np.unique(labels) if k != 0]


def _iou_matrix(a: np.ndarray, b: np.ndarray, ids_a, ids_b) -> np.ndarray:
    out = np.zeros((len(ids_a), len(ids_b)))
    for i, ka in enumerate(ids_a):
        ma = a == ka
        for j, kb in enumerate(ids_b):
            mb = b == kb
            union = np.count_nonzero(ma | mb)
            out[i, j] = np.count_nonzero(ma & mb) / union if union else 1.0
    return out


def overlap_cost_matrix(prev: InstanceLabeling, nxt: InstanceLabeling,
                        prev_window: ClipWindow, next_window: ClipWindow):
    """Tube IoU between every pair of tracklets restricted to the shared frames.

    Returns ``(matrix, prev_ids, next_ids)``; ids are the clip-local ids present
    in each clip.
    """
    lo = max(prev_window.start, next_window.start)
    hi = min(prev_window.end, next_window.end)
    if hi <= lo:
        raise ValueError("windows do not overlap")
    a = prev.labels[lo - prev_window.start:hi - prev_window.start]
    b = nxt.labels[lo - next_window.start:hi - next_window.start]
    ids_a, ids_b = _ids_in(prev.labels), _ids_in(nxt.labels)
    return _iou_matrix(a, b, ids_a, ids_b), ids_a, ids_b


@dataclass
class TrackSet:
    """Globally identified tracks over a whole video."""

    labeling: InstanceLabeling
    meta: dict[int, dict] = field(default_factory=dict)   # id -> {category, confidence}

    @property
    def video_len(self) -> int:
        return self.labeling.dims.t_len

    def track_ids(self) -> list[int]:
        return self.labeling.ids()

    def confidence(self, k: int) -> float | None:
        return self.meta.get(k, {}).get("confidence")


def _as_labeling(r) -> InstanceLabeling:
    return r if isinstance(r, InstanceLabeling) else r.labeling


def _confidences(r) -> dict[int, float]:
    if isinstance(r, ClusterResult):
        return {inst.instance_id: inst.seed_heat for inst in r.instances}
    if isinstance(r, TrackSet):
        return {k: v["confidence"] for k, v in r.meta.items() if "confidence" in v}
    return {}


def stitch(per_clip: list[ClusterResult | TrackSet | InstanceLabeling], windows: list[ClipWindow],
           min_assoc_iou: float = DEFAULT_MIN_ASSOC_IOU,
           categories: list[dict[int, int]] | None = None) -> TrackSet:
    """Associate per-clip tracklets into tracks.

    Frames already written by an earlier clip are never modified; each clip
    contributes only the frames after the previous window's end.
    """
    if len(per_clip) != len(windows) or not windows:
        raise ValueError("need one clip result per window")
    labelings = [_as_labeling(r) for r in per_clip]
    for lab, w in zip(labelings, windows):
        if lab.dims.t_len != w.end - w.start:
            raise ValueError(f"clip result has {lab.dims.t_len} frames, window {w} expects {w.end - w.start}")
    h, wd = labelings[0].dims.height, labelings[0].dims.width
    video_len = windows[-1].end
    out = np.zeros((video_len, h, wd), dtype=np.int64)
    conf_acc: dict[int, list[float]] = {}
    cat_of: dict[int, int] = {}
    # the first clip keeps its own ids; later new tracks are numbered above them
    next_id = max(_ids_in(labelings[0].labels), default=0) + 1
    prev_map: dict[int, int] = {}
    committed = 0

    for c, (lab, win) in enumerate(zip(labelings, windows)):
        confs = _confidences(per_clip[c])
        local_ids = _ids_in(lab.labels)
        mapping: dict[int, int] = {k: k for k in local_ids} if c == 0 else {}
        if c > 0:
            cost, ids_prev, ids_next = overlap_cost_matrix(labelings[c - 1], lab, windows[c - 1], win)
            for r, q in linear_assignment(cost, minimize=False):
                if cost[r, q] >= min_assoc_iou and ids_prev[r] in prev_map:
                    mapping[ids_next[q]] = prev_map[ids_prev[r]]
        new_frames = slice(committed - win.start, None)
        fresh = lab.labels[new_frames]
        for k in local_ids:
            if k not in mapping:
                if not np.any(fresh == k):
                    continue          # only visible in frames that are already final
                mapping[k] = next_id
                next_id += 1
            gk = mapping[k]
            out[committed:win.end][fresh == k] = gk
            conf = confs.get(k)
            if conf is not None:
                conf_acc.setdefault(gk, []).append(conf)
            if categories is not None and k in categories[c]:
                cat_of.setdefault(gk, categories[c][k])
        prev_map = mapping
        committed = win.end

    labeling = InstanceLabeling(VolumeDims(video_len, h, wd), out)
    meta = {}
    for k in labeling.ids():
        entry = {}
        if k in conf_acc:
            entry["confidence"] = float(np.mean(conf_acc[k]))
        if k in cat_of:
            entry["category"] = cat_of[k]
        meta[k] = entry
    return TrackSet(labeling, meta)


def write_trackset(path, tracks: TrackSet) -> Path:
    """Write the labeling file and its ``.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    path.write_text(format_labeling(tracks.labeling))
    sidecar = path.with_suffix(path.suffix + ".json")
    payload = {str(k): {"category": v.get("category"), "confidence": v.get("confidence")}
               for k, v in sorted(tracks.meta.items())}
    sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return sidecar


def read_trackset(path) -> TrackSet:
    path = Path(path)
    labeling = parse_labeling(path.read_text())
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = {}
    if sidecar.exists():
        for k, v in json.loads(sidecar.read_text()).items():
            meta[int(k)] = {key: val for key, val in v.items() if val is not None}
    return TrackSet(labeling, meta)
