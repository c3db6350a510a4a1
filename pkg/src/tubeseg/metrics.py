"""Video segmentation and tracking measures.

* region similarity J (tube IoU) and boundary F-measure,
* track AP / AR over tube-IoU thresholds,
* mask-based CLEAR MOT scores (sMOTSA, MOTSA, MOTSP, id switches).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .stitching import TrackSet, linear_assignment
from .volume import MaskTube

AP_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))


def default_boundary_radius(height: int, width: int) -> int:
    return int(math.ceil(0.008 * math.hypot(height, width)))


def _tube_ious(pred: np.ndarray, gt: np.ndarray, pred_ids, gt_ids) -> np.ndarray:
    """IoU table, rows = pred ids, cols = gt ids, via one joint histogram."""
    out = np.zeros((len(pred_ids), len(gt_ids)))
    if not pred_ids or not gt_ids:
        return out
    p, g = pred.ravel(), gt.ravel()
    pi = {k: i for i, k in enumerate(pred_ids)}
    gi = {k: i for i, k in enumerate(gt_ids)}
    area_p = np.array([np.count_nonzero(p == k) for k in pred_ids], dtype=float)
    area_g = np.array([np.count_nonzero(g == k) for k in gt_ids], dtype=float)
    both = (p != 0) & (g != 0)
    pairs, counts = np.unique(np.stack([p[both], g[both]]), axis=1, return_counts=True)
    for (a, b), c in zip(pairs.T, counts):
        if a in pi and b in gi:
            i, j = pi[a], gi[b]
            out[i, j] = c / (area_p[i] + area_g[j] - c)
    return out


def match_tracks(pred: TrackSet, gt: TrackSet) -> list[tuple[int, int, float]]:
    """IoU-optimal one-to-one matching as ``(pred_id, gt_id, iou)``; zero-IoU pairs dropped."""
    if pred.labeling.dims != gt.labeling.dims:
        raise ValueError(f"dims mismatch: {pred.labeling.dims} vs {gt.labeling.dims}")
    pids, gids = pred.track_ids(), gt.track_ids()
    ious = _tube_ious(pred.labeling.labels, gt.labeling.labels, pids, gids)
    return [(pids[r], gids[c], float(ious[r, c]))
            for r, c in linear_assignment(ious, minimize=False) if ious[r, c] > 0]


# ---------------------------------------------------------------------------
# J and F


def boundary_map(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with a 4-neighbour that is background or outside the frame."""
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(2, 1),
                                    border_value=0)
    return mask & ~eroded


def frame_boundary_f(pred: np.ndarray, gt: np.ndarray, radius: float) -> float:
    bp, bg = boundary_map(pred), boundary_map(gt)
    n_p, n_g = np.count_nonzero(bp), np.count_nonzero(bg)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    # distance from every pixel to the nearest boundary pixel of the other mask
    dist_to_g = ndimage.distance_transform_edt(~bg)
    dist_to_p = ndimage.distance_transform_edt(~bp)
    precision = np.count_nonzero(dist_to_g[bp] <= radius) / n_p
    recall = np.count_nonzero(dist_to_p[bg] <= radius) / n_g
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def j_score(pred: MaskTube, gt: MaskTube) -> float:
    from .volume import tube_iou
    return tube_iou(pred, gt)


def f_score(pred: MaskTube, gt: MaskTube, radius: float | None = None) -> float:
    """Boundary F-measure averaged over frames."""
    if pred.dims != gt.dims:
        raise ValueError("dims mismatch")
    if radius is None:
        radius = default_boundary_radius(gt.dims.height, gt.dims.width)
    dp, dg = pred.dense(), gt.dense()
    return float(np.mean([frame_boundary_f(dp[t], dg[t], radius) for t in range(gt.dims.t_len)]))


# ---------------------------------------------------------------------------
# AP / AR


def _interpolated_ap(tp_flags: list[bool], n_gt: int) -> float:
    if n_gt == 0:
        return 1.0 if not tp_flags else 0.0
    if not tp_flags:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum([not f for f in tp_flags])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # monotone (upper-envelope) interpolation, then exact area
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[1.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _greedy_match(order, ious: np.ndarray, thr: float) -> list[bool]:
    """Confidence-ordered matching; each gt can be claimed once."""
    taken = np.zeros(ious.shape[1], dtype=bool)
    flags = []
    for r in order:
        cand = np.where(taken, -1.0, ious[r])
        j = int(np.argmax(cand)) if cand.size else -1
        if j >= 0 and cand[j] >= thr:
            taken[j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _confidence_order(pred: TrackSet) -> list[int]:
    pids = pred.track_ids()
    conf = []
    for k in pids:
        c = pred.confidence(k)
        if c is None:
            raise ValueError(f"prediction track {k} has no confidence")
        conf.append(c)
    # descending confidence, ties by track id
    return sorted(range(len(pids)), key=lambda i: (-conf[i], pids[i]))


def track_ap(pred: TrackSet, gt: TrackSet, thresholds=AP_THRESHOLDS) -> dict:
    if pred.labeling.dims != gt.labeling.dims:
        raise ValueError("dims mismatch")
    pids, gids = pred.track_ids(), gt.track_ids()
    order = _confidence_order(pred)
    ious = _tube_ious(pred.labeling.labels, gt.labeling.labels, pids, gids)
    ap, ar1, ar10 = {}, [], []
    for thr in thresholds:
        flags = _greedy_match(order, ious, thr)
        ap[float(thr)] = _interpolated_ap(flags, len(gids))
        for k, acc in ((1, ar1), (10, ar10)):
            hits = sum(_greedy_match(order[:k], ious, thr))
            acc.append(hits / len(gids) if gids else 1.0)
    return {
        "ap_per_threshold": ap,
        "map": float(np.mean(list(ap.values()))),
        "ar_at_1": float(np.mean(ar1)),
        "ar_at_10": float(np.mean(ar10)),
    }


# ---------------------------------------------------------------------------
# MOTS


@dataclass
class MotsScores:
    smotsa: float
    motsa: float
    motsp: float
    id_switches: int
    tp: int
    fp: int
    fn: int
    n_gt: int


def mots_scores(pred: TrackSet, gt: TrackSet, iou_threshold: float = 0.5) -> MotsScores:
    """Per-frame mask matching at IoU > ``iou_threshold`` and CLEAR-style counts."""
    if pred.labeling.dims != gt.labeling.dims:
        raise ValueError("dims mismatch")
    tp = fp = fn = ids = 0
    soft_tp = 0.0
    n_gt = 0
    last_match: dict[int, int] = {}
    for t in range(gt.video_len):
        pf, gf = pred.labeling.labels[t], gt.labeling.labels[t]
        pids = [int(k) for k in np.unique(pf) if k]
        gids = [int(k) for k in np.unique(gf) if k]
        n_gt += len(gids)
        ious = _tube_ious(pf, gf, pids, gids)
        matched = [(pids[r], gids[c], ious[r, c])
                   for r, c in linear_assignment(ious, minimize=False) if ious[r, c] > iou_threshold]
        tp += len(matched)
        fp += len(pids) - len(matched)
        fn += len(gids) - len(matched)
        for p, g, iou in matched:
            soft_tp += iou
            if g in last_match and last_match[g] != p:
                ids += 1
            last_match[g] = p
    if n_gt == 0:
        ratio = 1.0 if fp == 0 else -float(fp)
        return MotsScores(ratio, ratio, 1.0 if tp == 0 else soft_tp / tp, ids, tp, fp, fn, 0)
    return MotsScores(
        smotsa=(soft_tp - fp - ids) / n_gt,
        motsa=1.0 - (fn + fp + ids) / n_gt,
        motsp=soft_tp / tp if tp else 0.0,
        id_switches=ids, tp=tp, fp=fp, fn=fn, n_gt=n_gt,
    )


# ---------------------------------------------------------------------------
# report


@dataclass
class TrackRow:
    gt_id: int
    pred_id: int | None
    j: float
    f: float


@dataclass
class EvalReport:
    j_mean: float
    j_recall: float
    f_mean: float
    f_recall: float
    jf_mean: float
    ap_per_threshold: dict
    map: float
    ar_at_1: float
    ar_at_10: float
    smotsa: float
    motsa: float
    motsp: float
    id_switches: int
    tracks: list[TrackRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ap_per_threshold"] = {f"{k:.2f}": v for k, v in self.ap_per_threshold.items()}
        return d


def evaluate(pred: TrackSet, gt: TrackSet, radius: float | None = None) -> EvalReport:
    """Full report; every gt track gets a row (unmatched ones score J = F = 0)."""
    matches = {g: p for p, g, _ in match_tracks(pred, gt)}
    dims = gt.labeling.dims
    if radius is None:
        radius = default_boundary_radius(dims.height, dims.width)
    rows = []
    for g in gt.track_ids():
        gtube = gt.labeling.tube(g)
        p = matches.get(g)
        ptube = pred.labeling.tube(p) if p is not None else MaskTube.empty(dims)
        rows.append(TrackRow(g, p, j_score(ptube, gtube), f_score(ptube, gtube, radius)))
    js = np.array([r.j for r in rows]) if rows else np.ones(1)
    fs = np.array([r.f for r in rows]) if rows else np.ones(1)
    if all(pred.confidence(k) is not None for k in pred.track_ids()):
        ap = track_ap(pred, gt)
    else:
        ap = {"ap_per_threshold": {}, "map": float("nan"), "ar_at_1": float("nan"),
              "ar_at_10": float("nan")}
    mots = mots_scores(pred, gt)
    j_mean, f_mean = float(js.mean()), float(fs.mean())
    return EvalReport(
        j_mean=j_mean, j_recall=float(np.mean(js > 0.5)),
        f_mean=f_mean, f_recall=float(np.mean(fs > 0.5)),
        jf_mean=(j_mean + f_mean) / 2,
        ap_per_threshold=ap["ap_per_threshold"], map=ap["map"],
        ar_at_1=ap["ar_at_1"], ar_at_10=ap["ar_at_10"],
        smotsa=mots.smotsa, motsa=mots.motsa, motsp=mots.motsp, id_switches=mots.id_switches,
        tracks=rows,
    )


def format_report_table(report: EvalReport) -> str:
    """Aligned plain-text summary followed by the per-track table."""
    scalars = [
        ("J mean", report.j_mean), ("J recall", report.j_recall),
        ("F mean", report.f_mean), ("F recall", report.f_recall),
        ("J&F mean", report.jf_mean), ("mAP", report.map),
        ("AR@1", report.ar_at_1), ("AR@10", report.ar_at_10),
        ("sMOTSA", report.smotsa), ("MOTSA", report.motsa), ("MOTSP", report.motsp),
    ]
    lines = [f"{name:<10} {value:8.4f}" for name, value in scalars]
    lines.append(f"{'IDS':<10} {report.id_switches:8d}")
    lines.append("")
    lines.append(f"{'gt_id':>6} {'pred_id':>8} {'J':>8} {'F':>8}")
    for r in report.tracks:
        pid = "-" if r.pred_id is None else str(r.pred_id)
        lines.append(f"{r.gt_id:>6} {pid:>8} {r.j:8.4f} {r.f:8.4f}")
    return "\n".join(lines) + "\n"
