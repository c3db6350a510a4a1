"""End-to-end run: synth -> optimize -> infer -> stitch -> eval -> render.

Each stage reads and writes the same files as the matching CLI subcommand, so
running the subcommands by hand over the intermediate files reproduces the
pipeline's artifacts byte for byte.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import plotting
from .config import PipelineConfig, dump
from .inference import ClusterResult, cluster_instances
from .metrics import EvalReport, evaluate, format_report_table
from .render import render_labeling
from .stitching import TrackSet, read_trackset, split_clips, stitch, write_trackset
from .synth import generate_clip
from .trainer import (forward, init_fields, optimize_fields, read_raw_fields, write_history,
                      write_raw_fields)
from .volume import read_labeling, write_labeling

log = logging.getLogger(__name__)


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_synth(cfg: PipelineConfig, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt, trajectories = generate_clip(cfg.synth)
    path = out_dir / "gt.lab"
    write_labeling(path, gt)
    _write_json(out_dir / "trajectories.json", [
        {"id": tr.instance_id, "kind": tr.kind, "size": list(tr.size),
         "velocity": list(tr.velocity), "centers": [list(c) for c in tr.centers]}
        for tr in trajectories
    ])
    return path


def run_optimize(cfg: PipelineConfig, gt_path, out_dir):
    """Fit raw fields to a clip labeling; writes ``fields.txt`` and ``history.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = read_labeling(gt_path)
    fields_path = out_dir / "fields.txt"
    if gt.n_instances == 0:
        # nothing to fit: an all-background clip keeps the initial fields
        write_raw_fields(fields_path, init_fields(gt.dims, cfg.mixing, cfg.optimizer.seed), gt.dims)
        write_history(out_dir / "history.csv", [])
        return fields_path, []
    result = optimize_fields(gt, cfg.mixing, cfg.optimizer, cfg.losses)
    write_raw_fields(fields_path, result.raw, gt.dims)
    write_history(out_dir / "history.csv", result.history)
    log.info("%s: %d steps, final loss %.5f", out_dir, result.steps, result.history[-1].total)
    return fields_path, result.history


def run_infer(cfg: PipelineConfig, fields_path, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw, dims = read_raw_fields(fields_path)
    if dims is None:
        raise ValueError(f"{fields_path}: checkpoint lacks a dims line")
    fields = forward(raw, dims, cfg.mixing)
    result = cluster_instances(fields, cfg.heat_threshold, cfg.min_pixels, cfg.losses.mode)
    path = out_dir / "pred.lab"
    write_trackset(path, _as_trackset(result))
    return path


def _as_trackset(result: ClusterResult) -> TrackSet:
    return TrackSet(result.labeling, {i.instance_id: {"confidence": i.seed_heat} for i in result.instances})


def run_stitch(cfg: PipelineConfig, clip_paths, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    windows = split_clips(cfg.dims.t_len, cfg.clip_len, cfg.overlap)
    if len(clip_paths) != len(windows):
        raise ValueError(f"expected {len(windows)} clip files for {cfg.dims.t_len} frames, got {len(clip_paths)}")
    clips = [read_trackset(p) for p in clip_paths]
    tracks = stitch(clips, windows, cfg.min_assoc_iou)
    path = out_dir / "tracks.lab"
    write_trackset(path, tracks)
    return path


def run_eval(cfg: PipelineConfig, pred_path, gt_path, out_dir) -> EvalReport:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pred = read_trackset(pred_path)
    for k in pred.track_ids():
        # a bare labeling carries no scores; rank its tracks equally
        pred.meta.setdefault(k, {}).setdefault("confidence", 1.0)
    gt = TrackSet(read_labeling(gt_path))
    report = evaluate(pred, gt, cfg.boundary_radius)
    _write_json(out_dir / "report.json", report.to_dict())
    (out_dir / "report.txt").write_text(format_report_table(report))
    with open(out_dir / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gt_id", "pred_id", "j", "f"])
        for r in report.tracks:
            w.writerow([r.gt_id, "" if r.pred_id is None else r.pred_id, f"{r.j:.6f}", f"{r.f:.6f}"])
    plotting.plot_metrics(report, out_dir / "figures" / "metrics.png")
    plotting.plot_tracks_montage(pred.labeling.labels, gt.labeling.labels,
                                 out_dir / "figures" / "tracks.png")
    return report


def run_render(labeling_path, out_dir, prefix: str = "frame"):
    return render_labeling(read_labeling(labeling_path), out_dir, prefix)


def _process_clip(args):
    cfg, clip_dir = args
    _, history = run_optimize(cfg, clip_dir / "gt.lab", clip_dir)
    run_infer(cfg, clip_dir / "fields.txt", clip_dir)
    return history


def run_pipeline(cfg: PipelineConfig, out_dir, jobs: int = 1) -> EvalReport:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.toml").write_text(dump(cfg.raw))
    gt_path = run_synth(cfg, out_dir)
    gt = read_labeling(gt_path)
    windows = split_clips(cfg.dims.t_len, cfg.clip_len, cfg.overlap)
    clip_dirs = []
    for i, w in enumerate(windows):
        d = out_dir / "clips" / f"clip_{i:02d}"
        d.mkdir(parents=True, exist_ok=True)
        write_labeling(d / "gt.lab", gt.frames(w.start, w.end))
        clip_dirs.append(d)

    tasks = [(cfg, d) for d in clip_dirs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            histories = list(pool.map(_process_clip, tasks))
    else:
        histories = [_process_clip(t) for t in tasks]

    tracks_path = run_stitch(cfg, [d / "pred.lab" for d in clip_dirs], out_dir)
    report = run_eval(cfg, tracks_path, gt_path, out_dir)
    run_render(tracks_path, out_dir / "frames", "pred")
    run_render(gt_path, out_dir / "frames", "gt")
    plotting.plot_loss_curves({d.name: h for d, h in zip(clip_dirs, histories)},
                              out_dir / "figures" / "loss.png")
    return report
