"""Report figures written next to the delimited outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .render import colorize  # noqa: E402

# PNG metadata carries the matplotlib version by default; drop it so
# reruns are byte-identical
_PNG_META = {"Software": None}


def savefig(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_loss_curves(histories: dict[str, list], path) -> Path:
    """Total loss and its three terms per clip on a log scale."""
    fig, axes = plt.subplots(1, 4, figsize=(14, 3.2), sharex=True)
    for name, hist in histories.items():
        steps = np.arange(len(hist))
        for ax, term in zip(axes, ("total", "emb", "smooth", "center")):
            vals = np.array([getattr(b, term) for b in hist])
            ax.plot(steps, np.maximum(vals, 1e-12), lw=1, label=name)
    for ax, term in zip(axes, ("total", "emb", "smooth", "center")):
        ax.set_yscale("log")
        ax.set_title(term)
        ax.set_xlabel("step")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    return savefig(fig, path)


def plot_metrics(report, path) -> Path:
    names = ["J", "F", "J&F", "mAP", "AR@1", "AR@10", "sMOTSA", "MOTSA", "MOTSP"]
    vals = [report.j_mean, report.f_mean, report.jf_mean, report.map, report.ar_at_1,
            report.ar_at_10, report.smotsa, report.motsa, report.motsp]
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.bar(names, vals, color="0.4")
    ax.axhline(1.0, color="k", lw=0.5, ls="--")
    ax.set_ylim(min(0.0, min(vals) - 0.05), 1.05)
    ax.set_title(f"IDS = {report.id_switches}")
    for i, v in enumerate(vals):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", va="bottom", fontsize=7)
    fig.tight_layout()
    return savefig(fig, path)


def plot_tracks_montage(pred_labels: np.ndarray, gt_labels: np.ndarray, path,
                        max_frames: int = 8) -> Path:
    """Ground truth (top) vs prediction (bottom) for evenly spaced frames."""
    t_len = gt_labels.shape[0]
    frames = np.unique(np.linspace(0, t_len - 1, min(max_frames, t_len)).round().astype(int))
    fig, axes = plt.subplots(2, len(frames), figsize=(1.6 * len(frames), 3.4), squeeze=False)
    for col, t in enumerate(frames):
        for row, labels in enumerate((gt_labels, pred_labels)):
            ax = axes[row, col]
            ax.imshow(colorize(labels[t]), interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
        axes[0, col].set_title(f"t={t}", fontsize=8)
    axes[0, 0].set_ylabel("gt")
    axes[1, 0].set_ylabel("pred")
    fig.tight_layout()
    return savefig(fig, path)
