"""Binary PPM (P6) frame output for labelings."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .volume import InstanceLabeling

# fixed id -> colour table, cycled for ids beyond its length; index 0 is background
PALETTE = np.array([
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
], dtype=np.uint8)


def colorize(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    idx = np.where(labels == 0, 0, (labels - 1) % (len(PALETTE) - 1) + 1)
    return PALETTE[idx]


def ppm_bytes(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # header is exactly the layout written by ppm_bytes
    magic, size, maxval, body = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = (int(v) for v in size.split())
    return np.frombuffer(body[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def render_labeling(lab: InstanceLabeling, out_dir, prefix: str = "frame") -> list[Path]:
    """One PPM per frame: background black, instance k in ``PALETTE`` colour k."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(lab.dims.t_len):
        p = out_dir / f"{prefix}_{t:04d}.ppm"
        p.write_bytes(ppm_bytes(colorize(lab.labels[t])))
        paths.append(p)
    return paths
