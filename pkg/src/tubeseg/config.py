"""Pipeline configuration: one TOML file, ``--set section.key=value`` overrides."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import tomli

from .inference import DEFAULT_HEAT_THRESHOLD, DEFAULT_MIN_PIXELS
from .instance_model import ProbMode
from .losses import LossConfig
from .mixing import DEFAULT_V_FREE, MixingSpec
from .stitching import DEFAULT_MIN_ASSOC_IOU
from .synth import SynthConfig
from .trainer import OptimConfig
from .volume import VolumeDims


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict] = {
    "dims": {"t_len": 24, "height": 48, "width": 48},
    "synth": {
        "num_instances": 2, "shapes": ["rect", "disk"], "max_speed": 1.0,
        "size_range": [10, 16], "allow_enter_exit": False, "min_gap": 3, "seed": 0,
    },
    "mixing": {"kind": "xyff", "v_free": DEFAULT_V_FREE},
    "losses": {"w_emb": 1.0, "w_smooth": 1.0, "w_center": 1.0, "eps": 1e-6},
    "inference": {
        "heat_threshold": DEFAULT_HEAT_THRESHOLD, "min_pixels": DEFAULT_MIN_PIXELS,
        "prob_mode": "unnormalized",
    },
    "stitching": {"clip_len": 8, "overlap": 4, "min_assoc_iou": DEFAULT_MIN_ASSOC_IOU},
    "optimizer": {
        "lr": 1e-3, "momentum": 0.9, "decay": 0.9997, "max_steps": 3000, "tol": 1e-6,
        "seed": 0, "pixel_scaled": True,
    },
    "eval": {"boundary_radius": 0},   # 0 selects the frame-diagonal default
}


def _coerce(value: str, like):
    if isinstance(like, bool):
        low = value.lower()
        if low not in ("true", "false"):
            raise ConfigError(f"expected true/false, got {value!r}")
        return low == "true"
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, list):
        return [_coerce(v.strip(), like[0]) for v in value.split(",") if v.strip()]
    return value


def _merge(base: dict, updates: dict, where: str = "") -> None:
    for key, val in updates.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}{key} must be a table")
            _merge(base[key], val, f"{where}{key}.")
        else:
            base[key] = val


@dataclass(frozen=True)
class PipelineConfig:
    dims: VolumeDims
    synth: SynthConfig
    mixing: MixingSpec
    losses: LossConfig
    heat_threshold: float
    min_pixels: int
    clip_len: int
    overlap: int
    min_assoc_iou: float
    optimizer: OptimConfig
    boundary_radius: float | None
    raw: dict

    @property
    def clip_dims(self) -> VolumeDims:
        return VolumeDims(min(self.clip_len, self.dims.t_len), self.dims.height, self.dims.width)


def build(raw: dict) -> PipelineConfig:
    """Validate every section against its owning type before any work starts."""
    try:
        d = raw["dims"]
        dims = VolumeDims(int(d["t_len"]), int(d["height"]), int(d["width"]))
        s = raw["synth"]
        synth = SynthConfig(
            dims=dims, num_instances=int(s["num_instances"]), shapes=tuple(s["shapes"]),
            max_speed=float(s["max_speed"]), size_range=tuple(int(v) for v in s["size_range"]),
            allow_enter_exit=bool(s["allow_enter_exit"]),
            min_gap=None if s["min_gap"] is None or s["min_gap"] < 0 else int(s["min_gap"]),
            seed=int(s["seed"]),
        )
        mixing = MixingSpec(str(raw["mixing"]["kind"]), float(raw["mixing"]["v_free"]))
        inf = raw["inference"]
        losses = LossConfig(**{k: float(v) for k, v in raw["losses"].items()},
                            mode=ProbMode(inf["prob_mode"]))
        heat_threshold = float(inf["heat_threshold"])
        min_pixels = int(inf["min_pixels"])
        if not 0 < heat_threshold < 1:
            raise ValueError("inference.heat_threshold must lie in (0, 1)")
        if min_pixels < 1:
            raise ValueError("inference.min_pixels must be >= 1")
        st = raw["stitching"]
        clip_len, overlap = int(st["clip_len"]), int(st["overlap"])
        if clip_len < 1 or not 0 <= overlap < clip_len:
            raise ValueError("stitching needs clip_len >= 1 and 0 <= overlap < clip_len")
        min_assoc = float(st["min_assoc_iou"])
        if not 0 <= min_assoc <= 1:
            raise ValueError("stitching.min_assoc_iou must lie in [0, 1]")
        o = raw["optimizer"]
        optimizer = OptimConfig(lr=float(o["lr"]), momentum=float(o["momentum"]),
                                decay=float(o["decay"]), max_steps=int(o["max_steps"]),
                                tol=float(o["tol"]), seed=int(o["seed"]),
                                pixel_scaled=bool(o["pixel_scaled"]))
        radius = float(raw["eval"]["boundary_radius"])
        if radius < 0:
            raise ValueError("eval.boundary_radius must be >= 0")
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    return PipelineConfig(dims, synth, mixing, losses, heat_threshold, min_pixels, clip_len,
                          overlap, min_assoc, optimizer, radius or None, raw)


def load(path=None, overrides=(), seed: int | None = None) -> PipelineConfig:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        try:
            _merge(raw, tomli.loads(text))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        if section not in raw or name not in raw[section]:
            raise ConfigError(f"unknown config key {key.strip()}")
        try:
            raw[section][name] = _coerce(value.strip(), DEFAULTS[section][name])
        except ValueError as exc:
            raise ConfigError(f"{key.strip()}: {exc}") from None
    if seed is not None:
        raw["synth"]["seed"] = seed
        raw["optimizer"]["seed"] = seed
    return build(raw)


def dump(raw: dict) -> str:
    """Render a raw config dict as TOML."""
    lines = []
    for section, table in raw.items():
        lines.append(f"[{section}]")
        for key, val in table.items():
            lines.append(f"{key} = {_toml_value(val)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if v is None:
        return "-1"
    return repr(v)
