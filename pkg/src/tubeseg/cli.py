"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 optimizer divergence. Errors print one line:
``tubeseg: error kind=<kind> message=<json string>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import pipeline
from .config import ConfigError
from .metrics import format_report_table
from .synth import AffineJitterConfig, augment_image_to_clip
from .trainer import DivergenceError
from .volume import FormatError, read_labeling, write_labeling

EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override one config value")
    p.add_argument("--seed", type=int, help="seed for synthesis and optimizer")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="directory for outputs (default: out)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tubeseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth labeling")
    _common(p)
    p.add_argument("--from-image", type=Path,
                   help="single-frame labeling to turn into a clip by affine jitter")
    p.add_argument("--frames", type=int, default=8, help="clip length for --from-image")

    p = sub.add_parser("optimize", help="fit raw fields to a labeling")
    _common(p)
    p.add_argument("--gt", type=Path, required=True)

    p = sub.add_parser("infer", help="cluster instances from a field checkpoint")
    _common(p)
    p.add_argument("--fields", type=Path, required=True)

    p = sub.add_parser("stitch", help="associate per-clip predictions into tracks")
    _common(p)
    p.add_argument("--clips", type=Path, nargs="+", required=True)

    p = sub.add_parser("eval", help="score predicted tracks against ground truth")
    _common(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)

    p = sub.add_parser("render", help="write one PPM per frame")
    _common(p)
    p.add_argument("--labeling", type=Path, required=True)
    p.add_argument("--prefix", default="frame")

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _common(p)
    p.add_argument("--jobs", type=int, default=1, help="clips optimized in parallel")
    return parser


def _run(args) -> int:
    cfg = config_mod.load(args.config, args.overrides, args.seed)
    out = args.out_dir
    if args.command == "synth":
        if args.from_image:
            base = read_labeling(args.from_image)
            seed = cfg.synth.seed
            clip = augment_image_to_clip(base, args.frames, AffineJitterConfig(seed=seed))
            out.mkdir(parents=True, exist_ok=True)
            write_labeling(out / "gt.lab", clip)
            print(out / "gt.lab")
        else:
            print(pipeline.run_synth(cfg, out))
    elif args.command == "optimize":
        path, _ = pipeline.run_optimize(cfg, args.gt, out)
        print(path)
    elif args.command == "infer":
        print(pipeline.run_infer(cfg, args.fields, out))
    elif args.command == "stitch":
        print(pipeline.run_stitch(cfg, args.clips, out))
    elif args.command == "eval":
        report = pipeline.run_eval(cfg, args.pred, args.gt, out)
        sys.stdout.write(format_report_table(report))
    elif args.command == "render":
        for p in pipeline.run_render(args.labeling, out, args.prefix):
            print(p)
    elif args.command == "pipeline":
        report = pipeline.run_pipeline(cfg, out, args.jobs)
        sys.stdout.write(format_report_table(report))
    return 0


def _fail(kind: str, code: int, exc: BaseException) -> int:
    print(f"tubeseg: error kind={kind} message={json.dumps(str(exc))}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except DivergenceError as exc:
        return _fail("divergence", EXIT_DIVERGED, exc)
    except (OSError, FormatError) as exc:
        return _fail("io", EXIT_IO, exc)
    except ValueError as exc:
        return _fail("input", EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
