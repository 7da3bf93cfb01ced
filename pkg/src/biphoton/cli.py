"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import pipeline
from .config import ConfigError, ExperimentConfig, load_config
from .simulator import SimulatedSource, block_ranges, map_blocks, _Render
from .stackio import StackFormatError, write_stack_stream

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _betas(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad beta list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults if omitted")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=_seed, help="override the config seed")
    common.add_argument("--frames", type=_positive, help="override the frame count")
    common.add_argument("--workers", type=_positive, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="biphoton", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a near- or far-field stack")
    s.add_argument("--mode", choices=["near", "far"], required=True)
    sub.add_parser("simulate-dark", parents=[common], help="write a dark stack")

    a = sub.add_parser("analyze", parents=[common], help="analyse recorded stacks")
    a.add_argument("--dark", required=True)
    a.add_argument("--near", required=True)
    a.add_argument("--far", required=True)
    a.add_argument("--plots", action="store_true", help="also write SVG figures")

    r = sub.add_parser("pipeline", parents=[common], help="simulate and analyse one configuration")
    r.add_argument("--plots", action="store_true")

    w = sub.add_parser("sweep", parents=[common], help="run the pipeline over pump asymmetries")
    w.add_argument("--betas", type=_betas, default=[0.833, 0.552, 0.351, 0.193],
                   help="comma-separated beta values (default: 0.833,0.552,0.351,0.193)")
    w.add_argument("--plots", action="store_true")

    sub.add_parser("theory", parents=[common], help="print model predictions")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.override(seed=args.seed, frames=args.frames)


def _simulate(cfg: ExperimentConfig, tag: str, n_frames: int, path: str, workers: int):
    src = pipeline.sources_for(cfg)[tag]
    ranges = block_ranges(n_frames, 1024)
    step = max(1, workers) * 4

    def chunks():
        for i in range(0, len(ranges), step):
            yield from map_blocks(_Render(src), ranges[i:i + step], workers)

    write_stack_stream(path, cfg.camera.width_px, cfg.camera.height_px, src.seed, src.mode,
                       n_frames, chunks())
    return path


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    os.makedirs(args.out, exist_ok=True)
    if args.command == "theory":
        t = pipeline.theory_for(cfg)
        doc = {k: getattr(t, k) for k in t.__dataclass_fields__}
        doc["beta"] = cfg.pump.waist_y / cfg.pump.waist_x
        text = json.dumps(doc, indent=2) + "\n"
        with open(os.path.join(args.out, "theory.json"), "w") as fh:
            fh.write(text)
        sys.stdout.write(text)
        return EXIT_OK
    if args.command == "simulate":
        n = args.frames or getattr(cfg.frames, args.mode)
        print(_simulate(cfg, args.mode, n, os.path.join(args.out, f"{args.mode}.bpfs"), args.workers))
        return EXIT_OK
    if args.command == "simulate-dark":
        n = args.frames or cfg.frames.dark
        print(_simulate(cfg, "dark", n, os.path.join(args.out, "dark.bpfs"), args.workers))
        return EXIT_OK
    if args.command == "analyze":
        for path in (args.dark, args.near, args.far):
            if not os.path.isfile(path):
                raise ConfigError(f"no such stack file: {path}")
        result = pipeline.run_pipeline(cfg, workers=args.workers,
                                       stacks={"dark": args.dark, "near": args.near, "far": args.far})
    elif args.command == "pipeline":
        result = pipeline.run_pipeline(cfg, workers=args.workers)
    else:
        result = pipeline.sweep_beta(cfg, args.betas, workers=args.workers)
    files = pipeline.emit_outputs(result, args.out, plots=args.plots)
    _summary(result)
    print(files[0])
    return EXIT_OK


def _summary(result):
    runs = result.runs if isinstance(result, pipeline.SweepReport) else [result]
    for r in runs:
        e = r.entanglement
        print(f"beta={e.beta:.4f}  gamma_x={e.gamma_x:.4f}  gamma_y={e.gamma_y:.4f}  "
              f"modes_x={e.modes_x:.0f}  modes_y={e.modes_y:.0f}  "
              f"entangled_x={e.entangled_x}  entangled_y={e.entangled_y}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:  # argparse: usage errors are validation errors
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    except (ConfigError, StackFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except pipeline.PipelineError as exc:
        code = EXIT_INVALID if isinstance(exc.cause, (ConfigError, StackFormatError)) else EXIT_RUNTIME
        print(f"error in {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
