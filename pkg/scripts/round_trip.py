"""Simulate and analyse the nominal configuration, then compare with the
noiseless pixelated-pair reference computed from the same model."""
import argparse
import os
import sys

from biphoton import pipeline
from biphoton.config import ExperimentConfig, FrameCounts, load_config
from biphoton.model import model_from_pump

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from oracles import oracle_width_px  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--frames", type=int, default=100_000)
    ap.add_argument("--pairs", type=int, default=10_000_000, help="reference pair count")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/round_trip")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig(
        frames=FrameCounts(dark=20_000, near=args.frames, far=args.frames))
    run = pipeline.run_pipeline(cfg, workers=args.workers)
    pipeline.emit_outputs(run, args.out, plots=True)
    model = model_from_pump(cfg.pump.beam(), cfg.crystal_spec())
    print(f"{'axis':8} {'pipeline/px':>12} {'reference/px':>13} {'deviation':>10}")
    for name, axis in run.axes().items():
        optics = cfg.near if name.startswith("near") else cfg.far
        ref = oracle_width_px(model, cfg.camera, optics, name[-1], n_pairs=args.pairs)[0]
        print(f"{name:8} {axis.width_px:12.3f} {ref:13.3f} {axis.width_px / ref - 1:+10.1%}")
    e = run.entanglement
    print(f"gamma_x {e.gamma_x:.4f} (model {run.theory.gamma_x:.4f}), "
          f"gamma_y {e.gamma_y:.4f} (model {run.theory.gamma_y:.4f})")


if __name__ == "__main__":
    main()
