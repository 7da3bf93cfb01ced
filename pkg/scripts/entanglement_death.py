"""Push the pump asymmetry until the y axis fails the EPR bound while x keeps it."""
import argparse

from biphoton import pipeline
from biphoton.config import ExperimentConfig, FrameCounts


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--betas", default="0.061,0.04,0.03,0.025,0.02")
    ap.add_argument("--frames", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/death")
    args = ap.parse_args()
    cfg = ExperimentConfig(frames=FrameCounts(dark=20_000, near=args.frames, far=args.frames),
                           seed=args.seed)
    sweep = pipeline.sweep_beta(cfg, [float(b) for b in args.betas.split(",")], workers=args.workers)
    pipeline.emit_outputs(sweep, args.out, plots=True)
    window = cfg.camera.height_px
    for beta, run in zip(sweep.betas, sweep.runs):
        e = run.entanglement
        verdict = "death" if e.entangled_x and not e.entangled_y else "both entangled" \
            if e.entangled_y else "none"
        print(f"beta={beta:.3f} gamma_x={e.gamma_x:.3f} gamma_y={e.gamma_y:.3f} "
              f"far-field y width {run.far_y.width_px:6.1f} px ({run.far_y.width_px / window:.0%} "
              f"of window)  {verdict}")


if __name__ == "__main__":
    main()
