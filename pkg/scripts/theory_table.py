"""Model predictions for the pump asymmetries used in the experiments."""
import argparse

from biphoton.model import (CrystalSpec, PumpBeam, conditional_momentum_width,
                            conditional_position_width, gamma_product, mode_count,
                            model_from_pump)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--waist", type=float, default=766e-6, help="waist along x in metres")
    ap.add_argument("--betas", default="1.0,0.833,0.552,0.351,0.193,0.061,0.03")
    args = ap.parse_args()
    crystal = CrystalSpec()
    print(f"{'beta':>6} {'dx_y/um':>8} {'dp_y':>9} {'gamma_x':>8} {'gamma_y':>8} {'N_x':>6} {'N_y':>6}")
    for beta in (float(b) for b in args.betas.split(",")):
        m = model_from_pump(PumpBeam(args.waist, beta * args.waist), crystal)
        sm = m.sigma_minus
        print(f"{beta:6.3f} {conditional_position_width(m.sigma_plus_y, sm) * 1e6:8.3f} "
              f"{conditional_momentum_width(m.sigma_plus_y, sm):9.1f} "
              f"{gamma_product(m.sigma_plus_x, sm):8.4f} {gamma_product(m.sigma_plus_y, sm):8.4f} "
              f"{mode_count(m.sigma_plus_x, sm):6.0f} {mode_count(m.sigma_plus_y, sm):6.0f}")


if __name__ == "__main__":
    main()
