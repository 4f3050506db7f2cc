"""Penalty ladder on the piston: flux integral slope and leaked mass."""

import argparse

from penalized_nsf.cascade import SweepPlan, fit_trend, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--ladder", type=float, nargs="+", default=[1e-2, 5e-3, 2.5e-3, 1.25e-3])
    args = ap.parse_args()

    plan = SweepPlan("piston1d", "epsilon", tuple(args.ladder), n=args.n, t_end=args.t_end,
                     metrics=("penalty_flux_int", "confinement_max_rel"))
    table = run_sweep(plan)
    for row in table.rows:
        print(f"eps {row['epsilon']:.3e}  int F {row['penalty_flux_int']:.3e}  "
              f"C/M0 {row['confinement_max_rel']:.3e}")
    for m in plan.metrics:
        slope, r2 = fit_trend(table, m)
        print(f"{m}: slope {slope:.3f}, r2 {r2:.4f}")


if __name__ == "__main__":
    main()
