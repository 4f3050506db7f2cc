"""Solid-region dissipation under the omega, nu and eta ladders."""

import argparse

from penalized_nsf.cascade import SweepPlan, fit_trend, run_sweep, strictly_decreasing

SWEEPS = (("omega", "solid_visc_int"), ("nu", "solid_cond_int"), ("eta", "solid_rad_int"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--ladder", type=float, nargs="+", default=[1e-2, 5e-3, 2.5e-3])
    args = ap.parse_args()

    for param, metric in SWEEPS:
        plan = SweepPlan("piston1d", param, tuple(args.ladder), n=args.n, t_end=args.t_end, metrics=(metric,))
        table = run_sweep(plan)
        col = table.column(metric)
        slope, r2 = fit_trend(table, metric)
        print(f"{param:5s} {metric}: {', '.join(f'{v:.3e}' for v in col)}  "
              f"decreasing {strictly_decreasing(col)}, slope {slope:.3f} (r2 {r2:.3f})")


if __name__ == "__main__":
    main()
