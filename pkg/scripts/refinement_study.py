"""Grid refinement of the piston: residuals and a-priori norms at N = 400, 800, 1600."""

import argparse
import time

import numpy as np

from penalized_nsf.diagnostics import NORM_NAMES, energy_balance_residual
from penalized_nsf.scenarios import make_problem, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t-end", type=float, default=0.1)
    ap.add_argument("--ladder", type=int, nargs="+", default=[400, 800, 1600])
    args = ap.parse_args()

    last = {}
    for n in args.ladder:
        p = make_problem("piston1d", n, t_end=args.t_end)
        t0 = time.perf_counter()
        rep, _ = run_scenario(p, args.t_end)
        resid = np.max(np.abs(energy_balance_residual(rep, p.params.epsilon)))
        renorm = {k: np.max(np.abs(rep.series(f"renorm_{k}"))) for k in ("zero", "min", "frac")}
        print(f"N={n:5d} {time.perf_counter() - t0:6.1f}s energy {resid:.2e} "
              + " ".join(f"renorm_{k} {v:.2e}" for k, v in renorm.items()))
        row = rep.rows[-1]
        if last:
            diffs = {k: abs(row[k] - last[k]) / abs(row[k]) for k in NORM_NAMES if row[k]}
            print("    relative change vs previous: " + ", ".join(f"{k} {v:.1%}" for k, v in diffs.items()))
        last = row


if __name__ == "__main__":
    main()
