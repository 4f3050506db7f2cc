"""Command-line entry point: ``penalized-nsf {simulate,validate-eos,sweep} CONFIG``."""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import thermo
from .cascade import SweepPlan, run_sweep, trend_verdicts
from .config import COMMANDS, ConfigError, RunConfig, dump_config, parse_config, validate
from .diagnostics import dissipation_inequality, energy_balance_residual
from .scenarios import make_problem, run_scenario

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


@dataclass
class Summary:
    """``key = value`` lines plus named PASS/FAIL verdicts."""

    values: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def verdict(self, name: str, passed: bool) -> None:
        self.verdicts[name] = bool(passed)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def text(self) -> str:
        lines = [f"{k} = {_fmt(v)}" for k, v in self.values.items()]
        lines += [f"verdict.{k} = {'PASS' if v else 'FAIL'}" for k, v in self.verdicts.items()]
        lines.append(f"status = {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    return out


def simulate(cfg: RunConfig, out: Path) -> Summary:
    problem = make_problem(cfg.run.scenario, cfg.run.n, params=cfg.penalty, scheme=cfg.scheme, model=cfg.model,
                           coeffs=cfg.transport, t_end=cfg.run.t_end)
    t0 = time.perf_counter()
    report, _ = run_scenario(problem, cfg.run.t_end, cfg.run.snapshot_times, out / "snapshots")
    elapsed = time.perf_counter() - t0
    report.to_csv(out / "diagnostics.csv")

    s = Summary()
    s.values.update(command="simulate", scenario=cfg.run.scenario, n=problem.grid.n[0], t_end=cfg.run.t_end,
                    checkpoints=len(report.rows), snapshots=len(cfg.run.snapshot_times))
    s.values.update(report.summary)
    lhs, rhs, violated = dissipation_inequality(report, cfg.assertions.dissipation_tol or 0.0)
    resid = energy_balance_residual(report, cfg.penalty.epsilon)
    s.values.update(energy_residual_max=float(np.max(np.abs(resid))), dissipation_lhs_min=float(np.min(lhs)),
                    dissipation_violations=int(np.count_nonzero(violated)), runtime_s=round(elapsed, 3))
    a = cfg.assertions
    if a.mass_tol is not None:
        s.verdict("mass_conservation", report.summary["mass_drift_max"] <= a.mass_tol)
    if a.sigma_tol is not None:
        s.verdict("entropy_production", report.summary["sigma_min"] >= -a.sigma_tol)
    if a.lhs_tol is not None:
        s.verdict("dissipation_lhs_nonnegative", float(np.min(lhs)) >= -a.lhs_tol)
    if a.dissipation_tol is not None:
        s.verdict("dissipation_inequality", not np.any(violated))
    if a.energy_tol is not None:
        s.verdict("energy_balance", float(np.max(np.abs(resid))) <= a.energy_tol)
    if a.confinement_max is not None:
        s.verdict("confinement", report.summary["confinement_max_rel"] <= a.confinement_max)
    return s


def validate_eos(cfg: RunConfig, out: Path) -> Summary:
    checks = thermo.check_hypotheses(cfg.model, cfg.transport)
    s = Summary()
    s.values["command"] = "validate-eos"
    for c in checks:
        if c.detail:
            s.values[f"detail.{c.name}"] = c.detail
        s.verdict(c.name, c.passed)
    return s


def sweep(cfg: RunConfig, out: Path) -> Summary:
    plan = SweepPlan(cfg.run.scenario, cfg.sweep.parameter, cfg.sweep.ladder, frozen=cfg.penalty, n=cfg.run.n,
                     t_end=cfg.run.t_end, scheme=cfg.scheme, metrics=cfg.sweep.metrics, coeffs=cfg.transport)
    table = run_sweep(plan, raise_on_failure=False)
    table.to_csv(out / "sweep_table.csv")
    s = Summary()
    s.values.update(command="sweep", scenario=cfg.run.scenario, parameter=plan.parameter,
                    ladder=" ".join(repr(v) for v in plan.ladder), complete=table.complete)
    for f in table.failures:
        s.values[f"failure.{f.index}"] = f.message
    s.verdict("sweep_complete", table.complete)
    for v in trend_verdicts(table, min_slopes=dict(cfg.sweep.min_slopes)):
        s.values[f"slope.{v.metric}"] = v.slope
        s.values[f"r2.{v.metric}"] = v.r2
        s.verdict(f"trend.{v.metric}", v.passed)
    return s


HANDLERS = {"simulate": simulate, "validate-eos": validate_eos, "sweep": sweep}


def run(cfg: RunConfig, quiet: bool = False) -> int:
    """Execute the configured subcommand; 0 iff every enabled assertion passes."""
    out = _prepare_output(cfg)
    summary = HANDLERS[cfg.run.command](cfg, out)
    text = summary.text()
    (out / "summary.txt").write_text(text)
    if not quiet:
        sys.stdout.write(text)
    return EXIT_PASS if summary.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="penalized-nsf", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="configuration file")
    p.add_argument("--output", help="output directory (overrides [run] output)")
    p.add_argument("--quiet", action="store_true", help="do not echo the summary")
    p.add_argument("--print-config", action="store_true", help="print the normalized configuration and exit")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config).with_command(args.command)
        if args.output:
            cfg = cfg.with_output(args.output)
        validate(cfg, args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_PASS
    try:
        return run(cfg, quiet=args.quiet)
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
