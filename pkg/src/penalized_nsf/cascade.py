"""One-parameter sweeps over the penalty cascade and log-log trend fits."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import thermo
from .fields import CsvSeries
from .scenarios import make_problem, run_scenario, scenario
from .solver import PenaltyParams, SchemeConfig

SWEEPABLE = ("epsilon", "eta", "omega", "nu", "lam", "delta")
DEFAULT_METRICS = ("penalty_flux_int", "confinement_max_rel", "solid_visc_int", "solid_cond_int", "solid_rad_int")


@dataclass(frozen=True)
class SweepPlan:
    scenario: str
    parameter: str
    ladder: tuple
    frozen: PenaltyParams = field(default_factory=PenaltyParams)
    n: Optional[int] = None
    t_end: float = 0.5
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    metrics: tuple = DEFAULT_METRICS
    coeffs: thermo.TransportCoeffs = field(default_factory=thermo.TransportCoeffs)
    # repeated ladders are only for determinism checks
    strict: bool = True

    def __post_init__(self):
        scenario(self.scenario)
        if self.parameter not in SWEEPABLE:
            raise ValueError(f"cannot sweep {self.parameter!r}; choose one of {', '.join(SWEEPABLE)}")
        ladder = tuple(float(v) for v in self.ladder)
        object.__setattr__(self, "ladder", ladder)
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if len(ladder) < 3:
            raise ValueError(f"a sweep needs at least 3 ladder values, got {len(ladder)}")
        if any(not (v > 0 and math.isfinite(v)) for v in ladder):
            raise ValueError("ladder values must be positive and finite")
        if self.strict and any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"ladder must be strictly decreasing, got {ladder}")
        if not self.metrics:
            raise ValueError("no metrics requested")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        for v in ladder:
            self.params_for(v)

    @classmethod
    def geometric(cls, scenario: str, parameter: str, start: float, count: int = 4, ratio: float = 0.5, **kw):
        if not 0 < ratio < 1:
            raise ValueError("ladder ratio must lie in (0, 1)")
        return cls(scenario, parameter, tuple(start * ratio**k for k in range(count)), **kw)

    @classmethod
    def repeated(cls, scenario: str, parameter: str, value: float, count: int = 3, **kw):
        return cls(scenario, parameter, (value,) * count, strict=False, **kw)

    def params_for(self, value: float) -> PenaltyParams:
        return replace(self.frozen, **{self.parameter: value})


@dataclass
class SweepFailure:
    index: int
    value: float
    message: str


@dataclass
class SweepTable:
    parameter: str
    metrics: tuple
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failures

    def values(self) -> np.ndarray:
        return np.array([r[self.parameter] for r in self.rows], dtype=float)

    def column(self, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows], dtype=float)

    def to_csv(self, path) -> Path:
        csv = CsvSeries(("index", self.parameter) + self.metrics)
        for r in self.rows:
            csv.append(r)
        return csv.write(path)


class SweepError(RuntimeError):
    def __init__(self, table: SweepTable):
        f = table.failures[0]
        super().__init__(f"ladder index {f.index} ({table.parameter} = {f.value:g}) failed: {f.message}"
                         + (f" (+{len(table.failures) - 1} more)" if len(table.failures) > 1 else ""))
        self.table = table


def worker_count(jobs: int) -> int:
    cap = os.environ.get("NSF_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = int(cap)
        except ValueError:
            raise ValueError(f"NSF_THREADS must be an integer, got {cap!r}") from None
        if limit < 1:
            raise ValueError("NSF_THREADS must be at least 1")
    return max(1, min(limit, jobs))


def _extract(report, metric: str) -> float:
    if metric in report.summary:
        return float(report.summary[metric])
    if report.rows and metric in report.rows[-1]:
        return float(report.rows[-1][metric])
    raise KeyError(f"unknown metric {metric!r}")


def plan_problem(plan: SweepPlan, value: float):
    return make_problem(plan.scenario, plan.n, params=plan.params_for(value), scheme=plan.scheme,
                        coeffs=plan.coeffs, t_end=plan.t_end)


def extract_metrics(plan: SweepPlan, report) -> dict:
    return {m: _extract(report, m) for m in plan.metrics}


def run_single(plan: SweepPlan, value: float) -> dict:
    report, _ = run_scenario(plan_problem(plan, value), plan.t_end)
    return extract_metrics(plan, report)


def run_sweep(plan: SweepPlan, raise_on_failure: bool = True, runner=None) -> SweepTable:
    """One run per ladder value; rows are ordered by ladder index whatever the completion order.

    ``runner(plan, value) -> metrics`` replaces the default simulator call.
    """
    table = SweepTable(plan.parameter, plan.metrics)
    runner = runner or run_single

    def job(i):
        try:
            return i, runner(plan, plan.ladder[i]), None
        except Exception as exc:  # reported per index
            return i, None, f"{type(exc).__name__}: {exc}"

    jobs = range(len(plan.ladder))
    workers = worker_count(len(plan.ladder))
    if workers == 1:
        results = [job(i) for i in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, jobs))
    for i, metrics, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            table.failures.append(SweepFailure(i, plan.ladder[i], err))
        else:
            table.rows.append({"index": i, plan.parameter: plan.ladder[i], **metrics})
    if table.failures and raise_on_failure:
        raise SweepError(table)
    return table


def fit_trend(table: SweepTable, metric: str) -> tuple[float, float]:
    """Least-squares slope of log(metric) against log(parameter), with R^2."""
    x, y = table.values(), table.column(metric)
    if len(y) < 3:
        raise ValueError(f"trend fit needs at least 3 rows, got {len(y)}")
    if np.any(~(y > 0)):
        raise ValueError(f"metric {metric!r} has nonpositive values; log-log fit undefined")
    if np.unique(x).size < 2:
        raise ValueError("trend fit needs at least two distinct parameter values")
    fit = stats.linregress(np.log(x), np.log(y))
    return float(fit.slope), float(fit.rvalue**2)


@dataclass
class TrendVerdict:
    metric: str
    decreasing: bool
    slope: float
    r2: float
    min_slope: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.decreasing and (self.min_slope is None or self.slope >= self.min_slope)

    def line(self) -> str:
        need = "" if self.min_slope is None else f" (need >= {self.min_slope:g})"
        return (f"trend_{self.metric} = {'PASS' if self.passed else 'FAIL'}  "
                f"decreasing={self.decreasing} slope={self.slope:.4g}{need} r2={self.r2:.4g}")


def strictly_decreasing(y: Sequence[float]) -> bool:
    y = np.asarray(y, dtype=float)
    return bool(np.all(np.diff(y) < 0))


def trend_verdicts(table: SweepTable, metrics: Optional[Sequence[str]] = None,
                   min_slopes: Optional[dict] = None) -> list[TrendVerdict]:
    """Each metric must shrink strictly along the ladder; optional slope floors per metric."""
    min_slopes = min_slopes or {}
    out = []
    for m in metrics or table.metrics:
        y = table.column(m)
        try:
            slope, r2 = fit_trend(table, m)
        except ValueError:
            slope, r2 = math.nan, math.nan
        out.append(TrendVerdict(m, table.complete and strictly_decreasing(y), slope, r2, min_slopes.get(m)))
    return out
