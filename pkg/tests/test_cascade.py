import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from penalized_nsf.cascade import (
    SweepError, SweepPlan, SweepTable, TrendVerdict, fit_trend, run_sweep, strictly_decreasing, trend_verdicts,
    worker_count,
)


def table_from(param, values, metric, ys):
    t = SweepTable(param, (metric,))
    for i, (v, y) in enumerate(zip(values, ys)):
        t.rows.append({"index": i, param: v, metric: y})
    return t


# ---------------------------------------------------------------------------
# plans


def test_geometric_ladder():
    plan = SweepPlan.geometric("piston1d", "epsilon", 1e-2, count=4)
    assert plan.ladder == (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    assert plan.params_for(5e-3).epsilon == 5e-3
    assert plan.params_for(5e-3).eta == plan.frozen.eta


@pytest.mark.parametrize("kw, match", [
    (dict(parameter="beta", ladder=(1, 2, 3)), "cannot sweep"),
    (dict(parameter="epsilon", ladder=(1e-2, 5e-3)), "at least 3"),
    (dict(parameter="epsilon", ladder=(1e-2, 0.0, -1.0)), "positive"),
    (dict(parameter="epsilon", ladder=(1e-2, 2e-2, 5e-3)), "strictly decreasing"),
    (dict(parameter="eta", ladder=(2.0, 1.5, 1.2)), "contrast"),
])
def test_plan_validation(kw, match):
    with pytest.raises(ValueError, match=match):
        SweepPlan("piston1d", **kw)


def test_unknown_scenario():
    with pytest.raises(ValueError, match="unknown scenario"):
        SweepPlan("tube3d", "epsilon", (3e-3, 2e-3, 1e-3))


def test_repeated_ladder_allowed_only_explicitly():
    with pytest.raises(ValueError):
        SweepPlan("piston1d", "epsilon", (1e-3,) * 3)
    assert SweepPlan.repeated("piston1d", "epsilon", 1e-3).ladder == (1e-3,) * 3


# ---------------------------------------------------------------------------
# fits


def test_fit_recovers_slopes():
    x = np.array([1e-2, 5e-3, 2.5e-3])
    for slope in (1.0, 0.5):
        s, r2 = fit_trend(table_from("epsilon", x, "m", 3.0 * x**slope), "m")
        assert s == pytest.approx(slope, abs=1e-12) and r2 == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.1, 3.0), st.floats(1e-3, 1e3), st.integers(3, 6))
def test_fit_slope_property(slope, c, n):
    x = 1e-2 * 0.5 ** np.arange(n)
    s, r2 = fit_trend(table_from("nu", x, "m", c * x**slope), "m")
    assert s == pytest.approx(slope, rel=1e-9) and r2 == pytest.approx(1.0, abs=1e-9)


def test_fit_rejects_degenerate_data():
    x = [1e-2, 5e-3, 2.5e-3]
    with pytest.raises(ValueError, match="nonpositive"):
        fit_trend(table_from("nu", x, "m", [1.0, 0.0, 0.5]), "m")
    with pytest.raises(ValueError, match="at least 3"):
        fit_trend(table_from("nu", x[:2], "m", [1.0, 0.5]), "m")
    with pytest.raises(ValueError, match="distinct"):
        fit_trend(table_from("nu", [1e-3] * 3, "m", [1.0, 0.9, 0.8]), "m")


def test_trend_verdicts():
    x = np.array([1e-2, 5e-3, 2.5e-3])
    t = table_from("epsilon", x, "m", x**1.2)
    (v,) = trend_verdicts(t, min_slopes={"m": 1.5})
    assert v.decreasing and not v.passed and "need >= 1.5" in v.line()
    (v,) = trend_verdicts(t, min_slopes={"m": 1.0})
    assert v.passed and v.line().startswith("trend_m = PASS")
    (v,) = trend_verdicts(table_from("epsilon", x, "m", [1.0, 1.0, 0.5]))
    assert not v.decreasing


def test_trend_verdict_with_failed_fit_is_not_a_pass():
    v = TrendVerdict("m", False, math.nan, math.nan)
    assert not v.passed


def test_strictly_decreasing():
    assert strictly_decreasing([3, 2, 1])
    assert not strictly_decreasing([3, 3, 1])


# ---------------------------------------------------------------------------
# execution


def fake_runner(plan, value):
    return {m: value * (k + 1) for k, m in enumerate(plan.metrics)}


def test_rows_follow_ladder_order(monkeypatch):
    monkeypatch.setenv("NSF_THREADS", "3")
    plan = SweepPlan.geometric("piston1d", "omega", 1e-2, count=5, metrics=("a", "b"))
    t = run_sweep(plan, runner=fake_runner)
    assert [r["index"] for r in t.rows] == list(range(5))
    assert np.allclose(t.column("b"), 2 * np.array(plan.ladder))


def test_failure_is_reported_with_ladder_index():
    plan = SweepPlan.geometric("piston1d", "nu", 1e-2, count=3, metrics=("a",))

    def runner(plan, value):
        if value == plan.ladder[1]:
            raise RuntimeError("solver blew up")
        return fake_runner(plan, value)

    with pytest.raises(SweepError, match=r"ladder index 1 \(nu = 0\.005\) failed: RuntimeError: solver blew up"):
        run_sweep(plan, runner=runner)
    t = run_sweep(plan, raise_on_failure=False, runner=runner)
    assert not t.complete and [r["index"] for r in t.rows] == [0, 2]
    assert not any(v.passed for v in trend_verdicts(t))


def test_threaded_sweep_matches_sequential(monkeypatch):
    plan = SweepPlan("piston1d", "epsilon", (2e-3, 1e-3, 5e-4), n=200, t_end=0.05,
                     metrics=("penalty_flux_int", "confinement_max_rel"))
    monkeypatch.setenv("NSF_THREADS", "1")
    seq = run_sweep(plan)
    monkeypatch.setenv("NSF_THREADS", "3")
    par = run_sweep(plan)
    assert seq.rows == par.rows


def test_repeated_ladder_is_deterministic():
    plan = SweepPlan.repeated("piston1d", "epsilon", 1e-3, n=200, t_end=0.05, metrics=("penalty_flux_int",))
    t = run_sweep(plan)
    col = t.column("penalty_flux_int")
    assert col[0] > 0 and np.all(col == col[0])


def test_worker_count(monkeypatch):
    monkeypatch.setenv("NSF_THREADS", "2")
    assert worker_count(5) == 2 and worker_count(1) == 1
    monkeypatch.setenv("NSF_THREADS", "zero")
    with pytest.raises(ValueError, match="integer"):
        worker_count(3)
    monkeypatch.setenv("NSF_THREADS", "0")
    with pytest.raises(ValueError, match="at least 1"):
        worker_count(3)
    monkeypatch.delenv("NSF_THREADS")
    assert 1 <= worker_count(4) <= 4


def test_table_csv(tmp_path):
    t = table_from("lam", [1e-2, 1e-3, 1e-4], "m", [3.0, 2.0, 1.0])
    lines = t.to_csv(tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,lam,m" and lines[1] == "0,0.01,3.0"
