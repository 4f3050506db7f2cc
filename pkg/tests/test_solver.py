import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from penalized_nsf import solver, thermo
from penalized_nsf.diagnostics import confinement_mass, total_energy
from penalized_nsf.fields import Grid, State
from penalized_nsf.geometry import Disk, MovingDomain, VelocityFieldSpec
from penalized_nsf.scenarios import initial_data, make_problem
from penalized_nsf.solver import (
    NegativeDensityError, PenaltyParams, Problem, SchemeConfig, SolverError, StiffnessError, advance, compute_dt,
    conduction_update, continuity_step, geometry_at, momentum_step, penalty_relaxation, primitives, step,
    step_bounds,
)


def fixed(n=64, scheme=None, **params):
    return make_problem("fixedbox", n, params=PenaltyParams(**params), scheme=scheme, t_end=0.1)


def uniform_state(problem, rho=1.0, theta=1.0, u=None):
    g = problem.grid
    geom = geometry_at(problem, 0.0)
    r = np.full(g.shape, rho)
    mom = np.zeros((g.dim,) + g.shape) if u is None else r * u
    return State(r, mom, thermo.internal_energy(problem.model, r, np.full(g.shape, theta), geom.a_loc(problem.model)))


# ---------------------------------------------------------------------------
# parameters


@pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(eta=-1.0), dict(omega=2.0), dict(beta=3.0),
                                dict(lam=1.5), dict(alpha=math.inf)])
def test_penalty_params_rejected(kw):
    with pytest.raises(ValueError):
        PenaltyParams(**kw)


def test_scheme_config_rejected():
    with pytest.raises(ValueError):
        SchemeConfig(cfl=1.0)
    with pytest.raises(ValueError):
        SchemeConfig(reconstruction="weno")


def test_alpha_below_spacing_rejected():
    with pytest.raises(ValueError, match="alpha"):
        make_problem("fixedbox", 128, params=PenaltyParams(alpha=0.005))


# ---------------------------------------------------------------------------
# continuity


def test_continuity_at_rest_is_identity():
    p = fixed()
    s = initial_data(p)
    rho, _, _ = continuity_step(s, p.grid, np.zeros((1,) + p.grid.shape), 1e-3)
    assert np.array_equal(rho, s.rho)


def test_square_pulse_translates_one_cell():
    g = Grid.uniform(1, 64)
    rho = np.zeros(64)
    rho[20:30] = 1.0
    s = State(rho, np.zeros((1, 64)), np.ones(64))
    new, _, _ = continuity_step(s, g, np.ones((1, 64)), g.h, reconstruction="upwind")
    assert np.array_equal(new, np.roll(rho, 1))
    assert abs(new.sum() - rho.sum()) * g.h <= 1e-14


def test_cfl_violation_signals_negative_density():
    g = Grid.uniform(1, 64)
    rho = np.zeros(64)
    rho[20:30] = 1.0
    s = State(rho, np.zeros((1, 64)), np.ones(64))
    with pytest.raises(NegativeDensityError, match="cell"):
        continuity_step(s, g, np.ones((1, 64)), 2 * g.h, reconstruction="upwind")


@given(hnp.arrays(float, 32, elements=st.floats(0.0, 5.0)), hnp.arrays(float, 32, elements=st.floats(-3.0, 3.0)),
       st.sampled_from(["upwind", "muscl", "superbee"]))
def test_mass_telescopes_and_stays_nonnegative(rho, u, recon):
    g = Grid.uniform(1, 32)
    umax = max(float(np.max(np.abs(u))), 1e-12)
    s = State(rho, np.zeros((1, 32)), np.ones(32))
    new, _, _ = continuity_step(s, g, u[None], 0.4 * g.h / (2 * umax), recon)
    assert abs(g.integrate(new) - g.integrate(rho)) <= 1e-12 * max(g.integrate(rho), 1e-300) + 1e-300
    assert np.all(new >= 0)


# ---------------------------------------------------------------------------
# interface penalty


def test_implicit_relaxation_halves_normal_velocity():
    n = np.array([[1.0], [0.0]])
    u = np.array([[1.0], [0.3]])
    out = penalty_relaxation(u, np.zeros_like(u), n, weight=np.array([2.0]), rho=np.array([1.0]), dt=0.5,
                             epsilon=1.0)
    assert out[0, 0] == 0.5
    assert out[1, 0] == 0.3


def test_relaxation_leaves_boundary_velocity_alone():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((2, 10))
    n = rng.standard_normal((2, 10))
    n /= np.linalg.norm(n, axis=0)
    out = penalty_relaxation(V.copy(), V, n, rng.random(10), rng.random(10) + 0.1, 0.1, 1e-3)
    assert np.array_equal(out, V)


def test_relaxation_tends_to_boundary_velocity_as_epsilon_vanishes():
    n = np.array([[0.6], [0.8]])
    u, V = np.array([[1.0], [2.0]]), np.array([[0.1], [0.0]])
    rel = [abs(float(np.sum((penalty_relaxation(u, V, n, np.ones(1), np.ones(1), 1e-3, e) - V) * n)))
           for e in (1e-2, 1e-4, 1e-6)]
    assert rel[0] > rel[1] > rel[2] and rel[2] < 1e-2


def translating_problem(implicit_penalty, n=48):
    grid = Grid.uniform(2, n)
    V = VelocityFieldSpec("translation", 2, velocity=(0.3, 0.1))
    dom = MovingDomain(Disk((0.5, 0.5), 0.2), V, grid, 0.05)
    scheme = SchemeConfig(implicit_diffusion=False, implicit_penalty=implicit_penalty)
    return Problem(grid, dom, thermo.EosModel(), thermo.TransportCoeffs(), PenaltyParams(alpha=0.05, eta=1.0),
                   scheme)


@pytest.mark.parametrize("implicit_penalty", [True, False])
def test_penalty_is_inert_when_velocity_matches(implicit_penalty):
    p = translating_problem(implicit_penalty)
    g = p.grid
    V = np.array([0.3, 0.1]).reshape(2, 1, 1) * np.ones((2,) + g.shape)
    s = uniform_state(p, u=V)
    geom = geometry_at(p, 0.0)
    prim = primitives(p, s, geom)
    dt = 0.5 * compute_dt(p, s, prim, geom)
    rho, fl, uf = continuity_step(s, g, prim.u, dt, p.scheme.reconstruction)
    gnew = geometry_at(p, dt)
    assert np.any(gnew.weight > 0)
    band = gnew.weight > 0
    with_pen = momentum_step(p, s, prim, rho, fl, uf, gnew, dt)
    without = momentum_step(p, s, prim, rho, fl, uf, replace(gnew, weight=np.zeros_like(gnew.weight)), dt)
    assert np.array_equal(with_pen[1][:, band], V[:, band])
    assert np.array_equal(with_pen[0], without[0])


def test_static_uniform_state_stays_at_rest():
    p = fixed(eta=1.0)
    s = uniform_state(p)
    res = step(p, s, compute_dt(p, s))
    assert np.max(np.abs(res.state.mom)) <= 1e-13


def test_uniform_state_energy_unchanged_without_sink():
    p = fixed(eta=1.0, lam=1e-300)
    s = uniform_state(p, theta=1.3)
    res = step(p, s, compute_dt(p, s))
    assert np.max(np.abs(res.state.rhoe - s.rhoe) / s.rhoe) <= 1e-13


# ---------------------------------------------------------------------------
# energy


def test_conduction_conserves_energy_and_spreads_heat():
    p = fixed(128)
    g = p.grid
    x = g.axes()[0]
    rho = np.ones(g.shape)
    theta = 1 + np.exp(-((x - 0.5) ** 2) / 0.01)
    a = geometry_at(p, 0.0).a_loc(p.model)
    E = thermo.internal_energy(p.model, rho, theta, a)
    new = conduction_update(p, rho, E, theta, np.ones(g.shape), a, 1e-3)
    assert abs(g.integrate(new) - g.integrate(E)) <= 1e-12 * g.integrate(E)
    th_new = thermo.invert_temperature(p.model, rho, new, a)
    assert th_new.max() < theta.max() and th_new.min() > theta.min()


def test_explicit_conduction_conserves_energy():
    p = fixed(128, scheme=SchemeConfig(implicit_diffusion=False))
    g = p.grid
    x = g.axes()[0]
    rho = np.ones(g.shape)
    theta = 1 + np.exp(-((x - 0.5) ** 2) / 0.01)
    a = geometry_at(p, 0.0).a_loc(p.model)
    E = thermo.internal_energy(p.model, rho, theta, a)
    new = conduction_update(p, rho, E, theta, np.ones(g.shape), a, 1e-5)
    assert abs(g.integrate(new) - g.integrate(E)) <= 1e-12 * g.integrate(E)


def test_sink_matches_scalar_ode():
    p = fixed(eta=1.0, lam=1.0)
    s = uniform_state(p)
    dt = 1e-3
    res = step(p, s, dt)
    theta1 = float(np.mean(res.prim.theta))
    a = geometry_at(p, 0.0).a_loc(p.model)
    rate = -1.0 / float(np.mean(thermo.heat_capacity(p.model, s.rho, np.ones(p.grid.shape), a)))
    assert np.ptp(res.prim.theta) <= 1e-12
    assert (theta1 - 1.0) / dt == pytest.approx(rate, rel=0.02)


def test_sink_keeps_temperature_positive_for_huge_steps():
    p = fixed(eta=1.0, lam=1.0)
    s = uniform_state(p, theta=50.0)
    res = step(p, s, 10.0)
    assert np.all(res.prim.theta > 0) and np.all(res.prim.theta < 50.0)


# ---------------------------------------------------------------------------
# time step


def test_sound_speed_sets_advective_bound():
    p = fixed(eta=1.0, delta=1e-12)
    s = uniform_state(p)
    geom = geometry_at(p, 0.0)
    b = step_bounds(p, s, primitives(p, s, geom), geom)
    assert b.advective == pytest.approx(p.scheme.cfl * p.grid.h / math.sqrt(8 / 3), rel=1e-9)
    assert compute_dt(p, s) == b.advective


def test_diffusive_bound_scales_with_h_squared():
    bounds = []
    for n in (64, 128):
        p = fixed(n, eta=1.0)
        s = uniform_state(p)
        geom = geometry_at(p, 0.0)
        bounds.append(step_bounds(p, s, primitives(p, s, geom), geom).diffusive)
    assert bounds[0] / bounds[1] == pytest.approx(4.0, rel=1e-12)


def test_vacuum_contributes_only_diffusive_bound():
    p = fixed(eta=1.0)
    s = uniform_state(p, rho=0.0)
    geom = geometry_at(p, 0.0)
    b = step_bounds(p, s, primitives(p, s, geom), geom)
    assert b.advective == math.inf and b.positivity == math.inf and math.isfinite(b.diffusive)
    explicit = fixed(eta=1.0, scheme=SchemeConfig(implicit_diffusion=False))
    assert compute_dt(explicit, s) == pytest.approx(b.diffusive, rel=1e-12)


def test_stiffness_is_signalled():
    p = fixed(eta=1.0)
    s = uniform_state(p, u=np.full((1,) + p.grid.shape, 1e16))
    with pytest.raises(StiffnessError):
        compute_dt(p, s)


# ---------------------------------------------------------------------------
# driver


def test_advance_to_current_time_is_identity():
    p = fixed()
    s = initial_data(p)
    out = advance(p, s.copy(), 0.0)
    for a, b in zip(s.fields().values(), out.fields().values()):
        assert np.array_equal(a, b)


def test_advance_is_deterministic():
    p = make_problem("piston1d", 200, t_end=0.05)
    a = advance(p, initial_data(p), 0.05)
    b = advance(p, initial_data(p), 0.05)
    for x, y in zip(a.fields().values(), b.fields().values()):
        assert x.tobytes() == y.tobytes()


def test_positivity_after_run():
    p = make_problem("piston1d", 200, t_end=0.1)
    s = advance(p, initial_data(p), 0.1)
    prim = primitives(p, s, geometry_at(p, s.t))
    assert np.all(s.rho >= 0) and np.all(prim.theta >= p.scheme.theta_min)


def test_half_steps_agree_to_second_order():
    p = fixed(128, epsilon=1.0)
    x = p.grid.axes()[0]
    rho = 1 + 0.2 * np.cos(np.pi * x)
    u = 0.1 * np.sin(np.pi * x) ** 2
    theta = 1 + 0.3 * np.cos(2 * np.pi * x)
    a = geometry_at(p, 0.0).a_loc(p.model)
    s = State(rho, (rho * u)[None], thermo.internal_energy(p.model, rho, theta, a))
    dt0 = compute_dt(p, s)
    diffs = []
    for k in range(3):
        dt = dt0 / 2**k
        one = step(p, s, dt).state
        two = step(p, step(p, s, dt / 2).state, dt / 2).state
        diffs.append(np.array([np.max(np.abs(one.rho - two.rho)), np.max(np.abs(one.mom - two.mom)),
                               np.max(np.abs(one.rhoe - two.rhoe))]))
    orders = [np.log2(a / b) for a, b in zip(diffs, diffs[1:])]
    assert np.min(orders) >= 1.4


def test_step_errors_carry_index_and_time(monkeypatch):
    p = fixed()
    real = solver.step
    calls = []

    def flaky(*args, **kw):
        calls.append(1)
        if len(calls) == 3:
            raise NegativeDensityError("negative density -1e-3 at cell (5,)")
        return real(*args, **kw)

    monkeypatch.setattr(solver, "step", flaky)
    with pytest.raises(NegativeDensityError, match=r"step 2, t = .*cell \(5,\)"):
        advance(p, initial_data(p), 0.1)


def test_step_budget():
    p = fixed(scheme=SchemeConfig(max_steps=2))
    with pytest.raises(SolverError, match="budget"):
        advance(p, initial_data(p), 0.1)


# ---------------------------------------------------------------------------
# initial data


def test_piston_initial_data():
    p = make_problem("piston1d", 400)
    s = initial_data(p)
    x = p.grid.axes()[0]
    inside = (x > 0.3) & (x < 0.7)
    assert np.all(s.rho[inside] == 1.0) and np.all(s.rho[~inside] == 0.0)
    assert np.all(s.mom == 0)
    geom = geometry_at(p, 0.0)
    prim = primitives(p, s, geom)
    assert np.allclose(prim.theta, 1.0, rtol=1e-12)
    assert confinement_mass(p, s, geom) == 0.0


def test_initial_energy_two_ways():
    p = make_problem("disk2d", 64)
    s = initial_data(p)
    geom = geometry_at(p, 0.0)
    prim = primitives(p, s, geom)
    model = p.model
    loop = 0.0
    for idx in np.ndindex(*p.grid.shape):
        r = s.rho[idx]
        m = s.mom[(slice(None),) + idx]
        kin = 0.5 * float(m @ m) / r if r > 0 else 0.0
        loop += kin + s.rhoe[idx] + model.delta / (model.beta - 1) * r**model.beta
    loop *= p.grid.cell_volume
    assert total_energy(p, s, prim) == pytest.approx(loop, rel=1e-14)


def test_initial_data_rejects_domain_touching_box():
    grid = Grid.uniform(1, 64)
    from penalized_nsf.geometry import Interval
    dom = MovingDomain(Interval(0.0, 0.5), VelocityFieldSpec("zero", 1), grid, 0.05)
    p = Problem(grid, dom, thermo.EosModel(), thermo.TransportCoeffs(), PenaltyParams(alpha=0.05))
    with pytest.raises(ValueError, match="touches the box"):
        initial_data(p)


# ---------------------------------------------------------------------------
# dissipation sign


@given(st.integers(1, 3), st.integers(0, 10_000), st.floats(1e-3, 1.0), st.floats(0.1, 10.0))
def test_viscous_heating_nonnegative(d, seed, chi, theta):
    G = np.random.default_rng(seed).standard_normal((d, d, 5)) * 10
    S = thermo.stress_tensor(thermo.TransportCoeffs(eta_hi=0.5), chi, theta, G)
    assert np.all(thermo.viscous_dissipation(S, G) >= -1e-12 * np.sum(G**2, axis=(0, 1)))
