"""Shipped scenarios: a 1D piston, an oscillating 2D disk and a fixed box."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import thermo
from .diagnostics import DiagnosticsReport, Monitor
from .fields import Grid, State, write_snapshot
from .geometry import Disk, Interval, MovingDomain, VelocityFieldSpec, build_indicator, divergence_in_tube
from .solver import PenaltyParams, Problem, SchemeConfig, advance, checkpoint_schedule


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    dim: int
    default_n: int
    build_domain: Callable[[Grid, float], MovingDomain]
    rho0: float = 1.0
    theta0: float = 1.0


def _piston(grid: Grid, alpha: float) -> MovingDomain:
    v = VelocityFieldSpec(kind="oscillation", dim=1, amplitude=0.2, frequency=np.pi, direction=(1.0,),
                          origin=(0.5,), inner_radius=0.42, support_radius=0.46)
    return MovingDomain(Interval(0.3, 0.7), v, grid, alpha)


def _disk(grid: Grid, alpha: float) -> MovingDomain:
    v = VelocityFieldSpec(kind="oscillation", dim=2, amplitude=0.08, frequency=np.pi, direction=(1.0, 0.0),
                          origin=(0.5, 0.5), inner_radius=0.35, support_radius=0.43)
    return MovingDomain(Disk((0.5, 0.5), 0.2), v, grid, alpha)


def _fixed(grid: Grid, alpha: float) -> MovingDomain:
    v = VelocityFieldSpec(kind="zero", dim=grid.dim)
    if grid.dim == 1:
        return MovingDomain(Interval(0.25, 0.75), v, grid, alpha)
    return MovingDomain(Disk(tuple(grid.center()), 0.25), v, grid, alpha)


SCENARIOS = {
    "piston1d": ScenarioSpec("piston1d", 1, 400, _piston),
    "disk2d": ScenarioSpec("disk2d", 2, 64, _disk),
    "fixedbox": ScenarioSpec("fixedbox", 1, 128, _fixed),
}


def scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None


def check_domain(domain: MovingDomain, t_end: float, samples: int = 9) -> None:
    """Geometric preconditions: the fluid stays strictly inside the box and the
    cutoff support keeps four cells from the walls; ``V`` is solenoidal near the interface."""
    grid = domain.grid
    h = grid.h
    v = domain.velocity
    if v.support_radius is not None:
        c = v.origin_vec
        margin = min(min(c[k] - grid.lower[k], grid.upper[k] - c[k]) for k in range(grid.dim)) - v.support_radius
        if margin < 4 * h - 1e-12:
            raise ValueError(f"velocity support leaves {margin:.4g} to the walls, need at least 4h = {4 * h:.4g}")
    for t in np.linspace(0.0, t_end, samples):
        phi = domain.level_set(float(t))
        edges = [np.take(phi, [0, grid.n[k] - 1], axis=k) for k in range(grid.dim)]
        if min(float(np.min(e)) for e in edges) <= 2 * h:
            raise ValueError(f"fluid domain reaches the box boundary at t = {t:.4g}")
        div = divergence_in_tube(v, domain, float(t))
        if div > 1e-6:
            raise ValueError(f"boundary velocity is not solenoidal near the interface at t = {t:.4g} (|div V| = {div:.3g})")


def make_problem(name: str, n: Optional[int] = None, params: Optional[PenaltyParams] = None,
                 scheme: Optional[SchemeConfig] = None, model: Optional[thermo.EosModel] = None,
                 coeffs: Optional[thermo.TransportCoeffs] = None, t_end: float = 0.5) -> Problem:
    spec = scenario(name)
    n = n or spec.default_n
    grid = Grid.uniform(spec.dim, n)
    params = params or PenaltyParams()
    domain = spec.build_domain(grid, params.alpha)
    check_domain(domain, t_end)
    return Problem(grid=grid, domain=domain, model=model or thermo.EosModel(thermo.default_structure()),
                   coeffs=coeffs or thermo.TransportCoeffs(), params=params, scheme=scheme or SchemeConfig(),
                   name=name)


def initial_data(problem: Problem, rho0: float = 1.0, theta0: float = 1.0) -> State:
    """Density ``rho0`` on the initial fluid cells and zero elsewhere, fluid at rest,
    uniform temperature ``theta0`` on the whole box."""
    grid = problem.grid
    phi = problem.domain.level_set(0.0)
    if min(float(np.min(np.take(phi, [0, grid.n[k] - 1], axis=k))) for k in range(grid.dim)) <= 0:
        raise ValueError("initial fluid domain touches the box boundary")
    rho = np.where(phi < 0, rho0, 0.0)

    a_loc = build_indicator(problem.domain, 0.0, problem.params.eta, problem.params.alpha, phi).smooth * problem.model.a
    rhoe = thermo.internal_energy(problem.model, rho, np.full(grid.shape, theta0), a_loc)
    return State(rho=rho, mom=np.zeros((grid.dim,) + grid.shape), rhoe=rhoe, t=0.0)


class _SnapshotMonitor(Monitor):
    def __init__(self, snapshot_times, directory: Path):
        super().__init__()
        self.snapshot_times = sorted(snapshot_times)
        self.directory = directory
        self.written: list[Path] = []

    def checkpoint(self, problem, state, prim, geom):
        super().checkpoint(problem, state, prim, geom)
        for ts in self.snapshot_times:
            if abs(ts - state.t) <= 1e-12 * max(1.0, abs(ts)):
                path = self.directory / f"snapshot_{len(self.written):04d}.dat"
                self.written.append(write_snapshot(state, problem.grid, path))


def run_scenario(problem: Problem, t_end: float, snapshot_times: Sequence[float] = (),
                 snapshot_dir=None, rho0: float = 1.0, theta0: float = 1.0) -> tuple[DiagnosticsReport, State]:
    """Run from rest to ``t_end``; snapshots land on their own checkpoints."""
    state = initial_data(problem, rho0, theta0)
    times = checkpoint_schedule(0.0, t_end, problem.scheme.diag_interval)
    snaps = sorted(float(s) for s in snapshot_times)
    if any(not 0 < s <= t_end for s in snaps):
        raise ValueError(f"snapshot times must lie in (0, t_end = {t_end}]")
    if snaps:
        if snapshot_dir is None:
            raise ValueError("snapshot times given without a snapshot directory")
        snapshot_dir = Path(snapshot_dir)
        snapshot_dir.mkdir(parents=True, exist_ok=True)
        monitor = _SnapshotMonitor(snaps, snapshot_dir)
        times = sorted(set(times) | set(snaps))
    else:
        monitor = Monitor()
    state = advance(problem, state, t_end, monitor=monitor, checkpoint_times=times)
    return monitor.finish(), state
