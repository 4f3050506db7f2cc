"""Manufactured heat-conduction solution on the fixed box.

Density is frozen at 1 and the fluid at rest, so only the energy update
acts. The temperature ``theta = 1 + A cos(pi x) exp(-t)`` satisfies the
Neumann wall condition; the matching source is added before every energy
update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import thermo
from .fields import State
from .scenarios import make_problem
from .solver import PenaltyParams, SchemeConfig, energy_step, face_velocities, geometry_at, primitives

STRONG_CONDUCTION = thermo.TransportCoeffs(kappa_M_lo=1.0, kappa_M_hi=1.0, kappa_R_lo=0.1, kappa_R_hi=0.1)


@dataclass(frozen=True)
class ManufacturedCase:
    amplitude: float = 0.5
    t_end: float = 0.25
    lam: float = 1e-2
    coeffs: thermo.TransportCoeffs = field(default_factory=lambda: STRONG_CONDUCTION)

    def theta(self, t, x):
        return 1.0 + self.amplitude * np.cos(math.pi * x) * math.exp(-t)

    def source(self, model, a_loc, t, x):
        """``c_v theta_t - d/dx(kappa theta_x) + lam theta^5`` at ``(t, x)``."""
        c = self.coeffs
        th = self.theta(t, x)
        th_t = -(th - 1.0)
        th_x = -self.amplitude * math.pi * np.sin(math.pi * x) * math.exp(-t)
        th_xx = -(math.pi**2) * (th - 1.0)
        dkappa = c.kappa_M_lo + 3.0 * c.kappa_R_lo * th**2
        cv = thermo.heat_capacity(model, 1.0, th, a_loc)
        return cv * th_t - (dkappa * th_x**2 + c.kappa(th) * th_xx) + self.lam * th**5


def manufactured_problem(n: int, case: ManufacturedCase):
    params = PenaltyParams(nu=1.0, eta=1.0, omega=1.0, lam=case.lam, alpha=max(0.02, 2.0 / n))
    return make_problem("fixedbox", n, params=params, scheme=SchemeConfig(), coeffs=case.coeffs, t_end=case.t_end)


def run_manufactured(n: int, steps: int, case: ManufacturedCase = ManufacturedCase()) -> float:
    """L1 temperature error at ``case.t_end`` after ``steps`` equal steps on ``n`` cells."""
    problem = manufactured_problem(n, case)
    grid, model = problem.grid, problem.model
    x = grid.axes()[0]
    geom = geometry_at(problem, 0.0)
    a_loc = geom.a_loc(model)
    rho = np.ones(grid.shape)
    state = State(rho, np.zeros((1,) + grid.shape), thermo.internal_energy(model, rho, case.theta(0.0, x), a_loc))
    uf = face_velocities(state.mom, grid)
    dt = case.t_end / steps
    theta = case.theta(0.0, x)
    for k in range(steps):
        t_new = (k + 1) * dt
        state.rhoe = state.rhoe + dt * case.source(model, a_loc, t_new, x)
        prim = primitives(problem, state, geom)
        rhoe, theta, _ = energy_step(problem, state, prim, rho, state.mom, uf, geom, dt)
        state = State(rho, state.mom, rhoe, t_new)
    return grid.integrate(np.abs(theta - case.theta(case.t_end, x)))


def observed_orders(errors) -> list[float]:
    return [math.log2(a / b) for a, b in zip(errors, errors[1:])]
