"""Finite-volume advance of the penalised Navier-Stokes-Fourier system on a fixed box.

One step, with geometry and coefficient fields evaluated at the new time:

1. continuity: conservative transport with face velocities ``(u_L + u_R)/2``
   (zero on the walls) and limited upwind reconstruction;
2. momentum: transport with the mass fluxes, pressure gradient, implicit
   viscous solve, then the interface penalty as an implicit pointwise
   relaxation of the normal relative velocity;
3. internal energy: transport, viscous heating, compression work,
   implicit conduction in flux form, and the ``lambda theta^5`` sink folded
   into the temperature inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from . import thermo
from .fields import Grid, State, divergence, flux_divergence, gradient, velocity_gradient
from .geometry import MovingDomain, VelocityFieldSpec, build_indicator, interface_weight, solid_weight


class SolverError(RuntimeError):
    """A sub-step failed; message carries the step index and time."""


class NegativeDensityError(SolverError):
    pass


class StiffnessError(SolverError):
    pass


@dataclass(frozen=True)
class PenaltyParams:
    epsilon: float = 1e-3
    eta: float = 1e-2
    omega: float = 1e-2
    nu: float = 1e-2
    lam: float = 1e-2
    delta: float = 1e-3
    beta: float = 4.0
    alpha: float = 0.02

    def __post_init__(self):
        for name in ("epsilon", "eta", "omega", "nu", "lam", "delta", "alpha"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be strictly positive, got {v}")
        for name in ("eta", "omega", "nu"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} is a contrast and must not exceed 1")
        if self.beta < 4:
            raise ValueError(f"beta must satisfy beta >= 4, got {self.beta}")
        if self.lam > 1:
            raise ValueError(f"lam must satisfy lam <= 1, got {self.lam}")


@dataclass(frozen=True)
class SchemeConfig:
    cfl: float = 0.4
    implicit_penalty: bool = True
    implicit_diffusion: bool = True
    reconstruction: str = "superbee"
    theta_min: float = thermo.THETA_MIN
    rho_vac: float = 1e-10
    diag_interval: float = 0.025
    max_steps: int = 200_000

    def __post_init__(self):
        if not 0 < self.cfl <= 0.9:
            raise ValueError(f"CFL number must lie in (0, 0.9], got {self.cfl}")
        if self.reconstruction not in ("muscl", "superbee", "upwind"):
            raise ValueError(f"unknown reconstruction {self.reconstruction!r}")
        if not self.diag_interval > 0:
            raise ValueError("diagnostic interval must be positive")


@dataclass
class Problem:
    """Static description of one run."""

    grid: Grid
    domain: MovingDomain
    model: thermo.EosModel
    coeffs: thermo.TransportCoeffs
    params: PenaltyParams
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    name: str = "custom"

    def __post_init__(self):
        # artificial pressure parameters live with the penalty cascade
        self.model = replace(self.model, delta=self.params.delta, beta=self.params.beta)
        if self.params.alpha < self.grid.h:
            raise ValueError(f"alpha = {self.params.alpha} is below the grid spacing {self.grid.h}")

    @property
    def velocity(self) -> VelocityFieldSpec:
        return self.domain.velocity


@dataclass
class Geometry:
    t: float
    phi: np.ndarray
    normals: np.ndarray
    weight: np.ndarray
    solid: np.ndarray
    chi_omega: np.ndarray
    chi_nu: np.ndarray
    chi_eta: np.ndarray
    V: np.ndarray
    dVdt: np.ndarray
    gradV: np.ndarray

    def a_loc(self, model: thermo.EosModel) -> np.ndarray:
        return self.chi_eta * model.a


def geometry_at(problem: Problem, t: float) -> Geometry:
    grid, dom, p = problem.grid, problem.domain, problem.params
    x = grid.centers()
    phi = dom.signed_distance(t, x)
    V = problem.velocity(t, x)
    return Geometry(
        t=t,
        phi=phi,
        normals=dom.normals(t, phi),
        weight=interface_weight(dom, t, phi),
        solid=solid_weight(phi, grid.h),
        chi_omega=build_indicator(dom, t, p.omega, p.alpha, phi).smooth,
        chi_nu=build_indicator(dom, t, p.nu, p.alpha, phi).smooth,
        chi_eta=build_indicator(dom, t, p.eta, p.alpha, phi).smooth,
        V=V,
        dVdt=problem.velocity.time_derivative(t, x),
        gradV=_analytic_grad(problem.velocity, t, x),
    )


def _analytic_grad(V: Callable, t: float, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    d = x.shape[0]
    out = np.empty((d, d) + x.shape[1:])
    for j in range(d):
        e = np.zeros((d,) + (1,) * (x.ndim - 1))
        e[j] = eps
        out[:, j] = (V(t, x + e) - V(t, x - e)) / (2 * eps)
    return out


@dataclass
class Primitive:
    """Derived cell fields of a state at a given geometry."""

    theta: np.ndarray
    u: np.ndarray
    a_loc: np.ndarray
    p: np.ndarray
    vacuum: np.ndarray


def recover_velocity(state: State, V: np.ndarray, rho_vac: float) -> tuple[np.ndarray, np.ndarray]:
    vac = state.rho <= rho_vac
    safe = np.where(vac, 1.0, state.rho)
    u = np.where(vac, V, state.mom / safe)
    return u, vac


def primitives(problem: Problem, state: State, geom: Geometry) -> Primitive:
    model = problem.model
    a_loc = geom.a_loc(model)
    theta = thermo.invert_temperature(model, state.rho, state.rhoe, a_loc)
    theta = np.maximum(theta, problem.scheme.theta_min)
    u, vac = recover_velocity(state, geom.V, problem.scheme.rho_vac)
    p = thermo.pressure(model, state.rho, theta, a_loc)
    return Primitive(theta=theta, u=u, a_loc=a_loc, p=p, vacuum=vac)


# --------------------------------------------------------------------------
# transport


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _superbee(a, b):
    s1 = _minmod(a, 2.0 * b)
    s2 = _minmod(2.0 * a, b)
    return np.where(np.abs(s1) >= np.abs(s2), s1, s2)


LIMITERS = {"muscl": _minmod, "superbee": _superbee}


def face_states(q: np.ndarray, axis: int, reconstruction: str) -> tuple[np.ndarray, np.ndarray]:
    """Left/right traces of ``q`` on the interior faces along ``axis``."""
    n = q.shape[axis]
    left = np.take(q, np.arange(n - 1), axis=axis)
    right = np.take(q, np.arange(1, n), axis=axis)
    if reconstruction == "upwind":
        return left, right
    dq = np.diff(q, axis=axis)
    pad = [(0, 0)] * q.ndim
    pad[axis] = (1, 1)
    dqp = np.pad(dq, pad)
    a = np.take(dqp, np.arange(n), axis=axis)
    b = np.take(dqp, np.arange(1, n + 1), axis=axis)
    slope = LIMITERS[reconstruction](a, b)
    left = left + 0.5 * np.take(slope, np.arange(n - 1), axis=axis)
    right = right - 0.5 * np.take(slope, np.arange(1, n), axis=axis)
    return left, right


def face_velocities(u: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Normal velocity on interior faces of each axis; wall faces carry zero."""
    out = []
    for k in range(grid.dim):
        n = grid.n[k]
        a = np.take(u[k], np.arange(n - 1), axis=k)
        b = np.take(u[k], np.arange(1, n), axis=k)
        out.append(0.5 * (a + b))
    return out


def upwind_fluxes(q: np.ndarray, uf: list[np.ndarray], reconstruction: str) -> list[np.ndarray]:
    fluxes = []
    for k, w in enumerate(uf):
        left, right = face_states(q, k, reconstruction)
        fluxes.append(w * np.where(w >= 0, left, right))
    return fluxes


def transport(q: np.ndarray, fluxes: list[np.ndarray], dt: float, h: float) -> np.ndarray:
    out = q.copy()
    for k, f in enumerate(fluxes):
        out -= dt * flux_divergence(f, k, h)
    return out


def continuity_step(state: State, grid: Grid, u: np.ndarray, dt: float, reconstruction: str = "superbee"):
    """Conservative density update; returns the new density and the face mass fluxes."""
    uf = face_velocities(u, grid)
    fluxes = upwind_fluxes(state.rho, uf, reconstruction)
    rho = transport(state.rho, fluxes, dt, grid.h)
    neg = rho < 0
    if np.any(neg):
        # roundoff on exact vacuum is tolerated, anything larger is a CFL violation
        scale = max(float(np.max(state.rho)), 1.0)
        if np.min(rho) < -1e-13 * scale:
            idx = tuple(np.argwhere(neg)[0])
            raise NegativeDensityError(f"negative density {rho[idx]:.3e} at cell {idx}")
        rho = np.where(neg, 0.0, rho)
    return rho, fluxes, uf


# --------------------------------------------------------------------------
# diffusion operators


def _face_pairs(grid: Grid, axis: int):
    idx = np.arange(grid.size).reshape(grid.shape)
    n = grid.n[axis]
    lo = np.take(idx, np.arange(n - 1), axis=axis).ravel()
    hi = np.take(idx, np.arange(1, n), axis=axis).ravel()
    first = np.take(idx, 0, axis=axis).ravel()
    last = np.take(idx, n - 1, axis=axis).ravel()
    return lo, hi, first, last


def face_laplacian(grid: Grid, coef: np.ndarray, wall: str, coef_face: Optional[list] = None) -> sp.csr_matrix:
    """Matrix of ``div(c grad q)`` with face coefficients.

    ``wall`` is ``"dirichlet"`` (zero value on the wall through an odd ghost)
    or ``"neumann"`` (zero wall flux).
    """
    c = coef.ravel()
    h2 = grid.h**2
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.size)
    for k in range(grid.dim):
        lo, hi, first, last = _face_pairs(grid, k)
        cf = 0.5 * (c[lo] + c[hi]) if coef_face is None else coef_face[k].ravel()
        w = cf / h2
        rows += [lo, hi]
        cols += [hi, lo]
        vals += [w, w]
        np.add.at(diag, lo, -w)
        np.add.at(diag, hi, -w)
        if wall == "dirichlet":
            np.add.at(diag, first, -2.0 * c[first] / h2)
            np.add.at(diag, last, -2.0 * c[last] / h2)
    rows.append(np.arange(grid.size))
    cols.append(np.arange(grid.size))
    vals.append(diag)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size)
    )


def _centered_matrix(grid: Grid, axis: int, ghost: str) -> sp.csr_matrix:
    n = grid.n[axis]
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format="lil")
    if ghost == "noslip":
        D[0, 0] = 1.0
        D[n - 1, n - 1] = -1.0
    else:
        D[0, 0] = -1.0
        D[n - 1, n - 1] = 1.0
    D = D.tocsr() / (2 * grid.h)
    mats = [sp.identity(m, format="csr") for m in grid.n]
    mats[axis] = D
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def viscous_operator(grid: Grid, mu: np.ndarray, bulk: np.ndarray) -> sp.csr_matrix:
    """Discrete ``div S(u)`` acting on the stacked velocity components.

    Same-direction derivatives use compact face stencils; mixed derivatives
    use centred differences.
    """
    d = grid.dim
    lam = bulk - 2.0 / 3.0 * mu
    blocks = [[None] * d for _ in range(d)]
    for i in range(d):
        diag_block = None
        for j in range(d):
            c = 4.0 / 3.0 * mu + bulk if i == j else mu
            lap = face_laplacian_axis(grid, c, j)
            diag_block = lap if diag_block is None else diag_block + lap
        blocks[i][i] = diag_block
    if d > 1:
        D0 = [_centered_matrix(grid, k, "noslip") for k in range(d)]
        DN = [_centered_matrix(grid, k, "neumann") for k in range(d)]
        M = sp.diags(mu.ravel())
        Lb = sp.diags(lam.ravel())
        for i in range(d):
            for j in range(d):
                if i != j:
                    blocks[i][j] = DN[j] @ M @ D0[i] + DN[i] @ Lb @ D0[j]
    return sp.bmat(blocks, format="csr")


def face_laplacian_axis(grid: Grid, coef: np.ndarray, axis: int) -> sp.csr_matrix:
    """``d/dx_axis (c d/dx_axis q)`` with no-slip walls on that axis."""
    c = coef.ravel()
    h2 = grid.h**2
    lo, hi, first, last = _face_pairs(grid, axis)
    w = 0.5 * (c[lo] + c[hi]) / h2
    diag = np.zeros(grid.size)
    np.add.at(diag, lo, -w)
    np.add.at(diag, hi, -w)
    np.add.at(diag, first, -2.0 * c[first] / h2)
    np.add.at(diag, last, -2.0 * c[last] / h2)
    idx = np.arange(grid.size)
    return sp.csr_matrix(
        (np.concatenate([w, w, diag]), (np.concatenate([lo, hi, idx]), np.concatenate([hi, lo, idx]))),
        shape=(grid.size, grid.size),
    )


# --------------------------------------------------------------------------
# momentum


def penalty_relaxation(u, V, n, weight, rho, dt, epsilon, implicit=True):
    """Relax the normal relative velocity under the interface penalty.

    With ``w = weight dt / (epsilon rho)`` the implicit update gives
    ``(u - V).n -> (u - V).n / (1 + w)``; tangential components are untouched.
    Vacuum cells inside the band (``rho = 0``) take the limit ``w -> inf``.
    """
    wd = np.asarray(weight, dtype=float) * dt
    er = epsilon * np.asarray(rho, dtype=float)
    rel = np.sum((u - V) * n, axis=0)
    if implicit:
        denom = wd + er
        factor = np.where(denom > 0, wd / np.where(denom > 0, denom, 1.0), 0.0)
    else:
        factor = np.where(er > 0, wd / np.where(er > 0, er, 1.0), np.where(wd > 0, 1.0, 0.0))
    return u - factor * rel * n


def penalty_operator(normals: np.ndarray, strength: np.ndarray) -> sp.csr_matrix:
    """Cellwise ``strength * n n^T`` on the stacked velocity components."""
    d = normals.shape[0]
    blocks = [[sp.diags((strength * normals[i] * normals[j]).ravel()) for j in range(d)] for i in range(d)]
    return sp.bmat(blocks, format="csr")


def factorize(L: sp.spmatrix, shift: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Solver for ``(diag(shift) - L) x = rhs``; tridiagonal systems use banded LAPACK."""
    L = L.tocsr()
    n = L.shape[0]
    if _is_tridiagonal(L):
        ab = np.zeros((3, n))
        ab[0, 1:] = -L.diagonal(1)
        ab[1] = shift - L.diagonal(0)
        ab[2, :-1] = -L.diagonal(-1)
        return lambda rhs: solve_banded((1, 1), ab, rhs)
    return splu((sp.diags(shift) - L).tocsc()).solve


def solve_linear(L: sp.spmatrix, rhs: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Solve ``(diag(shift) - L) x = rhs``."""
    return factorize(L, shift)(rhs)


def _is_tridiagonal(A: sp.csr_matrix) -> bool:
    if A.nnz == 0:
        return True
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    return bool(np.max(np.abs(rows - A.indices)) <= 1)


def momentum_step(problem: Problem, state: State, prim: Primitive, rho_new: np.ndarray, mass_fluxes, uf,
                  geom_new: Geometry, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Returns the new momentum and velocity.

    With implicit diffusion and penalty both are solved in one linear system;
    vacuum cells then carry no inertia and take the viscous response to the
    penalty. Otherwise the penalty is a pointwise relaxation after the
    viscous update and vacuum cells take the boundary velocity.
    """
    grid, scheme, params = problem.grid, problem.scheme, problem.params
    d = grid.dim
    m_star = np.empty_like(state.mom)
    for j in range(d):
        fl = []
        for k in range(d):
            left, right = face_states(prim.u[j], k, scheme.reconstruction)
            fl.append(mass_fluxes[k] * np.where(uf[k] >= 0, left, right))
        m_star[j] = transport(state.mom[j], fl, dt, grid.h)
    m_star -= dt * gradient(prim.p, grid, bc="neumann")

    vac = rho_new <= scheme.rho_vac
    rho_eff = np.where(vac, 0.0, rho_new)
    mu = geom_new.chi_omega * problem.coeffs.mu(prim.theta)
    bulk = geom_new.chi_omega * problem.coeffs.bulk(prim.theta)
    L = viscous_operator(grid, mu, bulk)
    V = geom_new.V
    band = bool(np.any(geom_new.weight > 0))
    if scheme.implicit_diffusion:
        rhs = m_star.reshape(-1) / dt
        shift = np.tile(rho_eff.ravel(), d) / dt
        if band and scheme.implicit_penalty:
            # penalty folded into the viscous system: (rho/dt + P - L) u = m*/dt + P V
            P = penalty_operator(geom_new.normals, geom_new.weight / params.epsilon)
            L = L - P
            rhs = rhs + P @ V.reshape(-1)
            band = False
        u = solve_linear(L, rhs, shift=shift).reshape(prim.u.shape)
    else:
        m_star = m_star + dt * (L @ prim.u.reshape(-1)).reshape(prim.u.shape)
        safe = np.where(vac, 1.0, rho_new)
        u = np.where(vac, V, m_star / safe)

    if band:
        u = penalty_relaxation(u, V, geom_new.normals, geom_new.weight, rho_eff, dt, params.epsilon,
                               scheme.implicit_penalty)
    mom = rho_eff * u
    if not np.all(np.isfinite(u)):
        idx = tuple(np.argwhere(~np.isfinite(u))[0])
        raise SolverError(f"non-finite momentum at cell {idx[1:]} (component {idx[0]})")
    return mom, u


# --------------------------------------------------------------------------
# energy


def conduction_face_coeffs(problem: Problem, theta: np.ndarray, chi: np.ndarray) -> list[np.ndarray]:
    """``chi_f (K(theta_R) - K(theta_L)) / (theta_R - theta_L)`` on interior faces."""
    grid, coeffs = problem.grid, problem.coeffs
    K = thermo.conductivity_primitive(coeffs, theta)
    out = []
    for k in range(grid.dim):
        n = grid.n[k]
        tl, tr = np.take(theta, np.arange(n - 1), axis=k), np.take(theta, np.arange(1, n), axis=k)
        kl, kr = np.take(K, np.arange(n - 1), axis=k), np.take(K, np.arange(1, n), axis=k)
        cl, cr = np.take(chi, np.arange(n - 1), axis=k), np.take(chi, np.arange(1, n), axis=k)
        dtheta = tr - tl
        same = np.abs(dtheta) <= 1e-12 * np.maximum(tl, tr)
        secant = np.where(same, coeffs.kappa(0.5 * (tl + tr)), (kr - kl) / np.where(same, 1.0, dtheta))
        out.append(0.5 * (cl + cr) * secant)
    return out


def conduction_update(problem: Problem, rho: np.ndarray, E: np.ndarray, theta: np.ndarray, chi: np.ndarray,
                      a_loc: np.ndarray, dt: float, tol: float = 1e-12, maxiter: int = 40) -> np.ndarray:
    """Energy after conduction ``div(chi grad K(theta))`` in conservative flux form.

    Face coefficients are frozen at the incoming temperature. Implicit mode
    solves backward Euler for the temperature by a chord iteration on the
    energy; the returned energy is ``E + dt div F`` with the final flux ``F``.
    """
    grid, model = problem.grid, problem.model
    coef = conduction_face_coeffs(problem, theta, chi)
    new = theta
    if problem.scheme.implicit_diffusion:
        # chord iteration on (E(theta) - E)/dt = L theta, refactorised when it stalls
        L = face_laplacian(grid, np.ones(grid.shape), "neumann", coef_face=coef)
        Lop = L.tocsr()
        solve, last = None, math.inf
        for it in range(maxiter):
            resid = (thermo.internal_energy(model, rho, new, a_loc) - E) / dt - (Lop @ new.ravel()).reshape(grid.shape)
            if solve is None or it % 6 == 0:
                solve = factorize(L, thermo.heat_capacity(model, rho, new, a_loc).ravel() / dt)
            nxt = np.maximum(new - solve(resid.ravel()).reshape(grid.shape), problem.scheme.theta_min)
            change = float(np.max(np.abs(nxt - new) / nxt))
            new = nxt
            if change <= tol:
                break
            if change > 0.5 * last:
                solve = None
            last = change
    out = E.copy()
    for k in range(grid.dim):
        flux = coef[k] * np.diff(new, axis=k) / grid.h
        out += dt * flux_divergence(flux, k, grid.h)
    return out


@dataclass
class EnergyStepInfo:
    floor_hits: int = 0
    viscous_heating: Optional[np.ndarray] = None


def energy_step(problem: Problem, state: State, prim: Primitive, rho_new: np.ndarray, u_new: np.ndarray, uf,
                geom_new: Geometry, dt: float) -> tuple[np.ndarray, np.ndarray, EnergyStepInfo]:
    """Returns the new internal energy density and temperature."""
    grid, model, scheme, params = problem.grid, problem.model, problem.scheme, problem.params
    info = EnergyStepInfo()
    fluxes = upwind_fluxes(state.rhoe, uf, scheme.reconstruction)
    E = transport(state.rhoe, fluxes, dt, grid.h)

    G = velocity_gradient(u_new, grid)
    S = thermo.stress_tensor(problem.coeffs, geom_new.chi_omega, prim.theta, G)
    heating = thermo.viscous_dissipation(S, G)
    info.viscous_heating = heating
    div_u = divergence(prim.u, grid)
    p_eta = prim.p - model.delta * state.rho**model.beta
    E = E + dt * (heating - p_eta * div_u)

    a_new = geom_new.a_loc(model)
    E = _apply_floor(problem, rho_new, E, a_new, info)
    theta_star = thermo.invert_temperature(model, rho_new, E, a_new, guess=prim.theta)
    E = conduction_update(problem, rho_new, E, theta_star, geom_new.chi_nu, a_new, dt)
    E = _apply_floor(problem, rho_new, E, a_new, info)
    theta = thermo.invert_temperature(model, rho_new, E, a_new, sink=dt * params.lam, guess=theta_star)
    theta = np.maximum(theta, scheme.theta_min)
    rhoe = thermo.internal_energy(model, rho_new, theta, a_new)
    return rhoe, theta, info


def _apply_floor(problem: Problem, rho, E, a_loc, info: EnergyStepInfo):
    model, scheme = problem.model, problem.scheme
    floor = thermo.internal_energy(model, rho, scheme.theta_min, a_loc)
    low = ~(E > floor)
    if np.any(low):
        info.floor_hits += int(np.count_nonzero(low))
        E = np.where(low, floor, E)
    return E


# --------------------------------------------------------------------------
# time step


@dataclass
class StepBounds:
    advective: float
    positivity: float
    diffusive: float

    def limit(self, implicit_diffusion: bool) -> float:
        dt = min(self.advective, self.positivity)
        return dt if implicit_diffusion else min(dt, self.diffusive)


def step_bounds(problem: Problem, state: State, prim: Primitive, geom: Geometry) -> StepBounds:
    grid, model, scheme = problem.grid, problem.model, problem.scheme
    h, d = grid.h, grid.dim
    fluid = ~prim.vacuum
    speed = np.sqrt(np.sum(prim.u**2, axis=0))
    if np.any(fluid):
        cs = np.sqrt(thermo.sound_speed_sq(model, state.rho, prim.theta))
        adv = scheme.cfl * h / float(np.max((speed + cs)[fluid]))
    else:
        adv = math.inf
    umax = max(float(np.max(np.abs(w))) if w.size else 0.0 for w in face_velocities(prim.u, grid))
    pos = h / (2 * d * umax) if umax > 0 else math.inf
    cv = thermo.heat_capacity(model, state.rho, prim.theta, prim.a_loc)
    D_heat = geom.chi_nu * problem.coeffs.kappa(prim.theta) / cv
    visc = geom.chi_omega * (4.0 / 3.0 * problem.coeffs.mu(prim.theta) + problem.coeffs.bulk(prim.theta))
    D_visc = np.where(fluid, visc / np.where(fluid, state.rho, 1.0), 0.0)
    D = max(float(np.max(D_heat)), float(np.max(D_visc)))
    diff = scheme.cfl * h * h / (2 * d * D) if D > 0 else math.inf
    return StepBounds(adv, pos, diff)


def compute_dt(problem: Problem, state: State, prim: Optional[Primitive] = None, geom: Optional[Geometry] = None) -> float:
    geom = geom or geometry_at(problem, state.t)
    prim = prim or primitives(problem, state, geom)
    dt = step_bounds(problem, state, prim, geom).limit(problem.scheme.implicit_diffusion)
    if not dt > 1e-14:
        raise StiffnessError(f"time step collapsed to {dt:.3e}")
    return dt


# --------------------------------------------------------------------------
# driver


@dataclass
class StepResult:
    state: State
    prim: Primitive
    geom: Geometry
    heating: np.ndarray
    floor_hits: int


def step(problem: Problem, state: State, dt: float, geom: Optional[Geometry] = None,
         prim: Optional[Primitive] = None) -> StepResult:
    grid = problem.grid
    geom = geom or geometry_at(problem, state.t)
    prim = prim or primitives(problem, state, geom)
    t_new = state.t + dt
    geom_new = geometry_at(problem, t_new)
    rho, mass_fluxes, uf = continuity_step(state, grid, prim.u, dt, problem.scheme.reconstruction)
    mom, u_new = momentum_step(problem, state, prim, rho, mass_fluxes, uf, geom_new, dt)
    rhoe, theta, info = energy_step(problem, state, prim, rho, u_new, uf, geom_new, dt)
    new = State(rho=rho, mom=mom, rhoe=rhoe, t=t_new)
    a_new = geom_new.a_loc(problem.model)
    vac = rho <= problem.scheme.rho_vac
    prim_new = Primitive(theta=theta, u=u_new, a_loc=a_new, p=thermo.pressure(problem.model, rho, theta, a_new),
                         vacuum=vac)
    return StepResult(new, prim_new, geom_new, info.viscous_heating, info.floor_hits)


def advance(problem: Problem, state: State, t_end: float, monitor=None, checkpoint_times=None):
    """March to ``t_end``; steps are clipped to land on every checkpoint time.

    ``monitor`` receives ``start(problem, state, prim, geom)``, ``step(...)``
    after every step and ``checkpoint(...)`` at checkpoint times.
    """
    if t_end < state.t:
        raise ValueError("t_end precedes the current time")
    if checkpoint_times is None:
        checkpoint_times = checkpoint_schedule(state.t, t_end, problem.scheme.diag_interval)
    pending = [c for c in checkpoint_times if c > state.t + 1e-14]
    geom = geometry_at(problem, state.t)
    prim = primitives(problem, state, geom)
    if monitor is not None:
        monitor.checkpoint_times = list(pending)
        monitor.start(problem, state, prim, geom)
    n = 0
    while state.t < t_end - 1e-14 * max(1.0, t_end):
        if n >= problem.scheme.max_steps:
            raise SolverError(f"step budget {problem.scheme.max_steps} exhausted at t = {state.t:.6g}")
        try:
            dt = compute_dt(problem, state, prim, geom)
            target = pending[0] if pending else t_end
            dt = min(dt, target - state.t)
            res = step(problem, state, dt, geom, prim)
        except (SolverError, thermo.ColdFloorError, ValueError) as exc:
            raise type(exc)(f"step {n}, t = {state.t:.6g}: {exc}") from exc
        n += 1
        state, prim, geom = res.state, res.prim, res.geom
        if pending and abs(state.t - pending[0]) <= 1e-12 * max(1.0, abs(pending[0])):
            state.t = pending.pop(0)
            at_checkpoint = True
        else:
            at_checkpoint = False
        if monitor is not None:
            monitor.step(problem, state, prim, geom, dt, res)
            if at_checkpoint:
                monitor.checkpoint(problem, state, prim, geom)
    return state


def checkpoint_schedule(t0: float, t_end: float, interval: float) -> list[float]:
    if t_end <= t0:
        return []
    k = max(1, int(math.ceil((t_end - t0) / interval - 1e-9)))
    return [t0 + (t_end - t0) * (i + 1) / k for i in range(k)]
