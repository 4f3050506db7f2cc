"""Monitored quantities of a run: masses, energies, penalty flux, entropy
production, confinement, balance residuals and a-priori norms.

A :class:`Monitor` is handed to :func:`solver.advance`; it evaluates
integrands at every time level, accumulates time integrals with the
trapezoid rule and writes one row per checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import thermo
from .fields import CsvSeries, State, gradient, velocity_gradient

# --------------------------------------------------------------------------
# pointwise quantities


def kinetic_energy_density(state: State, u: np.ndarray) -> np.ndarray:
    return 0.5 * state.rho * np.sum(u**2, axis=0)


def artificial_energy_density(model: thermo.EosModel, rho: np.ndarray) -> np.ndarray:
    return model.delta / (model.beta - 1.0) * rho**model.beta


def energy_parts(problem, state: State, prim) -> dict:
    g = problem.grid
    return {
        "E_kin": g.integrate(kinetic_energy_density(state, prim.u)),
        "E_int": g.integrate(state.rhoe),
        "E_art": g.integrate(artificial_energy_density(problem.model, state.rho)),
    }


def total_energy(problem, state: State, prim) -> float:
    """``int (1/2 rho |u|^2 + rho e + delta/(beta-1) rho^beta)``."""
    return sum(energy_parts(problem, state, prim).values())


def penalty_flux_density(u, V, normals, weight) -> np.ndarray:
    rel = np.sum((u - V) * normals, axis=0)
    return rel**2 * weight


def penalty_flux(problem, state: State, prim, geom) -> float:
    """Smeared-delta approximation of ``int_Gamma |(u - V).n|^2 dS``."""
    return problem.grid.integrate(penalty_flux_density(prim.u, geom.V, geom.normals, geom.weight))


def entropy_production(coeffs: thermo.TransportCoeffs, theta, grad_u, grad_theta, chi_omega, chi_nu):
    """Cellwise ``(1/theta)(S:grad u + kappa_nu |grad theta|^2 / theta)``.

    Returns the density and its two nonnegative summands.
    """
    S = thermo.stress_tensor(coeffs, chi_omega, theta, grad_u)
    visc = thermo.viscous_dissipation(S, grad_u) / theta
    cond = chi_nu * coeffs.kappa(theta) * np.sum(grad_theta**2, axis=0) / theta**2
    return visc + cond, visc, cond


def confinement_mass(problem, state: State, geom) -> float:
    """Mass in the solid part, straddling cells weighted by the smeared solid indicator."""
    return problem.grid.integrate(state.rho * geom.solid)


# --------------------------------------------------------------------------
# renormalisation library


@dataclass(frozen=True)
class Renormalizer:
    """``b`` and the matching ``rho B(rho)`` with ``B(rho) = B(1) + int_1^rho b(z)/z^2 dz``."""

    tag: str
    b: Callable
    rhoB: Callable


def _rhoB_min(K):
    def f(rho):
        rho = np.asarray(rho, dtype=float)
        safe = np.where(rho > 0, rho, 1.0)
        small = safe * np.log(np.minimum(safe, K))
        large = safe * (math.log(K) + 1.0) - K
        return np.where(rho > 0, np.where(rho <= K, small, large), 0.0)

    return f


def _rhoB_frac(rho):
    rho = np.asarray(rho, dtype=float)
    safe = np.where(rho > 0, rho, 1.0)
    return np.where(rho > 0, safe * (np.log(safe / (1.0 + safe)) + math.log(2.0)), 0.0)


RENORMALIZERS = {
    "zero": Renormalizer("zero", lambda z: np.zeros_like(np.asarray(z, dtype=float)), lambda r: np.asarray(r, dtype=float)),
    "min": Renormalizer("min", lambda z, K=1.0: np.minimum(np.asarray(z, dtype=float), K), _rhoB_min(1.0)),
    "frac": Renormalizer("frac", lambda z: np.asarray(z, dtype=float) / (1.0 + np.asarray(z, dtype=float)), _rhoB_frac),
}


def renormalizer(tag: str) -> Renormalizer:
    try:
        return RENORMALIZERS[tag]
    except KeyError:
        raise ValueError(f"unknown renormalisation {tag!r}; known: {', '.join(RENORMALIZERS)}") from None


def renormalized_terms(grid, rho, div_u, tag: str) -> tuple[float, float]:
    """``(int rho B(rho), int b(rho) div u)`` at one time level."""
    r = renormalizer(tag)
    return grid.integrate(r.rhoB(rho)), grid.integrate(r.b(rho) * div_u)


def renormalized_residual(times, rhoB, bdiv, tau: float, xi: float) -> float:
    """Residual of the renormalised identity tested with the tent ``psi = 1`` on
    ``[t0, tau - xi]`` decreasing linearly to zero at ``tau``:

        (1/xi) int_{tau-xi}^{tau} int rho B dt - int rho_0 B_0 + int psi int b div u dt.

    ``times``, ``rhoB`` and ``bdiv`` sample ``t``, ``int rho B`` and
    ``int b div u``; ``tau - xi`` and ``tau`` must be sample times.
    """
    t = np.asarray(times, dtype=float)
    rhoB = np.asarray(rhoB, dtype=float)
    bdiv = np.asarray(bdiv, dtype=float)
    if xi <= 0 or tau - xi < t[0] - 1e-12 or tau > t[-1] + 1e-12:
        raise ValueError("tent support must lie inside the sampled interval")
    window = (t >= tau - xi - 1e-12) & (t <= tau + 1e-12)
    psi = np.clip((tau - t) / xi, 0.0, 1.0)
    upto = t <= tau + 1e-12
    return float(_trapz(rhoB[window], t[window]) / xi - rhoB[0] + _trapz((psi * bdiv)[upto], t[upto]))


def _trapz(y, t):
    y = np.asarray(y, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


# --------------------------------------------------------------------------
# report


NORM_NAMES = (
    "delta_rho_beta_L1",
    "sqrt_rho_u_L2",
    "lam_theta5_L1",
    "grad_u_L2L2",
    "a_theta4_L1",
    "rho_L53",
    "grad_log_theta_L2L2",
    "grad_theta32_L2L2",
)
# gradient norms are only controlled in L2 over space-time; they accumulate in time
SPACETIME_NORMS = ("grad_u_L2L2", "grad_log_theta_L2L2", "grad_theta32_L2L2")

COLUMNS = (
    "t", "M", "E_kin", "E_int", "E_art", "E", "F", "F_int", "Sigma", "Sigma_int",
    "lam_theta5_int", "lam_theta4_int", "C", "C_max",
    "energy_LHS", "energy_RHS", "energy_residual",
    "LHS", "RHS", "dissipation_residual",
    "renorm_zero", "renorm_min", "renorm_frac",
    "solid_visc_int", "solid_cond_int", "solid_rad_int",
) + NORM_NAMES


@dataclass
class DiagnosticsReport:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path):
        csv = CsvSeries(COLUMNS)
        for r in self.rows:
            csv.append(r)
        return csv.write(path)


def energy_balance_residual(report: DiagnosticsReport, epsilon: float, F_scale: float = 1.0) -> np.ndarray:
    """``(LHS - RHS)/|RHS|`` per checkpoint; ``F_scale`` rescales the penalty flux."""
    lhs = report.series("energy_LHS") + (F_scale - 1.0) * report.series("F_int") / epsilon
    rhs = report.series("energy_RHS")
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    if np.any(np.abs(rhs) <= 1e-14 * np.maximum(scale, 1e-300)):
        raise ValueError("energy balance right-hand side vanishes; residual undefined")
    return (lhs - rhs) / np.abs(rhs)


def dissipation_inequality(report: DiagnosticsReport, tol: float = 0.05) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(LHS, RHS, violated)`` per checkpoint; violated means ``LHS > RHS`` beyond ``tol |RHS|``."""
    lhs, rhs = report.series("LHS"), report.series("RHS")
    return lhs, rhs, lhs - rhs > tol * np.abs(rhs)


def apriori_bounds(report: DiagnosticsReport) -> dict:
    """Sup in time of each monitored norm."""
    return {k: float(np.max(report.series(k))) for k in NORM_NAMES}


# --------------------------------------------------------------------------
# monitor


IMPLICIT_TERMS = ("F", "Sigma", "lam5", "lam4")


@dataclass
class LevelData:
    t: float
    F: float
    Sigma: float
    sigma_min: float
    lam5: float
    lam4: float
    W: float
    rho_u_V: float
    visc_solid: float
    cond_solid: float
    rad_solid: float
    renorm: dict
    norms: dict


class Monitor:
    """Accumulates a :class:`DiagnosticsReport` along a run."""

    def __init__(self, keep_levels: bool = True):
        self.report = DiagnosticsReport()
        self.keep_levels = keep_levels

    # -- per level ---------------------------------------------------------

    def level(self, problem, state: State, prim, geom) -> LevelData:
        grid, model, coeffs, params = problem.grid, problem.model, problem.coeffs, problem.params
        u, theta = prim.u, prim.theta
        G = velocity_gradient(u, grid)
        gth = gradient(theta, grid, bc="neumann")
        sigma, visc, _ = entropy_production(coeffs, theta, G, gth, geom.chi_omega, geom.chi_nu)
        S = thermo.stress_tensor(coeffs, geom.chi_omega, theta, G)
        rho = state.rho
        conv = np.einsum("i...,j...,ij...->...", u, u, geom.gradV) * rho
        divV = np.trace(geom.gradV)
        W = (thermo.viscous_dissipation(S, geom.gradV) - conv - rho * np.sum(u * geom.dVdt, axis=0)
             - prim.p * divV)
        kappa_nu = geom.chi_nu * coeffs.kappa(theta)
        normal_grad = np.abs(np.sum(gth * geom.normals, axis=0))
        div_u = np.trace(G)
        renorm = {tag: renormalized_terms(grid, rho, div_u, tag) for tag in RENORMALIZERS}
        norms = {
            "delta_rho_beta_L1": model.delta * grid.integrate(rho**model.beta),
            "sqrt_rho_u_L2": math.sqrt(grid.integrate(rho * np.sum(u**2, axis=0))),
            "lam_theta5_L1": params.lam * grid.integrate(theta**5),
            "grad_u_L2L2": grid.integrate(np.sum(G**2, axis=(0, 1))),
            "a_theta4_L1": grid.integrate(prim.a_loc * theta**4),
            "rho_L53": grid.integrate(rho ** (5.0 / 3.0)) ** 0.6,
            "grad_log_theta_L2L2": grid.integrate(np.sum(gth**2, axis=0) / theta**2),
            "grad_theta32_L2L2": grid.integrate(2.25 * theta * np.sum(gth**2, axis=0)),
        }
        return LevelData(
            t=state.t,
            F=penalty_flux(problem, state, prim, geom),
            Sigma=grid.integrate(sigma),
            sigma_min=float(np.min(sigma)),
            lam5=params.lam * grid.integrate(theta**5),
            lam4=params.lam * grid.integrate(theta**4),
            W=grid.integrate(W),
            rho_u_V=grid.integrate(rho * np.sum(u * geom.V, axis=0)),
            visc_solid=grid.integrate(geom.solid * visc),
            cond_solid=grid.integrate(geom.solid * kappa_nu * normal_grad / theta),
            rad_solid=grid.integrate(geom.solid * prim.a_loc * theta**4),
            renorm=renorm,
            norms=norms,
        )

    def _static(self, problem, state, prim, geom) -> dict:
        grid, model = problem.grid, problem.model
        parts = energy_parts(problem, state, prim)
        relH = thermo.relative_helmholtz(model, state.rho, prim.theta, self.rho_bar, prim.a_loc)
        ref = grid.integrate((state.rho - self.rho_bar) * thermo.helmholtz_drho(model, self.rho_bar)
                             + thermo.helmholtz_density(model, self.rho_bar, 1.0, prim.a_loc))
        free = parts["E_kin"] + parts["E_art"] + grid.integrate(
            thermo.helmholtz_density(model, state.rho, prim.theta, prim.a_loc))
        return {**parts, "M": grid.integrate(state.rho), "E": sum(parts.values()), "C": confinement_mass(problem, state, geom),
                "relH": grid.integrate(relH), "free": free, "ref": ref}

    # -- solver hooks ------------------------------------------------------

    def start(self, problem, state, prim, geom):
        self.problem = problem
        grid = problem.grid
        vol = float(np.prod(np.subtract(grid.upper, grid.lower)))
        self.rho_bar = grid.integrate(state.rho) / vol
        times = getattr(self, "checkpoint_times", None) or [state.t + problem.scheme.diag_interval]
        self.xi = times[0] - state.t
        lev = self.level(problem, state, prim, geom)
        st = self._static(problem, state, prim, geom)
        self.initial = st
        self.M0 = st["M"]
        self.E0_data = st["E"] - lev.rho_u_V
        self.D0_data = st["free"] - st["ref"] - lev.rho_u_V
        self.prev = lev
        self.prev_norms = lev.norms
        self.acc = {k: 0.0 for k in ("F", "Sigma", "lam5", "lam4", "W", "visc_solid", "cond_solid", "rad_solid")}
        self.times = [lev.t]
        self.renorm_hist = {tag: ([lev.renorm[tag][0]], [lev.renorm[tag][1]]) for tag in RENORMALIZERS}
        self.C_max = st["C"]
        self.sigma_min = lev.sigma_min
        self.mass_drift = 0.0
        self.rho_min = float(np.min(state.rho))
        self.theta_min = float(np.min(prim.theta))
        self.floor_hits = 0
        self.steps = 0
        self.sq = {k: 0.0 for k in SPACETIME_NORMS}
        self.norm_sup = self._norms(lev)
        self._row(problem, state, prim, geom, lev, st)

    def step(self, problem, state, prim, geom, dt, result):
        lev = self.level(problem, state, prim, geom)
        for k in self.acc:
            # implicitly treated terms follow the backward Euler quadrature of the scheme
            if k in IMPLICIT_TERMS:
                self.acc[k] += dt * getattr(lev, k)
            else:
                self.acc[k] += 0.5 * dt * (getattr(lev, k) + getattr(self.prev, k))
        self.prev = lev
        self.times.append(lev.t)
        for tag in RENORMALIZERS:
            self.renorm_hist[tag][0].append(lev.renorm[tag][0])
            self.renorm_hist[tag][1].append(lev.renorm[tag][1])
        M = problem.grid.integrate(state.rho)
        self.mass_drift = max(self.mass_drift, abs(M - self.M0) / self.M0)
        self.C_max = max(self.C_max, confinement_mass(problem, state, geom))
        self.sigma_min = min(self.sigma_min, lev.sigma_min)
        self.rho_min = min(self.rho_min, float(np.min(state.rho)))
        self.theta_min = min(self.theta_min, float(np.min(prim.theta)))
        self.floor_hits += result.floor_hits
        self.steps += 1
        for k in SPACETIME_NORMS:
            self.sq[k] += 0.5 * dt * (lev.norms[k] + self.prev_norms[k])
        self.prev_norms = lev.norms
        for k, v in self._norms(lev).items():
            self.norm_sup[k] = max(self.norm_sup[k], v)

    def _norms(self, lev: LevelData) -> dict:
        out = dict(lev.norms)
        for k in SPACETIME_NORMS:
            out[k] = math.sqrt(self.sq[k])
        return out

    def checkpoint(self, problem, state, prim, geom):
        self._row(problem, state, prim, geom, self.prev, self._static(problem, state, prim, geom))

    def _row(self, problem, state, prim, geom, lev: LevelData, st: dict):
        eps = problem.params.epsilon
        a = self.acc if self.steps else {k: 0.0 for k in ("F", "Sigma", "lam5", "lam4", "W", "visc_solid", "cond_solid", "rad_solid")}
        e_lhs = st["E"] + a["F"] / eps + a["lam5"]
        e_rhs = self.E0_data + a["W"] + lev.rho_u_V
        d_lhs = st["relH"] + st["E_kin"] + st["E_art"] + a["F"] / eps + a["Sigma"] + a["lam5"]
        d_rhs = self.D0_data + a["W"] + a["lam4"] + lev.rho_u_V
        row = {
            "t": state.t, "M": st["M"], "E_kin": st["E_kin"], "E_int": st["E_int"], "E_art": st["E_art"], "E": st["E"],
            "F": lev.F, "F_int": a["F"], "Sigma": lev.Sigma, "Sigma_int": a["Sigma"],
            "lam_theta5_int": a["lam5"], "lam_theta4_int": a["lam4"], "C": st["C"], "C_max": self.C_max,
            "energy_LHS": e_lhs, "energy_RHS": e_rhs, "energy_residual": (e_lhs - e_rhs) / abs(e_rhs),
            "LHS": d_lhs, "RHS": d_rhs, "dissipation_residual": (d_lhs - d_rhs) / abs(d_rhs),
            "solid_visc_int": a["visc_solid"], "solid_cond_int": a["cond_solid"], "solid_rad_int": a["rad_solid"],
        }
        for tag in RENORMALIZERS:
            if state.t - self.xi >= self.times[0] - 1e-14 and len(self.times) > 1:
                rb, bd = self.renorm_hist[tag]
                row[f"renorm_{tag}"] = renormalized_residual(self.times, rb, bd, state.t, self.xi)
            else:
                row[f"renorm_{tag}"] = 0.0
        row.update(self._norms(lev))
        self.report.rows.append(row)

    # -- summary -----------------------------------------------------------

    def finish(self) -> DiagnosticsReport:
        r = self.report
        r.summary = {
            "steps": self.steps,
            "mass_drift_max": self.mass_drift,
            "confinement_max": self.C_max,
            "confinement_max_rel": self.C_max / self.M0,
            "sigma_min": self.sigma_min,
            "rho_min": self.rho_min,
            "theta_min": self.theta_min,
            "floor_hits": self.floor_hits,
            "penalty_flux_int": self.acc["F"],
            "solid_visc_int": self.acc["visc_solid"],
            "solid_cond_int": self.acc["cond_solid"],
            "solid_rad_int": self.acc["rad_solid"],
            **{f"sup_{k}": v for k, v in self.norm_sup.items()},
        }
        return r
