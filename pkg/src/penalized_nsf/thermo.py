"""Constitutive relations: monatomic molecular gas plus radiation, artificial pressure,
Newtonian stress and Fourier conduction.

The molecular part is generated by a structure function ``P``:

    p_M = theta^(5/2) P(Z),   rho e_M = 3/2 theta^(5/2) P(Z),   s_M = S(Z),
    Z = rho / theta^(3/2),    S'(Z) = -3/2 (5/3 P(Z) - Z P'(Z)) / Z^2,  S(1) = 0.

The default ``P(Z) = Z + Z^(5/3)`` gives ``p_M = rho theta + rho^(5/3)``,
``e_M = 3/2 (theta + rho^(2/3))`` and ``s_M = 3/2 log(theta) - log(rho)``.
All functions are vectorised over numpy arrays; ``a_loc`` is the local
radiation coefficient (the constant ``a`` times a contrast field).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

THETA_MIN = 1e-8


class ColdFloorError(ValueError):
    """Energy below the zero-temperature limit: no admissible temperature."""


@dataclass(frozen=True)
class StructureFunction:
    P: Callable
    dP: Callable
    S: Optional[Callable] = None
    name: str = "custom"

    def dS(self, Z):
        Z = np.asarray(Z, dtype=float)
        return -1.5 * (5.0 / 3.0 * self.P(Z) - Z * self.dP(Z)) / Z**2

    def entropy(self, Z):
        if self.S is not None:
            return self.S(Z)
        Z = np.asarray(Z, dtype=float)
        out = np.empty(Z.shape)
        for idx, z in np.ndenumerate(Z):
            out[idx] = integrate.quad(lambda y: float(self.dS(y)), 1.0, z, limit=200)[0]
        return out


def default_structure() -> StructureFunction:
    return StructureFunction(
        P=lambda Z: Z + np.power(Z, 5.0 / 3.0),
        dP=lambda Z: 1.0 + 5.0 / 3.0 * np.power(Z, 2.0 / 3.0),
        S=lambda Z: -np.log(Z),
        name="Z+Z^5/3",
    )


@dataclass(frozen=True)
class EosModel:
    """Equation of state with radiation constant ``a`` and artificial pressure ``delta rho^beta``."""

    structure: StructureFunction = field(default_factory=default_structure)
    a: float = 1e-3
    beta: float = 4.0
    delta: float = 1e-3
    z_lo: float = 0.1
    z_hi: float = 10.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("radiation constant must be positive")
        if self.beta < 4:
            raise ValueError(f"artificial pressure exponent must satisfy beta >= 4, got {self.beta}")
        if self.delta < 0:
            raise ValueError("artificial pressure weight must be nonnegative")
        if not 0 < self.z_lo < self.z_hi:
            raise ValueError("need 0 < z_lo < z_hi")

    @property
    def p_inf(self) -> float:
        # far enough out that the sub-leading terms of P are below rounding
        Z = 1e30
        return float(self.structure.P(Z) / Z ** (5.0 / 3.0))


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(~(theta > 0)):
        raise ValueError("temperature must be positive")
    return theta


def _check_rho(rho, strict=False):
    rho = np.asarray(rho, dtype=float)
    if strict and np.any(~(rho > 0)):
        raise ValueError("density must be positive")
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    return rho


def _aloc(model: EosModel, a_loc):
    return model.a if a_loc is None else np.asarray(a_loc, dtype=float)


def molecular_pressure(model: EosModel, rho, theta):
    rho = _check_rho(rho)
    theta = _check_theta(theta)
    return theta**2.5 * model.structure.P(rho / theta**1.5)


def pressure(model: EosModel, rho, theta, a_loc=None, delta=None):
    """``theta^(5/2) P(rho theta^(-3/2)) + a_loc theta^4 / 3 + delta rho^beta``."""
    rho = _check_rho(rho)
    theta = _check_theta(theta)
    delta = model.delta if delta is None else delta
    return molecular_pressure(model, rho, theta) + _aloc(model, a_loc) / 3.0 * theta**4 + delta * rho**model.beta


def internal_energy(model: EosModel, rho, theta, a_loc=None):
    """Internal energy per unit volume ``rho e``."""
    rho = _check_rho(rho)
    theta = _check_theta(theta)
    return 1.5 * molecular_pressure(model, rho, theta) + _aloc(model, a_loc) * theta**4


def heat_capacity(model: EosModel, rho, theta, a_loc=None):
    """``d(rho e)/d theta`` at fixed density."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    Z = rho / theta**1.5
    P, dP = model.structure.P(Z), model.structure.dP(Z)
    return 3.75 * theta**1.5 * P - 2.25 * rho * dP + 4.0 * _aloc(model, a_loc) * theta**3


def entropy_density(model: EosModel, rho, theta, a_loc=None):
    """``rho s`` including the vacuum limit ``rho s_M -> 0``."""
    rho = _check_rho(rho)
    theta = _check_theta(theta)
    pos = rho > 0
    Z = np.where(pos, rho, 1.0) / theta**1.5
    mol = np.where(pos, rho * model.structure.entropy(Z), 0.0)
    return mol + 4.0 / 3.0 * _aloc(model, a_loc) * theta**3


def entropy(model: EosModel, rho, theta, a_loc=None):
    """Entropy per unit volume ``rho s``; the constant is fixed by ``s_M(1, 1) = 0``."""
    _check_rho(rho, strict=True)
    return entropy_density(model, rho, theta, a_loc)


def helmholtz(model: EosModel, rho, theta, a_loc=None):
    """Ballistic free energy ``rho (e - s)`` at reference temperature one."""
    _check_rho(rho, strict=True)
    return helmholtz_density(model, rho, theta, a_loc)


def helmholtz_density(model: EosModel, rho, theta, a_loc=None):
    return internal_energy(model, rho, theta, a_loc) - entropy_density(model, rho, theta, a_loc)


def helmholtz_drho(model: EosModel, rho, theta=1.0):
    """``d/d rho`` of ``rho (e - s)`` at fixed temperature (radiation terms drop out)."""
    rho = np.asarray(rho, dtype=float)
    Z = rho / theta**1.5
    st = model.structure
    return 1.5 * theta * st.dP(Z) - (st.entropy(Z) + Z * st.dS(Z))


def relative_helmholtz(model: EosModel, rho, theta, rho_bar, a_loc=None):
    """``H(rho, theta) - (rho - rho_bar) dH/drho(rho_bar, 1) - H(rho_bar, 1)``; nonnegative."""
    rho_bar = float(rho_bar)
    h_bar = helmholtz_density(model, rho_bar, 1.0, a_loc)
    return helmholtz_density(model, rho, theta, a_loc) - (np.asarray(rho) - rho_bar) * helmholtz_drho(model, rho_bar) - h_bar


def sound_speed_sq(model: EosModel, rho, theta, delta=None):
    """Isothermal ``dp/d rho``; positive by thermodynamic stability."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    delta = model.delta if delta is None else delta
    return theta * model.structure.dP(rho / theta**1.5) + delta * model.beta * rho ** (model.beta - 1)


def cold_energy(model: EosModel, rho):
    """Zero-temperature limit ``3/2 p_inf rho^(5/3)`` of the molecular energy density."""
    return 1.5 * model.p_inf * np.asarray(rho, dtype=float) ** (5.0 / 3.0)


def invert_temperature(model: EosModel, rho, E, a_loc=None, sink=0.0, rtol=1e-12, maxiter=200, guess=None):
    """Temperature with ``rho e(rho, theta) + sink theta^5 = E``.

    Safeguarded Newton iteration inside a bisection bracket; the left-hand
    side is strictly increasing in ``theta``. ``guess`` warm-starts the iteration.
    """
    rho = np.asarray(rho, dtype=float)
    E = np.asarray(E, dtype=float)
    a = np.broadcast_to(_aloc(model, a_loc), np.broadcast(rho, E).shape).astype(float)
    rho, E = np.broadcast_arrays(rho, E)
    sink = np.broadcast_to(np.asarray(sink, dtype=float), rho.shape)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    floor = cold_energy(model, rho)
    below = ~(E > floor)
    if np.any(below):
        idx = tuple(np.argwhere(below)[0]) if rho.ndim else ()
        raise ColdFloorError(
            f"energy {float(E[idx])!r} at or below the cold floor {float(floor[idx])!r} (cell {idx})"
        )
    undetermined = (rho == 0) & (a == 0) & (sink == 0)
    if np.any(undetermined):
        raise ValueError("temperature undetermined: vacuum without radiation")

    def f(th):
        return internal_energy(model, rho, th, a) + sink * th**5 - E

    def df(th):
        return heat_capacity(model, rho, th, a) + 5.0 * sink * th**4

    th = np.ones(rho.shape) if guess is None else np.broadcast_to(np.asarray(guess, dtype=float), rho.shape).copy()
    th = np.where(th > 0, th, 1.0)
    lo = np.zeros(rho.shape)
    hi = np.full(rho.shape, np.inf)
    scale = np.abs(E) + floor
    for _ in range(maxiter):
        val = f(th)
        lo = np.where(val < 0, th, lo)
        hi = np.where(val > 0, th, hi)
        converged = np.abs(val) <= 1e-15 * scale
        new = th - val / df(th)
        bounded = np.isfinite(hi)
        out = ~((new > lo) & (new < hi))
        fallback = np.where(bounded, 0.5 * (lo + hi), 2.0 * th)
        new = np.where(out, fallback, new)
        done = converged | (np.abs(new - th) <= rtol * 0.1 * new)
        th = np.where(converged, th, new)
        if np.all(done):
            break
    return th if th.ndim else float(th)


# --------------------------------------------------------------------------
# transport


@dataclass(frozen=True)
class TransportCoeffs:
    """Envelope constants; the laws used are ``mu = mu_lo (1 + theta)``,
    ``eta = eta_hi (1 + theta)``, ``kappa = kappa_M_lo (1 + theta) + kappa_R_lo (1 + theta^3)``."""

    mu_lo: float = 1e-2
    mu_hi: float = 2e-2
    mu_slope_max: float = 1e-2
    eta_hi: float = 1e-3
    kappa_M_lo: float = 1e-2
    kappa_M_hi: float = 2e-2
    kappa_R_lo: float = 1e-3
    kappa_R_hi: float = 2e-3

    def __post_init__(self):
        for name in ("mu_lo", "mu_hi", "mu_slope_max", "kappa_M_lo", "kappa_M_hi", "kappa_R_lo", "kappa_R_hi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eta_hi < 0:
            raise ValueError("eta_hi must be nonnegative")
        if self.mu_lo > self.mu_hi or self.kappa_M_lo > self.kappa_M_hi or self.kappa_R_lo > self.kappa_R_hi:
            raise ValueError("lower envelope constant exceeds the upper one")

    def mu(self, theta):
        return self.mu_lo * (1.0 + np.asarray(theta, dtype=float))

    def bulk(self, theta):
        return self.eta_hi * (1.0 + np.asarray(theta, dtype=float))

    def kappa_M(self, theta):
        return self.kappa_M_lo * (1.0 + np.asarray(theta, dtype=float))

    def kappa_R(self, theta):
        return self.kappa_R_lo * (1.0 + np.asarray(theta, dtype=float) ** 3)

    def kappa(self, theta):
        return self.kappa_M(theta) + self.kappa_R(theta)


def stress_tensor(coeffs: TransportCoeffs, chi, theta, grad_u, chi_bulk=None):
    """Newtonian stress with contrast factors; ``grad_u[i, j] = d u_i / d x_j``.

    The deviatoric factor is 2/3 in every dimension.
    """
    G = np.asarray(grad_u, dtype=float)
    d = G.shape[0]
    chi_bulk = chi if chi_bulk is None else chi_bulk
    mu = np.asarray(chi) * coeffs.mu(theta)
    eta = np.asarray(chi_bulk) * coeffs.bulk(theta)
    div = np.trace(G, axis1=0, axis2=1)
    S = mu * (G + np.swapaxes(G, 0, 1))
    for i in range(d):
        S[i, i] = S[i, i] + (eta - 2.0 / 3.0 * mu) * div
    return S


def viscous_dissipation(S, grad_u):
    """``S : grad u`` cellwise."""
    return np.einsum("ij...,ij...->...", S, grad_u)


def conductivity_primitive(coeffs: TransportCoeffs, theta):
    """``K(theta) = int_1^theta kappa(z) dz`` in closed form."""
    theta = _check_theta(theta)

    def F(t):
        return coeffs.kappa_M_lo * (t + 0.5 * t**2) + coeffs.kappa_R_lo * (t + 0.25 * t**4)

    return F(theta) - F(1.0)


# --------------------------------------------------------------------------
# hypothesis checks


def specific_energy(model, rho, theta, a_loc=None):
    return internal_energy(model, rho, theta, a_loc) / rho


def specific_entropy(model, rho, theta, a_loc=None):
    return entropy(model, rho, theta, a_loc) / rho


def _d5(f, x, dx):
    return (f(x - 2 * dx) - 8 * f(x - dx) + 8 * f(x + dx) - f(x + 2 * dx)) / (12 * dx)


def gibbs_residual(model: EosModel, rho, theta, h=1e-4, a_loc=None, e_fn=None, s_fn=None, p_fn=None):
    """``max(|theta ds/dtheta - de/dtheta|, |theta ds/drho - de/drho + p/rho^2|)``.

    Derivatives are five-point centred differences with steps ``h*rho`` and
    ``h*theta``. ``e_fn``, ``s_fn``, ``p_fn`` override the specific energy,
    specific entropy and pressure (used to probe the detector).
    """
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(rho <= 0) or np.any(theta <= 0):
        raise ValueError("density and temperature must be positive")
    e_fn = e_fn or (lambda r, t: specific_energy(model, r, t, a_loc))
    s_fn = s_fn or (lambda r, t: specific_entropy(model, r, t, a_loc))
    p_fn = p_fn or (lambda r, t: pressure(model, r, t, a_loc, delta=0.0))
    dr, dt = h * rho, h * theta
    ds_dt = _d5(lambda t: s_fn(rho, t), theta, dt)
    de_dt = _d5(lambda t: e_fn(rho, t), theta, dt)
    ds_dr = _d5(lambda r: s_fn(r, theta), rho, dr)
    de_dr = _d5(lambda r: e_fn(r, theta), rho, dr)
    r1 = np.abs(theta * ds_dt - de_dt)
    r2 = np.abs(theta * ds_dr - de_dr + p_fn(rho, theta) / rho**2)
    return np.maximum(r1, r2)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def sample_grid(lo=0.01, hi=10.0, n=25):
    r = np.geomspace(lo, hi, n)
    return np.meshgrid(r, r, indexing="ij")


def check_hypotheses(model: EosModel, coeffs: TransportCoeffs, n=25, h=1e-4, gibbs_tol=1e-6) -> list[Check]:
    """Sampled verification of every constitutive hypothesis, one ``Check`` each."""
    st = model.structure
    checks: list[Check] = []
    Z = np.geomspace(1e-8, 1e8, 400)

    P0 = float(st.P(np.array(0.0)))
    dP0 = float(st.dP(np.array(0.0)))
    checks.append(Check("structure-origin", P0 == 0.0 and dP0 > 0, f"P(0)={P0:g}, P'(0)={dP0:g}"))
    dP = st.dP(Z)
    checks.append(Check("structure-monotone", bool(np.all(dP > 0)), f"min P'={dP.min():.4g}"))
    gap = 5.0 / 3.0 * st.P(Z) - Z * dP
    ratio = gap / Z
    checks.append(
        Check(
            "energy-slope-bounds",
            bool(np.all(gap > 0) and np.isfinite(ratio).all()),
            f"(5/3)P - ZP' in (0, c Z] with c={ratio.max():.4g}",
        )
    )
    pinf_a = float(st.P(1e10) / 1e10 ** (5 / 3))
    pinf_b = float(st.P(1e12) / 1e12 ** (5 / 3))
    checks.append(
        Check("pressure-limit", pinf_b > 0 and abs(pinf_a - pinf_b) <= 1e-2 * pinf_b, f"p_inf={pinf_b:.6g}")
    )

    th = np.geomspace(1e-4, 1e4, 200)
    mu = coeffs.mu(th)
    dmu = np.gradient(mu, th)
    ok = np.all(coeffs.mu_lo * (1 + th) <= mu * (1 + 1e-14)) and np.all(mu <= coeffs.mu_hi * (1 + th))
    checks.append(Check("viscosity-envelope", bool(ok and np.all(np.abs(dmu) <= coeffs.mu_slope_max * (1 + 1e-9))),
                        f"mu/(1+theta) in [{(mu/(1+th)).min():.3g}, {(mu/(1+th)).max():.3g}]"))
    eta = coeffs.bulk(th)
    checks.append(Check("bulk-viscosity-envelope", bool(np.all((eta >= 0) & (eta <= coeffs.eta_hi * (1 + th) * (1 + 1e-14)))), ""))
    kR, kM = coeffs.kappa_R(th), coeffs.kappa_M(th)
    okR = np.all(coeffs.kappa_R_lo * (1 + th**3) <= kR * (1 + 1e-14)) and np.all(kR <= coeffs.kappa_R_hi * (1 + th**3))
    okM = np.all(coeffs.kappa_M_lo * (1 + th) <= kM * (1 + 1e-14)) and np.all(kM <= coeffs.kappa_M_hi * (1 + th))
    checks.append(Check("radiative-conductivity-envelope", bool(okR), ""))
    checks.append(Check("molecular-conductivity-envelope", bool(okM), ""))

    R, T = sample_grid(n=n)
    res = gibbs_residual(model, R, T, h=h)
    checks.append(Check("gibbs-relation", bool(np.all(res <= gibbs_tol)), f"max residual {res.max():.3e} (tol {gibbs_tol:g})"))

    dpm = _d5(lambda r: molecular_pressure(model, r, T), R, h * R)
    rho_eM = lambda t: 1.5 * molecular_pressure(model, R, t) / R
    dem = _d5(rho_eM, T, h * T)
    checks.append(Check("pressure-monotone-in-density", bool(np.all(dpm > 0)), f"min dp_M/drho={dpm.min():.4g}"))
    checks.append(Check("energy-monotone-in-temperature", bool(np.all(dem > 0) and np.isfinite(dem.max())),
                        f"de_M/dtheta in [{dem.min():.4g}, {dem.max():.4g}]"))

    e_M = 1.5 * molecular_pressure(model, R, T) / R
    dem_dr = _d5(lambda r: 1.5 * molecular_pressure(model, r, T) / r, R, h * R)
    c_em3 = float(np.max(np.abs(R * dem_dr) / e_M))
    checks.append(Check("energy-density-derivative-bound", bool(np.isfinite(c_em3)), f"|rho de_M/drho| <= {c_em3:.4g} e_M"))
    e0 = 1.5 * molecular_pressure(model, R[:, 0], THETA_MIN) / R[:, 0]
    lim = 1.5 * model.p_inf * R[:, 0] ** (2.0 / 3.0)
    checks.append(Check("cold-energy-limit", bool(np.allclose(e0, lim, rtol=1e-6) and np.all(lim > 0)),
                        f"max rel dev {np.max(np.abs(e0 / lim - 1)):.2e}"))

    Zs = R / T**1.5
    big = Zs > model.z_hi
    pm = molecular_pressure(model, R, T)
    mono = np.abs(pm - 2.0 / 3.0 * R * e_M) <= 1e-12 * pm
    checks.append(Check("monatomic-relation", bool(np.all(mono[big])), f"{int(big.sum())} samples above z_hi"))

    a = model.a
    rhoe = internal_energy(model, R, T, a)
    margin = rhoe - (a * T**4 + 1.5 * model.p_inf * R ** (5.0 / 3.0))
    checks.append(Check("energy-coercivity", bool(np.all(margin >= -1e-12 * rhoe)), f"min margin {margin.min():.4g}"))

    c_lo = float(np.min(pm / R ** (5.0 / 3.0)))
    c_hi = float(np.max(pm / np.maximum(T**2.5, R ** (5.0 / 3.0))))
    checks.append(Check("pressure-envelope", c_lo > 0 and np.isfinite(c_hi), f"c_lo={c_lo:.4g}, c_hi={c_hi:.4g}"))
    c_e = float(np.max(e_M / (R ** (2.0 / 3.0) + T)))
    checks.append(Check("energy-envelope", bool(np.all(e_M >= 0)) and np.isfinite(c_e), f"c={c_e:.4g}"))

    try:
        back = invert_temperature(model, R, rhoe, a)
        err = float(np.max(np.abs(back / T - 1)))
        checks.append(Check("temperature-inversion", err <= 1e-10, f"max rel error {err:.2e}"))
    except ValueError as exc:
        checks.append(Check("temperature-inversion", False, str(exc)))

    R50, T50 = sample_grid(n=50)
    rel = relative_helmholtz(model, R50, T50, 1.0, a)
    checks.append(Check("relative-helmholtz-nonnegative", bool(np.all(rel >= -1e-12)), f"min {rel.min():.4g}"))
    return checks


def format_report(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL'}  {c.detail}".rstrip() for c in checks]
    return "\n".join(lines)
