"""Concrete systems: a scalar toy, barotropic Navier-Stokes and compressible MHD.

All models are returned as :class:`SymbolicSystem` values in symmetrized
block form. The Navier-Stokes symmetrizer is the MHD one with the
temperature and magnetic rows and columns removed.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import AssumptionGViolation, ModelUnknown, ParameterViolation
from .symbols import AssumptionReport, SymbolicSystem

logger = logging.getLogger(__name__)

Coefficient = Union[float, Callable[..., float]]


def _const(mat: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    mat = np.array(mat, dtype=float)
    return lambda u: mat


def _fd(fun: Callable[..., float], args: tuple, which: int, rel: float = 1e-6) -> float:
    h = rel * (abs(args[which]) + 1.0)
    up = list(args)
    dn = list(args)
    up[which] += h
    dn[which] -= h
    return (fun(*up) - fun(*dn)) / (2 * h)


def _value(coef: Coefficient, *args: float) -> float:
    return float(coef(*args)) if callable(coef) else float(coef)


def make_toy1d(s1: Sequence[Sequence[float]] | None = None) -> SymbolicSystem:
    """Two-component toy with ``S0 = I``, ``S1 = [[0,1],[1,0]]``, ``Y11 = diag(0,1)``.

    Args:
        s1: Optional replacement for the convection matrix; ``[[0,0],[0,0]]``
            gives the decoupled system where the SK condition fails.
    """
    s1 = np.array([[0.0, 1.0], [1.0, 0.0]] if s1 is None else s1, dtype=float)
    name = "toy1d" if np.any(s1) else "toy1d-decoupled"
    return SymbolicSystem(
        d=1, n1=1, n2=1, uref=np.zeros(2),
        s0=_const(np.eye(2)), s_alpha=[_const(s1)], y=[[_const(np.diag([0.0, 1.0]))]],
        name=name,
    )


def make_heat(d: int = 1, n2: int = 1, diffusivity: float = 1.0) -> SymbolicSystem:
    """Purely parabolic system (``n1 = 0``): ``dV/dt = diffusivity * Laplacian V``."""
    eye = np.eye(n2)
    y = [[_const(diffusivity * eye if a == b else 0 * eye) for b in range(d)] for a in range(d)]
    return SymbolicSystem(
        d=d, n1=0, n2=n2, uref=np.zeros(n2), s0=_const(eye),
        s_alpha=[_const(0 * eye) for _ in range(d)], y=y, name="heat",
    )


@dataclass(frozen=True)
class PressureLaw:
    """Barotropic pressure ``p(rho) = coefficient * rho**exponent``."""

    coefficient: float = 1.0
    exponent: float = 2.0

    def p(self, rho: float) -> float:
        return self.coefficient * rho**self.exponent

    def dp(self, rho: float) -> float:
        return self.coefficient * self.exponent * rho ** (self.exponent - 1)


def _pressure_derivative(pressure_law) -> Callable[[float], float]:
    if hasattr(pressure_law, "dp"):
        return pressure_law.dp
    return lambda rho: _fd(pressure_law, (rho,), 0)


def _pressure_value(pressure_law) -> Callable[[float], float]:
    if hasattr(pressure_law, "p"):
        return pressure_law.p
    return pressure_law


@dataclass(frozen=True)
class NsParams:
    """Parameters of the barotropic Navier-Stokes model, kept for the nonlinear solver."""

    d: int
    mu: Coefficient
    lam: Coefficient
    pressure: Callable[[float], float]
    dpressure: Callable[[float], float]
    rho_ref: float


def make_barotropic_ns(
    d: int = 2,
    mu: Coefficient = 1.0,
    lam: Coefficient = 0.0,
    pressure_law=None,
    rho_ref: float = 1.0,
    velocity_ref: Sequence[float] | None = None,
) -> SymbolicSystem:
    """Barotropic compressible Navier-Stokes in symmetrized form.

    State ``(rho, u)``, ``n1 = 1``, ``n2 = d``. ``S0 = diag(p'(rho)/rho, rho I)``
    and ``Z(xi) = mu |xi|^2 I + (mu + lam) xi xi^T``.

    Args:
        d: Spatial dimension.
        mu: Shear viscosity, a constant or a function of density.
        lam: Second viscosity, a constant or a function of density.
        pressure_law: Object with ``p`` and ``dp`` methods or a plain callable
            ``p(rho)``; defaults to ``p = rho**2``.
        rho_ref: Reference density.
        velocity_ref: Reference velocity (default zero).

    Raises:
        ParameterViolation: ``mu``, ``2 mu + lam`` or ``p'`` is not positive at
            the reference density.
    """
    pressure_law = PressureLaw() if pressure_law is None else pressure_law
    dp = _pressure_derivative(pressure_law)
    mu_r, lam_r = _value(mu, rho_ref), _value(lam, rho_ref)
    if rho_ref <= 0:
        raise ParameterViolation(f"reference density must be positive, got {rho_ref}")
    if mu_r <= 0:
        raise ParameterViolation(f"mu(rho_ref) = {mu_r} must be positive")
    if 2 * mu_r + lam_r <= 0:
        raise ParameterViolation(f"nu = 2 mu + lambda = {2 * mu_r + lam_r} must be positive")
    if dp(rho_ref) <= 0:
        raise ParameterViolation(f"p'(rho_ref) = {dp(rho_ref)} must be positive")
    vel = np.zeros(d) if velocity_ref is None else np.asarray(velocity_ref, dtype=float)
    n = d + 1

    def s0(u):
        rho = u[0]
        return np.diag([dp(rho) / rho] + [rho] * d)

    def s_alpha(a):
        def mat(u):
            rho, vel_a = u[0], u[1 + a]
            out = np.zeros((n, n))
            out[0, 0] = dp(rho) / rho * vel_a
            out[0, 1 + a] = out[1 + a, 0] = dp(rho)
            out[1:, 1:] = rho * vel_a * np.eye(d)
            return out
        return mat

    def y_ab(a, b):
        def mat(u):
            rho = u[0]
            m, lm = _value(mu, rho), _value(lam, rho)
            out = np.zeros((n, n))
            z = np.zeros((d, d))
            if a == b:
                z += m * np.eye(d)
            z[b, a] += m
            z[a, b] += lm
            out[1:, 1:] = z
            return out
        return mat

    system = SymbolicSystem(
        d=d, n1=1, n2=d, uref=np.concatenate([[rho_ref], vel]),
        s0=s0, s_alpha=[s_alpha(a) for a in range(d)],
        y=[[y_ab(a, b) for b in range(d)] for a in range(d)],
        domain_check=lambda u: bool(u[0] > 0),
        name="ns-baro",
    )
    object.__setattr__(system, "ns_params", NsParams(d, mu, lam, _pressure_value(pressure_law), dp, rho_ref))
    return system


@dataclass(frozen=True)
class ThermoClosure:
    """Pressure ``p(rho, theta)`` and internal energy ``e(rho, theta)``.

    Missing derivatives are computed by central differences.
    """

    p: Callable[[float, float], float]
    e: Callable[[float, float], float]
    p_rho: Callable[[float, float], float] | None = None
    p_theta: Callable[[float, float], float] | None = None
    e_theta: Callable[[float, float], float] | None = None

    def dp_rho(self, rho, theta):
        return self.p_rho(rho, theta) if self.p_rho else _fd(self.p, (rho, theta), 0)

    def dp_theta(self, rho, theta):
        return self.p_theta(rho, theta) if self.p_theta else _fd(self.p, (rho, theta), 1)

    def de_theta(self, rho, theta):
        return self.e_theta(rho, theta) if self.e_theta else _fd(self.e, (rho, theta), 1)


def ideal_gas() -> ThermoClosure:
    """``p = rho theta`` and ``e = theta``."""
    return ThermoClosure(
        p=lambda r, t: r * t, e=lambda r, t: t,
        p_rho=lambda r, t: t, p_theta=lambda r, t: r, e_theta=lambda r, t: 1.0,
    )


@dataclass(frozen=True)
class TransportCoeffs:
    """Viscosities, heat conductivity, electric conductivity and permeability.

    Each coefficient is a constant or a function of ``(rho, theta)``.
    """

    mu: Coefficient = 1.0
    lam: Coefficient = 1.0
    k: Coefficient = 1.0
    sigma: Coefficient = 1.0
    mu0: float = 1.0


@dataclass(frozen=True)
class MhdParams:
    """Everything needed to evaluate Assumption G."""

    thermo: ThermoClosure = field(default_factory=ideal_gas)
    transport: TransportCoeffs = field(default_factory=TransportCoeffs)
    state_ref: tuple = (1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0)


def check_assumption_G(params: MhdParams, samples: Sequence[np.ndarray] | None = None) -> AssumptionReport:
    """Evaluate the thermodynamic and transport inequalities at state samples.

    Items: ``G1`` (p_rho > 0 and e_theta > 0), ``G2`` (mu > 0, 2 mu + lam > 0,
    k > 0) and ``G3`` (sigma > 0), each with the worst value seen.
    """
    samples = [np.asarray(params.state_ref)] if samples is None else samples
    th, tr = params.thermo, params.transport
    worst = {"p_rho": np.inf, "e_theta": np.inf, "mu": np.inf, "nu": np.inf, "k": np.inf, "sigma": np.inf}
    for u in samples:
        rho, theta = float(u[0]), float(u[4])
        vals = {
            "p_rho": th.dp_rho(rho, theta), "e_theta": th.de_theta(rho, theta),
            "mu": _value(tr.mu, rho, theta), "k": _value(tr.k, rho, theta),
            "nu": 2 * _value(tr.mu, rho, theta) + _value(tr.lam, rho, theta),
            "sigma": _value(tr.sigma, rho, theta),
        }
        for key, v in vals.items():
            worst[key] = min(worst[key], v)
    report = AssumptionReport()
    report.add("G1", worst["p_rho"] > 0 and worst["e_theta"] > 0, min(worst["p_rho"], worst["e_theta"]),
               f"p_rho>0 (min {worst['p_rho']:.6g}), e_theta>0 (min {worst['e_theta']:.6g})")
    report.add("G2", worst["mu"] > 0 and worst["nu"] > 0 and worst["k"] > 0,
               min(worst["mu"], worst["nu"], worst["k"]),
               f"mu>0 (min {worst['mu']:.6g}), nu>0 (min {worst['nu']:.6g}), k>0 (min {worst['k']:.6g})")
    report.add("G3", worst["sigma"] > 0 and params.transport.mu0 > 0, worst["sigma"],
               f"sigma>0 (min {worst['sigma']:.6g})")
    return report


def make_mhd(
    pressure: Callable[[float, float], float] | ThermoClosure | None = None,
    energy: Callable[[float, float], float] | None = None,
    transport_coeffs: TransportCoeffs | None = None,
    state_ref: Sequence[float] | None = None,
) -> SymbolicSystem:
    """Compressible viscous heat-conducting MHD in three dimensions.

    State ``(rho, u, theta, B)`` with ``n1 = 1`` and ``n2 = 7``.

    Args:
        pressure: ``p(rho, theta)`` or a full :class:`ThermoClosure`; defaults
            to the ideal gas.
        energy: ``e(rho, theta)`` when ``pressure`` is a plain callable.
        transport_coeffs: Transport coefficients (all 1 by default).
        state_ref: Reference state (default ``(1, 0,0,0, 1, 1,0,0)``).

    Raises:
        AssumptionGViolation: an inequality fails at the reference state.
    """
    if isinstance(pressure, ThermoClosure):
        thermo = pressure
    elif pressure is None and energy is None:
        thermo = ideal_gas()
    else:
        base = ideal_gas()
        thermo = ThermoClosure(p=pressure or base.p, e=energy or base.e,
                               p_rho=None if pressure else base.p_rho,
                               p_theta=None if pressure else base.p_theta,
                               e_theta=None if energy else base.e_theta)
    tr = transport_coeffs or TransportCoeffs()
    uref = np.array(state_ref if state_ref is not None else MhdParams().state_ref, dtype=float)
    params = MhdParams(thermo, tr, tuple(uref))
    report = check_assumption_G(params)
    if not report.passed:
        first = report.failures()[0]
        raise AssumptionGViolation(first.name, first.detail)
    mu0 = tr.mu0
    n = 8
    iu, ith, ib = slice(1, 4), 4, slice(5, 8)

    def s0(u):
        rho, theta = u[0], u[4]
        return np.diag([thermo.dp_rho(rho, theta) / rho] + [rho] * 3
                       + [rho * thermo.de_theta(rho, theta) / theta] + [1.0 / mu0] * 3)

    def s_alpha(a):
        def mat(u):
            rho, vel, theta, bf = u[0], u[iu], u[4], u[ib]
            e = np.zeros(3)
            e[a] = 1.0
            pr, pt = thermo.dp_rho(rho, theta), thermo.dp_theta(rho, theta)
            out = np.zeros((n, n))
            out[0, 0] = pr / rho * vel[a]
            out[0, iu] = pr * e
            out[iu, 0] = pr * e
            out[iu, iu] = rho * vel[a] * np.eye(3)
            out[iu, ith] = pt * e
            out[ith, iu] = pt * e
            out[ith, ith] = rho * thermo.de_theta(rho, theta) / theta * vel[a]
            mag = (np.outer(e, bf) - bf[a] * np.eye(3)) / mu0
            out[iu, ib] = mag
            out[ib, iu] = mag.T
            out[ib, ib] = vel[a] / mu0 * np.eye(3)
            return out
        return mat

    def y_ab(a, b):
        def mat(u):
            rho, theta = u[0], u[4]
            m, lm = _value(tr.mu, rho, theta), _value(tr.lam, rho, theta)
            kk, sg = _value(tr.k, rho, theta), _value(tr.sigma, rho, theta)
            out = np.zeros((n, n))
            z = np.zeros((3, 3))
            if a == b:
                z += m * np.eye(3)
            z[b, a] += m
            z[a, b] += lm
            out[iu, iu] = z
            if a == b:
                out[ith, ith] = kk / theta
                out[ib, ib] = np.eye(3) / (mu0**2 * sg)
            return out
        return mat

    def admissible(u):
        return bool(u[0] > 0 and u[4] > 0)

    system = SymbolicSystem(
        d=3, n1=1, n2=7, uref=uref, s0=s0, s_alpha=[s_alpha(a) for a in range(3)],
        y=[[y_ab(a, b) for b in range(3)] for a in range(3)],
        domain_check=admissible, source_free=False, name="mhd",
    )
    object.__setattr__(system, "mhd_params", params)
    return system


def perturbation_samples(uref: np.ndarray, rel: float = 0.1, points: int = 3,
                         admissible: Callable[[np.ndarray], bool] | None = None,
                         max_samples: int = 4096) -> list[np.ndarray]:
    """Tensor grid of ``+-rel`` perturbations around ``uref``.

    Zero coordinates are perturbed by ``rel`` in absolute terms. Grids larger
    than ``max_samples`` are thinned deterministically.
    """
    uref = np.asarray(uref, dtype=float)
    offsets = np.linspace(-rel, rel, points)
    scale = np.where(uref != 0, np.abs(uref), 1.0)
    out = []
    for combo in itertools.product(offsets, repeat=len(uref)):
        u = uref + np.asarray(combo) * scale
        if admissible is None or admissible(u):
            out.append(u)
    if len(out) > max_samples:
        out = out[:: int(np.ceil(len(out) / max_samples))]
    return out


MODEL_REGISTRY: dict[str, Callable[..., SymbolicSystem]] = {
    "toy1d": make_toy1d,
    "ns-baro": make_barotropic_ns,
    "mhd": make_mhd,
    "heat": make_heat,
}


def build_model(key: str, **kwargs) -> SymbolicSystem:
    """Construct a registered model by key.

    Raises:
        ModelUnknown: ``key`` is not registered.
    """
    try:
        factory = MODEL_REGISTRY[key]
    except KeyError:
        raise ModelUnknown(f"unknown model '{key}'; known: {sorted(MODEL_REGISTRY)}") from None
    return factory(**kwargs)
