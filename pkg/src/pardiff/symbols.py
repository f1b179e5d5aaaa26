"""System descriptions and their frozen-coefficient Fourier symbols.

A system is written in the block-symmetrized form

    S0(U) dU/dt + sum_a S_a(U) d_a U - sum_{a,b} d_a (Y_ab(U) d_b U) = f

with state ``U = (U1, U2)`` of sizes ``n1`` and ``n2``. Linearizing at a
reference state and taking the Fourier transform with ``xi = rho * omega``
gives ``S0 dV/dt + (rho A_omega + rho^2 B_omega) V = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DomainViolation, NonUnitDirection, SingularS0, SingularZ, SystemShapeError

logger = logging.getLogger(__name__)

MatrixMap = Callable[[np.ndarray], np.ndarray]


def _always_admissible(u: np.ndarray) -> bool:
    return True


@dataclass(frozen=True, eq=False)
class SymbolicSystem:
    """Coefficient matrices of a partially diffusive symmetric system.

    Attributes:
        d: Spatial dimension.
        n1: Size of the non-diffusive block.
        n2: Size of the diffusive block.
        uref: Reference state, length ``n1 + n2``.
        s0: Map ``U -> S0(U)``.
        s_alpha: ``d`` maps ``U -> S_a(U)``.
        y: ``d x d`` nested list of maps ``U -> Y_ab(U)``.
        domain_check: Membership test for the admissible state set.
        source_free: True when the nonlinear source vanishes identically.
        name: Label used in reports.
    """

    d: int
    n1: int
    n2: int
    uref: np.ndarray
    s0: MatrixMap
    s_alpha: Sequence[MatrixMap]
    y: Sequence[Sequence[MatrixMap]]
    domain_check: Callable[[np.ndarray], bool] = _always_admissible
    source_free: bool = True
    name: str = "system"

    def __post_init__(self):
        object.__setattr__(self, "uref", np.asarray(self.uref, dtype=float).copy())
        if self.d < 1 or self.n1 < 0 or self.n2 < 0 or self.n < 1:
            raise SystemShapeError(f"bad dimensions d={self.d}, n1={self.n1}, n2={self.n2}")
        if self.uref.shape != (self.n,):
            raise SystemShapeError(f"uref has shape {self.uref.shape}, expected ({self.n},)")
        if len(self.s_alpha) != self.d:
            raise SystemShapeError(f"expected {self.d} convection maps, got {len(self.s_alpha)}")
        if len(self.y) != self.d or any(len(row) != self.d for row in self.y):
            raise SystemShapeError("diffusion maps must form a d x d array")
        if not self.domain_check(self.uref):
            raise DomainViolation("reference state is outside the admissible set")
        for name, mat in self._evaluate_all(self.uref).items():
            if mat.shape[-2:] != (self.n, self.n):
                raise SystemShapeError(f"{name} returned shape {mat.shape}, expected n x n")

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def _evaluate_all(self, u: np.ndarray) -> dict[str, np.ndarray]:
        out = {"s0": np.asarray(self.s0(u), dtype=float)}
        out["s_alpha"] = np.array([np.asarray(s(u), dtype=float) for s in self.s_alpha])
        out["y"] = np.array([[np.asarray(m(u), dtype=float) for m in row] for row in self.y])
        return out

    def matrices_at(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(S0, S_alpha[d], Y[d, d])`` evaluated at state ``u``."""
        m = self._evaluate_all(np.asarray(u, dtype=float))
        return m["s0"], m["s_alpha"], m["y"]

    @cached_property
    def frozen(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Matrices at the reference state, computed once."""
        return self.matrices_at(self.uref)

    @cached_property
    def s0_inv(self) -> np.ndarray:
        s0 = self.frozen[0]
        if np.linalg.cond(s0) > 1e12:
            raise SingularS0("S0 at the reference state is singular")
        return np.linalg.inv(s0)


@dataclass(frozen=True)
class FrequencySymbol:
    """Frozen-coefficient symbol data at a unit direction ``omega``."""

    omega: np.ndarray
    s0: np.ndarray
    a_omega: np.ndarray
    b_omega: np.ndarray
    n_omega: np.ndarray
    m_omega: np.ndarray
    s11: np.ndarray
    s21: np.ndarray
    s22: np.ndarray
    s12: np.ndarray
    z_omega: np.ndarray
    nred: np.ndarray
    mred: np.ndarray
    n1: int
    n2: int


def check_unit(omega: np.ndarray, d: int | None = None) -> np.ndarray:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if d is not None and omega.shape != (d,):
        raise NonUnitDirection(f"direction has shape {omega.shape}, expected ({d},)")
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise NonUnitDirection(f"|omega| = {np.linalg.norm(omega):.15g}")
    return omega


def _solve_checked(mat: np.ndarray, rhs: np.ndarray, err: type, what: str) -> np.ndarray:
    if mat.size == 0:
        return np.zeros((0,) + rhs.shape[1:], dtype=np.result_type(mat, rhs))
    if np.linalg.cond(mat) > 1e12:
        raise err(f"{what} is singular")
    return np.linalg.solve(mat, rhs)


def evaluate_symbols(system: SymbolicSystem, omega: np.ndarray) -> FrequencySymbol:
    """Evaluate all frequency symbols at the reference state and direction ``omega``.

    Raises:
        NonUnitDirection: ``omega`` is not a unit vector of length ``d``.
        SingularS0: S0 at the reference state is singular.
        SingularZ: the diffusive block Z(omega) is singular.
    """
    omega = check_unit(omega, system.d)
    n1 = system.n1
    s0, s_alpha, y = system.frozen
    ssum = np.einsum("a,aij->ij", omega, s_alpha)
    a_omega = 1j * ssum
    b_omega = np.einsum("a,b,abij->ij", omega, omega, y)
    n_omega = _solve_checked(s0, a_omega, SingularS0, "S0")
    m_omega = _solve_checked(s0, b_omega.astype(complex), SingularS0, "S0")
    s11, s12 = ssum[:n1, :n1], ssum[:n1, n1:]
    s21, s22 = ssum[n1:, :n1], ssum[n1:, n1:]
    z = b_omega[n1:, n1:]
    s0_11 = s0[:n1, :n1]
    nred = 1j * _solve_checked(s0_11, s11.astype(complex), SingularS0, "S0_11")
    if n1 and system.n2:
        zinv_s21 = _solve_checked(z, s21, SingularZ, "Z(omega)")
        mred = _solve_checked(s0_11, s12 @ zinv_s21, SingularS0, "S0_11").astype(complex)
    else:
        if system.n2:
            _solve_checked(z, np.eye(system.n2), SingularZ, "Z(omega)")
        mred = np.zeros((n1, n1), dtype=complex)
    return FrequencySymbol(
        omega=omega, s0=s0, a_omega=a_omega, b_omega=b_omega, n_omega=n_omega, m_omega=m_omega,
        s11=s11, s21=s21, s22=s22, s12=s12, z_omega=z, nred=nred, mred=mred,
        n1=n1, n2=system.n2,
    )


def generator_batch(system: SymbolicSystem, xi: np.ndarray) -> np.ndarray:
    """Mode generators ``K(xi) = S0^-1 (i sum S_a xi_a + sum Y_ab xi_a xi_b)``.

    Args:
        system: The system.
        xi: Frequencies with shape ``(..., d)``.

    Returns:
        Complex array of shape ``(..., n, n)`` so that ``dV/dt = -K V``.
    """
    s0, s_alpha, y = system.frozen
    xi = np.asarray(xi, dtype=float)
    sym = 1j * np.einsum("...a,aij->...ij", xi, s_alpha)
    sym = sym + np.einsum("...a,...b,abij->...ij", xi, xi, y)
    return np.einsum("ik,...kj->...ij", system.s0_inv, sym)


def z_batch(system: SymbolicSystem, omega: np.ndarray) -> np.ndarray:
    """Diffusive blocks Z(omega) for directions of shape ``(..., d)``."""
    y = system.frozen[2][:, :, system.n1:, system.n1:]
    return np.einsum("...a,...b,abij->...ij", omega, omega, y)


def s2_batch(system: SymbolicSystem, omega: np.ndarray) -> np.ndarray:
    """Rows ``[S21(omega) S22(omega)]`` for directions of shape ``(..., d)``."""
    s_alpha = system.frozen[1][:, system.n1:, :]
    return np.einsum("...a,aij->...ij", omega, s_alpha)


def sphere_samples(d: int, count: int | None = None) -> np.ndarray:
    """Deterministic near-uniform unit directions.

    ``d=1`` gives ``{-1, +1}``, ``d=2`` equally spaced angles (default 64) and
    ``d=3`` a Fibonacci lattice (default 256). Other dimensions use normalized
    Gaussian draws from a fixed seed.
    """
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        count = 64 if count is None else count
        theta = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if d == 3:
        count = 256 if count is None else count
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z**2)
        phi = np.pi * (3 - np.sqrt(5)) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    count = 256 if count is None else count
    pts = np.random.default_rng(0).standard_normal((count, d))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass
class CheckItem:
    """Outcome of one structural check."""

    name: str
    passed: bool
    value: float = 0.0
    detail: str = ""


@dataclass
class AssumptionReport:
    """Collection of check items with an overall verdict."""

    items: list[CheckItem] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def failures(self) -> list[CheckItem]:
        return [item for item in self.items if not item.passed]

    def add(self, name: str, passed: bool, value: float = 0.0, detail: str = "") -> None:
        self.items.append(CheckItem(name, bool(passed), float(value), detail))


def _asym(mat: np.ndarray) -> float:
    return float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0


def ellipticity_constant(system: SymbolicSystem, u: np.ndarray, directions: np.ndarray) -> float:
    """Minimum over sampled unit ``xi`` of ``lambda_min(sym Z(xi))`` at state ``u``."""
    if system.n2 == 0:
        return float("inf")
    _, _, y = system.matrices_at(u)
    z = np.einsum("ka,kb,abij->kij", directions, directions, y[:, :, system.n1:, system.n1:])
    zs = 0.5 * (z + np.swapaxes(z, 1, 2))
    return float(np.min(np.linalg.eigvalsh(zs)[:, 0]))


def check_assumption_D(
    system: SymbolicSystem,
    samples: Sequence[np.ndarray] | None = None,
    directions: np.ndarray | None = None,
    tol: float = 1e-10,
) -> AssumptionReport:
    """Check the normal-form structure at each state sample.

    Items per sample: D1 (S0 symmetric positive definite and block diagonal),
    D2 (each S_a symmetric), D3 (Y block form and strong ellipticity with
    constant ``c1 > tol``).

    Raises:
        DomainViolation: a sample is outside the admissible set.
    """
    samples = [system.uref] if samples is None else [np.asarray(s, dtype=float) for s in samples]
    directions = sphere_samples(system.d) if directions is None else np.asarray(directions)
    n1 = system.n1
    report = AssumptionReport()
    c1_values = []
    for idx, u in enumerate(samples):
        if not system.domain_check(u):
            raise DomainViolation(f"sample {idx} is outside the admissible set")
        s0, s_alpha, y = system.matrices_at(u)
        scale = max(1.0, float(np.max(np.abs(s0))))
        asym = _asym(s0)
        offblock = float(np.max(np.abs(s0[:n1, n1:]))) if n1 and system.n2 else 0.0
        eig_min = float(np.linalg.eigvalsh(0.5 * (s0 + s0.T))[0])
        ok = asym <= tol * scale and offblock <= tol * scale and eig_min > tol
        report.add(f"D1[{idx}]", ok, eig_min,
                   f"asymmetry={asym:.3g}, off-block={offblock:.3g}, min eig={eig_min:.6g}")
        for a in range(system.d):
            asym_a = _asym(s_alpha[a])
            report.add(f"D2[{idx}] alpha={a + 1}", asym_a <= tol * max(1.0, float(np.max(np.abs(s_alpha[a])))),
                       asym_a, f"asymmetry magnitude {asym_a:.6g}")
        block = y.copy()
        block[:, :, n1:, n1:] = 0.0
        leak = float(np.max(np.abs(block))) if block.size else 0.0
        c1 = ellipticity_constant(system, u, directions)
        c1_values.append(c1)
        report.add(f"D3[{idx}]", leak <= tol and c1 > tol, c1,
                   f"non-diffusive entries={leak:.3g}, c1={c1:.6g}")
    report.info["c1"] = min(c1_values) if c1_values else float("nan")
    report.info["c1_per_sample"] = c1_values
    return report


@dataclass(frozen=True)
class ProbeSpec:
    """Finite-difference probe settings for structural checks.

    Attributes:
        states: Base states to probe at (default: the reference state).
        rel_step: Central difference step relative to ``|U| + 1``.
        first_tol: Threshold on first-difference quotients.
        second_tol: Threshold on second-difference quotients.
    """

    states: tuple = ()
    rel_step: float = 1e-5
    first_tol: float = 1e-6
    second_tol: float = 1e-3


def _directions(idx: Sequence[int], n: int) -> list[np.ndarray]:
    out = []
    for i in idx:
        e = np.zeros(n)
        e[i] = 1.0
        out.append(e)
    for p, i in enumerate(idx):
        for j in idx[p + 1:]:
            e = np.zeros(n)
            e[i] = e[j] = 1.0 / np.sqrt(2.0)
            out.append(e)
    return out


def check_assumption_E(system: SymbolicSystem, probe: ProbeSpec | None = None) -> AssumptionReport:
    """Probe the affineness and independence structure numerically.

    E1: S0_11 constant and S0_22 independent of U2. E2: S_a11 affine in U2 and
    independent of U1, S_a21 independent of U2, S_a22 affine in U2. E3: Y
    independent of U2. E4: the model declares a vanishing source. Whether
    S0_11 is exactly the identity is recorded in ``info``.
    """
    probe = probe or ProbeSpec()
    states = [system.uref] if not probe.states else [np.asarray(s, dtype=float) for s in probe.states]
    n, n1 = system.n, system.n1
    dirs_1 = _directions(range(n1), n)
    dirs_2 = _directions(range(n1, n), n)
    report = AssumptionReport()

    def blocks(u):
        s0, s_a, y = system.matrices_at(u)
        return {
            "S0_11": s0[:n1, :n1], "S0_22": s0[n1:, n1:],
            "S_11": s_a[:, :n1, :n1], "S_21": s_a[:, n1:, :n1], "S_22": s_a[:, n1:, n1:],
            "Y": y,
        }

    def first(name, u, dirs, h):
        worst = 0.0
        for e in dirs:
            diff = (blocks(u + h * e)[name] - blocks(u - h * e)[name]) / (2 * h)
            worst = max(worst, float(np.max(np.abs(diff))) if diff.size else 0.0)
        return worst

    def second(name, u, dirs, h):
        worst = 0.0
        base = blocks(u)[name]
        for e in dirs:
            diff = (blocks(u + h * e)[name] - 2 * base + blocks(u - h * e)[name]) / h**2
            worst = max(worst, float(np.max(np.abs(diff))) if diff.size else 0.0)
        return worst

    e1_ok, e1_val, e2_ok, e2_val, e3_ok, e3_val = True, 0.0, True, 0.0, True, 0.0
    identity = True
    for u in states:
        h = probe.rel_step * (float(np.linalg.norm(u)) + 1.0)
        b = blocks(u)
        identity &= bool(np.allclose(b["S0_11"], np.eye(n1), atol=1e-12))
        vals = [first("S0_11", u, dirs_1 + dirs_2, h), first("S0_22", u, dirs_2, h)]
        e1_val = max(e1_val, *vals)
        e1_ok &= all(v <= probe.first_tol for v in vals)
        vals = [second("S_11", u, dirs_2, h), first("S_11", u, dirs_1, h),
                first("S_21", u, dirs_2, h), second("S_22", u, dirs_2, h)]
        e2_val = max(e2_val, *vals)
        e2_ok &= vals[0] <= probe.second_tol and vals[1] <= probe.first_tol
        e2_ok &= vals[2] <= probe.first_tol and vals[3] <= probe.second_tol
        v = first("Y", u, dirs_2, h)
        e3_val = max(e3_val, v)
        e3_ok &= v <= probe.first_tol
    report.add("E1", e1_ok, e1_val, "S0_11 constant, S0_22 independent of U2")
    report.add("E2", e2_ok, e2_val, "S11 affine in U2 and free of U1; S21 free of U2; S22 affine in U2")
    report.add("E3", e3_ok, e3_val, "Y independent of U2")
    report.add("E4", system.source_free, 0.0, "source term vanishes")
    report.info["s0_11_is_identity"] = identity
    return report
