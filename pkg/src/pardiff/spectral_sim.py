"""Mode-wise exact evolution of linearized systems and the functionals tracked along it.

Every Fourier mode ``xi = rho omega`` evolves by ``V(t) = exp(-t K(xi)) V(0)``
with ``K(xi) = S0^-1 (i sum S_a xi_a + sum Y_ab xi_a xi_b)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .errors import (AssumptionFailure, BlowupDetected, CflViolation, DegenerateWindow, SingularZ,
                     SystemShapeError)
from .littlewood_paley import (SpectralField, besov_norm_hybrid, block_multiplier, block_norms,
                               block_range, j_min, residual_norm)
from .lyapunov import (LinearForm, LyapunovParams, interaction_matrix, spectral_decay_rates, weight)
from .symbols import (SymbolicSystem, check_assumption_D, generator_batch, s2_batch, sphere_samples,
                      z_batch)

logger = logging.getLogger(__name__)

COND_LIMIT = 1e4


@dataclass(frozen=True)
class Trajectory:
    """Fields sampled at increasing times."""

    times: np.ndarray
    fields: tuple

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self):
        return iter(zip(self.times, self.fields))


def _directions(fld: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions (zero at the origin) and radii per mode."""
    rho = fld.radius
    safe = np.where(rho > 0, rho, 1.0)
    omega = fld.xi / safe[..., None]
    return omega, rho


def _symmetrize(coeffs: np.ndarray, d: int) -> np.ndarray:
    flipped = coeffs
    for ax in range(1, d + 1):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    return 0.5 * (coeffs + flipped.conj())


class ModePropagator:
    """Cached per-mode decomposition of ``exp(-t K(xi))`` for a grid.

    Modes whose eigenvector matrix has condition number above ``COND_LIMIT``
    use scaling-and-squaring instead of the eigendecomposition.
    """

    def __init__(self, system: SymbolicSystem, template: SpectralField):
        self.system = system
        self.shape = template.grid
        xi = template.xi.reshape(-1, system.d)
        self.k = generator_batch(system, xi)
        lam, vecs = np.linalg.eig(self.k)
        cond = np.linalg.cond(vecs)
        self.robust = ~np.isfinite(cond) | (cond > COND_LIMIT)
        self.lam, self.vecs = lam, vecs
        good = ~self.robust
        self.inv = np.zeros_like(vecs)
        self.inv[good] = np.linalg.inv(vecs[good])
        logger.debug("propagator: %d modes, %d via expm", len(xi), int(self.robust.sum()))

    def apply(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        """Propagate coefficients of shape ``(n, *grid)`` by time ``t``."""
        n = coeffs.shape[0]
        v = coeffs.reshape(n, -1).T
        out = np.empty_like(v)
        good = ~self.robust
        a = np.einsum("mij,mj->mi", self.inv[good], v[good])
        out[good] = np.einsum("mij,mj->mi", self.vecs[good], np.exp(-t * self.lam[good]) * a)
        if self.robust.any():
            prop = sla.expm(-t * self.k[self.robust])
            out[self.robust] = np.einsum("mij,mj->mi", prop, v[self.robust])
        return out.T.reshape(coeffs.shape)

    def derivative(self, coeffs: np.ndarray) -> np.ndarray:
        """``dV/dt = -K V`` mode by mode."""
        n = coeffs.shape[0]
        v = coeffs.reshape(n, -1).T
        return -np.einsum("mij,mj->mi", self.k, v).T.reshape(coeffs.shape)


def _check_field(system: SymbolicSystem, fld: SpectralField) -> None:
    if fld.d != system.d or fld.n_comp != system.n:
        raise SystemShapeError(f"field has d={fld.d}, n_comp={fld.n_comp}; system has d={system.d}, n={system.n}")


def evolve_linear(system: SymbolicSystem, field0: SpectralField, times: Sequence[float],
                  check: bool = True, propagator: ModePropagator | None = None) -> Trajectory:
    """Exact linear evolution sampled at ``times``.

    Raises:
        AssumptionFailure: the normal-form checks fail at the reference state.
        SystemShapeError: the field does not match the system.
    """
    _check_field(system, field0)
    if check:
        report = check_assumption_D(system)
        if not report.passed:
            raise AssumptionFailure(f"normal form fails: {[i.name for i in report.failures()]}")
    prop = propagator or ModePropagator(system, field0)
    fields = []
    for t in times:
        coeffs = prop.apply(field0.coeffs, float(t))
        if field0.real:
            coeffs = _symmetrize(coeffs, field0.d)
        fields.append(field0.with_coeffs(coeffs))
    return Trajectory(np.asarray(times, dtype=float), tuple(fields))


def _z_inverse(system: SymbolicSystem, omega: np.ndarray) -> np.ndarray:
    z = z_batch(system, omega)
    if np.any(np.linalg.cond(z) > 1e12):
        raise SingularZ("Z(omega) is singular for some direction")
    return np.linalg.inv(z)


def _parabolic_parts(system: SymbolicSystem, fld: SpectralField):
    """Flattened directions, radii, ``Z^-1``, ``[S21 S22]`` and the nonzero-mode mask."""
    omega, rho = _directions(fld)
    omega, rho = omega.reshape(-1, system.d), rho.reshape(-1)
    nz = rho > 0
    om = np.where(nz[:, None], omega, np.eye(system.d)[0])
    return om, rho, _z_inverse(system, om), s2_batch(system, om), nz


def parabolic_mode_field(system: SymbolicSystem, fld: SpectralField) -> SpectralField:
    """``W = i rho^-1 Z(omega)^-1 (S21 V1 + S22 V2) + V2``; at the origin ``W = V2``.

    Raises:
        SingularZ: ``Z(omega)`` is singular for some mode direction.
    """
    _check_field(system, fld)
    n1, n = system.n1, system.n
    _, rho, zinv, s2, nz = _parabolic_parts(system, fld)
    v = fld.coeffs.reshape(n, -1).T
    x = np.einsum("mij,mj->mi", s2, v)
    corr = np.zeros((v.shape[0], system.n2), dtype=complex)
    corr[nz] = 1j / rho[nz, None] * np.einsum("mij,mj->mi", zinv[nz], x[nz])
    w = corr + v[:, n1:]
    return fld.with_coeffs(w.T.reshape((system.n2, *fld.grid)))


def parabolic_block_constant(system: SymbolicSystem, directions: np.ndarray | None = None) -> float:
    """``1 + (4/3) max_omega ||Z(omega)^-1|| ||[S21 S22](omega)||``."""
    om = sphere_samples(system.d) if directions is None else directions
    zinv = np.linalg.inv(z_batch(system, om))
    s2 = s2_batch(system, om)
    return 1.0 + 4.0 / 3.0 * float(np.max(np.linalg.norm(zinv, 2, axis=(1, 2)) * np.linalg.norm(s2, 2, axis=(1, 2))))


def parabolic_residual(system: SymbolicSystem, trajectory: Trajectory,
                       propagator: ModePropagator | None = None) -> np.ndarray:
    """Max modulus over modes of the parabolic-equation residual, per sample time.

    The residual is ``S0_22 dW/dt + rho^2 Z W - i rho^-1 S0_22 Z^-1 d/dt(S21 V1 + S22 V2)``
    with time derivatives taken from the mode generator.
    """
    if not len(trajectory):
        return np.zeros(0)
    first = trajectory.fields[0]
    n1, n = system.n1, system.n
    prop = propagator or ModePropagator(system, first)
    _, rho, zinv, s2, nz = _parabolic_parts(system, first)
    z = z_batch(system, _directions(first)[0].reshape(-1, system.d))
    s0_22 = system.frozen[0][n1:, n1:]
    out = []
    for fld in trajectory.fields:
        dv = prop.derivative(fld.coeffs).reshape(n, -1).T
        w = parabolic_mode_field(system, fld).coeffs.reshape(system.n2, -1).T
        dx = np.einsum("mij,mj->mi", s2, dv)
        corr_dt = np.zeros_like(w)
        corr_dt[nz] = 1j / rho[nz, None] * np.einsum("mij,mj->mi", zinv[nz], dx[nz])
        dw = corr_dt + dv[:, n1:]
        res = np.einsum("ij,mj->mi", s0_22, dw) + rho[:, None] ** 2 * np.einsum("mij,mj->mi", z, w)
        res = res - np.einsum("ij,mj->mi", s0_22, corr_dt)
        res[~nz] = np.einsum("ij,mj->mi", s0_22, dv[~nz, n1:])
        out.append(float(np.max(np.abs(res))) if res.size else 0.0)
    return np.array(out)


@dataclass
class FunctionalTable:
    """Norms and the combined functional per sample time."""

    times: np.ndarray
    columns: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        keys = list(self.columns)
        return [{"time": float(t), **{k: float(self.columns[k][i]) for k in keys}}
                for i, t in enumerate(self.times)]


class BlockFunctionals:
    """Evaluates the block functionals on fields of a fixed grid.

    Low blocks use the full functional at radius ``2^j``; high blocks use the
    first-block reduction at radius ``2^j`` together with ``||Delta_j W||``.
    """

    def __init__(self, system: SymbolicSystem, template: SpectralField, params: LyapunovParams,
                 reduced_params: LyapunovParams | None = None, split_j: int = 0):
        self.system, self.params, self.reduced_params = system, params, reduced_params
        self.split_j = split_j
        self.template = template
        omega, rho = _directions(template)
        om = omega.reshape(-1, system.d)
        nz = rho.reshape(-1) > 0
        om = np.where(nz[:, None], om, np.eye(system.d)[0])
        s0, s_alpha, y = system.frozen
        a_mat = 1j * np.einsum("ma,aij->mij", om, s_alpha)
        b_mat = np.einsum("ma,mb,abij->mij", om, om, y).astype(complex)
        s0_inv = system.s0_inv
        n_mat = np.einsum("ik,mkj->mij", s0_inv, a_mat)
        m_scaled = params.kappa * np.einsum("ik,mkj->mij", s0_inv, b_mat)
        self.s0 = s0
        self.imat = interaction_matrix(n_mat, m_scaled, params.epsilons)
        self.blocks = list(block_range(template))
        n1 = system.n1
        self.has_reduced = bool(n1 and system.n2 and reduced_params is not None)
        if self.has_reduced:
            s11 = s0[:n1, :n1]
            nred = 1j * np.einsum("ma,aij->mij", om, s_alpha[:, :n1, :n1])
            nred = np.einsum("ik,mkj->mij", np.linalg.inv(s11), nred)
            zinv = np.linalg.inv(z_batch(system, om))
            s21 = s2_batch(system, om)[:, :, :n1]
            mred = np.einsum("ik,mlk,mlj->mij", np.linalg.inv(s11), s21, np.einsum("mij,mjk->mik", zinv, s21))
            self.s11 = s11
            self.imat_red = interaction_matrix(nred, reduced_params.kappa * mred, reduced_params.epsilons)
        self.multipliers = {j: block_multiplier(template, j).reshape(-1) ** 2 for j in self.blocks}

    def _quadratic(self, mat_const: np.ndarray, mat_modes: np.ndarray, w: float, v: np.ndarray) -> np.ndarray:
        q = np.einsum("mi,ij,mj->m", v.conj(), mat_const, v).real
        q += w * np.einsum("mi,mij,mj->m", v.conj(), mat_modes, v).real
        return q

    def evaluate(self, fld: SpectralField, w_field: SpectralField | None = None) -> dict:
        system, d = self.system, self.system.d
        v = fld.coeffs.reshape(system.n, -1).T
        measure = fld.measure
        low_terms, high_terms = [], []
        q_cache = {}
        for j in self.blocks:
            mult = self.multipliers[j]
            rho_j = 2.0**j
            if j <= self.split_j:
                key = ("l", j)
                w = float(weight(rho_j, self.params.a, self.params.b, self.params.kappa))
                q = self._quadratic(self.s0, self.imat, w, v)
                lj = measure * float(np.sum(mult * q))
                q_cache[key] = lj
                low_terms.append(2.0 ** (j * (d / 2 - 1)) * math.sqrt(max(lj, 0.0)))
            else:
                term = 0.0
                if self.has_reduced:
                    rp = self.reduced_params
                    w = float(weight(rho_j, rp.a, rp.b, rp.kappa))
                    q = self._quadratic(self.s11, self.imat_red, w, v[:, : system.n1])
                    lj = measure * float(np.sum(mult * q))
                    term += 2.0 ** (j * (d / 2 + 1)) * math.sqrt(max(lj, 0.0))
                if w_field is not None:
                    pw = np.sum(np.abs(w_field.coeffs.reshape(system.n2, -1)) ** 2, axis=0)
                    term += 2.0 ** (j * d / 2) * math.sqrt(measure * float(np.sum(mult * pw)))
                high_terms.append(term)
        return {"functional": math.fsum(low_terms) + math.fsum(high_terms),
                "functional_low": math.fsum(low_terms), "functional_high": math.fsum(high_terms)}


def _component_field(fld: SpectralField, sl: slice) -> SpectralField:
    return fld.with_coeffs(fld.coeffs[sl])


def functional_time_series(system: SymbolicSystem, trajectory: Trajectory, params: LyapunovParams,
                           split_j: int = 0, reduced_params: LyapunovParams | None = None) -> FunctionalTable:
    """Hybrid norms and the combined functional along a trajectory.

    Columns: ``V_low`` (``B^{d/2-1}`` low part of ``V``), ``V1_high``
    (``B^{d/2+1}`` high part of ``V1``), ``V2_high`` and ``W_high``
    (``B^{d/2}`` high parts), ``functional`` and its low/high pieces.
    """
    table = FunctionalTable(np.asarray(trajectory.times, dtype=float))
    if not len(trajectory):
        return table
    d, n1 = system.d, system.n1
    evaluator = BlockFunctionals(system, trajectory.fields[0], params, reduced_params, split_j)
    cols: dict[str, list] = {k: [] for k in ("V_low", "V1_high", "V2_high", "W_high",
                                             "functional", "functional_low", "functional_high")}
    for fld in trajectory.fields:
        w = parabolic_mode_field(system, fld) if system.n2 else None
        cols["V_low"].append(besov_norm_hybrid(fld, d / 2 - 1, d / 2 - 1, 1, split_j).low)
        cols["V1_high"].append(besov_norm_hybrid(_component_field(fld, slice(0, n1)), 0, d / 2 + 1, 1, split_j).high
                               if n1 else 0.0)
        cols["V2_high"].append(besov_norm_hybrid(_component_field(fld, slice(n1, None)), 0, d / 2, 1, split_j).high
                               if system.n2 else 0.0)
        cols["W_high"].append(besov_norm_hybrid(w, 0, d / 2, 1, split_j).high if w is not None else 0.0)
        for key, val in evaluator.evaluate(fld, w).items():
            cols[key].append(val)
    table.columns = {k: np.array(v) for k, v in cols.items()}
    return table


@dataclass(frozen=True)
class DecayFit:
    """Least-squares power-law fit ``value ~ t^exponent``."""

    exponent: float
    stderr: float
    n_points: int
    window: tuple


def fit_decay_exponent(norm_series, window: Sequence[float]) -> DecayFit:
    """Slope of ``log(value)`` against ``log(t)`` over ``window``.

    Args:
        norm_series: Pairs ``(t, value)`` or a two-row array.
        window: ``(t_lo, t_hi)``.

    Raises:
        DegenerateWindow: fewer than three samples in the window, or a sample
            with nonpositive time or value.
    """
    data = np.asarray(norm_series, dtype=float)
    if data.ndim != 2:
        raise DegenerateWindow("series must be a list of (t, value) pairs")
    if data.shape[0] == 2 and data.shape[1] != 2:
        data = data.T
    t, v = data[:, 0], data[:, 1]
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise DegenerateWindow(f"empty window [{lo}, {hi}]")
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    if sel.sum() < 3:
        raise DegenerateWindow(f"only {int(sel.sum())} samples in [{lo}, {hi}]")
    if np.any(t[sel] <= 0) or np.any(v[sel] <= 0):
        raise DegenerateWindow("times and values must be positive inside the window")
    res = stats.linregress(np.log(t[sel]), np.log(v[sel]))
    return DecayFit(float(res.slope), float(res.stderr), int(sel.sum()), (lo, hi))


def decay_window(system: SymbolicSystem, box_length: float, octaves: int = 3,
                 directions: np.ndarray | None = None) -> tuple[float, float]:
    """Fit window ``[T/4, T]`` with ``T = 2 / rate(2^octaves / L)``.

    ``rate`` is the smallest decay rate over sampled directions, so by time
    ``T`` the mode ``2^octaves`` lattice steps above the lowest has decayed by
    at least ``e^2`` while the diffusion length stays well inside the box.
    """
    om = sphere_samples(system.d) if directions is None else directions
    rho = 2.0**octaves / box_length
    rate = min(float(spectral_decay_rates(system, o, [rho])[0]) for o in om)
    if rate <= 0:
        raise DegenerateWindow("nonpositive decay rate; no finite window")
    t_hi = 2.0 / rate
    return t_hi / 4.0, t_hi


@dataclass
class DecayReport:
    """Fitted exponents with targets and residuals per norm."""

    fits: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    residual_fraction: float = 0.0

    def rows(self) -> list[dict]:
        out = []
        for name, fit in self.fits.items():
            target = self.targets.get(name, float("nan"))
            out.append({"norm": name, "exponent": fit.exponent, "stderr": fit.stderr,
                        "target": target, "residual": fit.exponent - target,
                        "t_lo": fit.window[0], "t_hi": fit.window[1], "n_points": fit.n_points})
        return out


def low_frequency_decay(system: SymbolicSystem, field0: SpectralField, n_times: int = 25,
                        octaves: int = 3, sigma1: float = 1.0, sigma: float = 0.0,
                        window: tuple | None = None) -> tuple[DecayReport, Trajectory, np.ndarray]:
    """Fit the decay of the ``B^{sigma}`` low-frequency norm of ``V`` on the default window.

    Returns the report, the trajectory on log-spaced times and the norm series.
    """
    lo, hi = decay_window(system, field0.box_length, octaves) if window is None else window
    times = np.geomspace(lo, hi, n_times)
    traj = evolve_linear(system, field0, times)
    values = np.array([besov_norm_hybrid(f, sigma, sigma, 1, 0).low for f in traj.fields])
    fit = fit_decay_exponent(np.column_stack([times, values]), (lo, hi))
    initial = besov_norm_hybrid(field0, sigma, sigma, 1, 0).low
    report = DecayReport({f"V_low_B{sigma:g}": fit}, {f"V_low_B{sigma:g}": -(sigma1 + sigma) / 2},
                         residual_norm(field0) / max(initial, 1e-300))
    return report, traj, values


def initial_data(kind: str, system: SymbolicSystem, box_length: float, grid: int | Sequence[int],
                 seed: int = 0, **opts) -> SpectralField:
    """Named initial-data presets.

    ``single-mode``: ``amplitude * cos(k.x / L)`` in ``component`` for integer
    ``wavevector``. ``gaussian``: ``exp(-|x - c|^2 / (2 width^2))`` times
    per-component ``amplitudes`` centred in the box. ``random-band``: random
    real field with frequencies ``kmin <= |xi| <= kmax`` scaled to ``L^2``
    norm ``amplitude``. ``zero``: the zero field.
    """
    d, n = system.d, system.n
    grid = (int(grid),) * d if isinstance(grid, (int, np.integer)) else tuple(int(g) for g in grid)
    template = SpectralField.zeros(d, n, box_length, grid)
    pts = template.physical_points()
    if kind == "zero":
        return template
    if kind == "single-mode":
        k = np.asarray(opts.get("wavevector", [1] + [0] * (d - 1)), dtype=float)
        comp = int(opts.get("component", 0))
        phase = sum(k[a] * pts[a] for a in range(d)) / box_length
        vals = np.zeros((n, *grid))
        vals[comp] = float(opts.get("amplitude", 1.0)) * np.cos(phase)
        return SpectralField.from_physical(vals, box_length)
    if kind == "gaussian":
        width = float(opts.get("width", 2.0))
        amps = np.asarray(opts.get("amplitudes", [1.0] * n), dtype=float)
        centre = np.pi * box_length
        r2 = sum((p - centre) ** 2 for p in pts)
        g = np.exp(-r2 / (2 * width**2))
        return SpectralField.from_physical(amps.reshape((n,) + (1,) * d) * g, box_length)
    if kind == "random-band":
        rng = np.random.default_rng(seed)
        kmin, kmax = float(opts.get("kmin", 0.0)), float(opts.get("kmax", np.inf))
        vals = rng.standard_normal((n, *grid))
        fld = SpectralField.from_physical(vals, box_length)
        mask = (fld.radius >= kmin) & (fld.radius <= kmax) & (fld.radius > 0)
        fld = fld.with_coeffs(fld.coeffs * mask)
        norm = fld.l2_norm()
        amp = float(opts.get("amplitude", 1.0))
        return fld.scaled(amp / norm) if norm > 0 else fld
    raise ValueError(f"unknown initial data preset '{kind}'")


@dataclass
class NonlinearResult:
    """Output of :func:`evolve_nonlinear_ns`."""

    trajectory: Trajectory
    functional: np.ndarray
    bounded: bool
    steps: int
    dt: float


def _dealias_mask(fld: SpectralField) -> np.ndarray:
    mask = np.ones(fld.grid, dtype=bool)
    k = fld.wavenumbers
    for a, g in enumerate(fld.grid):
        mask &= np.abs(k[..., a]) < g / 3.0
    return mask


def evolve_nonlinear_ns(system: SymbolicSystem, field0: SpectralField, times: Sequence[float],
                        dt: float | None = None, cfl: float = 0.5, growth_limit: float = 10.0,
                        bound_factor: float = 2.0, params: LyapunovParams | None = None,
                        reduced_params: LyapunovParams | None = None) -> NonlinearResult:
    """Pseudo-spectral semi-implicit run of barotropic Navier-Stokes (demonstration only).

    Diffusion at the reference density is treated by Crank-Nicolson; transport,
    pressure and the density-dependent remainder of the viscous term are
    explicit (Heun) with 2/3 dealiasing. The state is ``(rho - rho_ref, u)``.

    Raises:
        CflViolation: ``dt`` exceeds ``cfl`` times the acoustic-advective limit.
        BlowupDetected: the ``L^2`` norm grows beyond ``growth_limit`` times
            its initial value.
    """
    ns = getattr(system, "ns_params", None)
    if ns is None or system.d not in (1, 2):
        raise SystemShapeError("nonlinear runs need a barotropic Navier-Stokes model with d in {1, 2}")
    _check_field(system, field0)
    d, rho_ref = system.d, ns.rho_ref
    mu = float(ns.mu(rho_ref)) if callable(ns.mu) else float(ns.mu)
    lam = float(ns.lam(rho_ref)) if callable(ns.lam) else float(ns.lam)
    xi = field0.xi
    r2 = field0.radius**2
    safe = np.where(r2 > 0, r2, 1.0)
    mask = _dealias_mask(field0)
    dx = 2 * np.pi * field0.box_length / max(field0.grid)
    times = np.asarray(times, dtype=float)
    u0 = field0.to_physical()
    speed = np.sqrt(ns.dpressure(rho_ref + float(np.max(np.abs(u0[0]))))) + float(np.max(np.abs(u0[1:])))
    limit = cfl * dx / speed
    if dt is None:
        dt = limit
    elif dt > limit * (1 + 1e-12):
        raise CflViolation(f"dt={dt:.4g} exceeds the limit {limit:.4g}")

    def grad(c):
        return np.stack([np.real(np.fft.ifftn(1j * xi[..., a] * c) * c.size) for a in range(d)])

    def to_phys(c):
        return np.real(np.fft.ifftn(c) * c.size)

    def to_spec(v):
        return np.fft.fftn(v) / v.size * mask

    def explicit(state):
        a_hat, u_hat = state[0], state[1:]
        a, u = to_phys(a_hat), np.stack([to_phys(c) for c in u_hat])
        rho = rho_ref + a
        grad_a = grad(a_hat)
        div_u = np.real(np.fft.ifftn(sum(1j * xi[..., b] * u_hat[b] for b in range(d))) * a_hat.size)
        out = np.empty_like(state)
        out[0] = to_spec(-(sum(u[b] * grad_a[b] for b in range(d)) + rho * div_u))
        # viscous term at reference density is implicit; explicit part is the density correction
        lap = [-(mu * r2 * u_hat[i] + (mu + lam) * xi[..., i] * sum(xi[..., b] * u_hat[b] for b in range(d)))
               for i in range(d)]
        visc = np.stack([to_phys(c) for c in lap])
        grads_u = [grad(u_hat[i]) for i in range(d)]
        dp = ns.dpressure
        for i in range(d):
            adv = sum(u[b] * grads_u[i][b] for b in range(d))
            pres = dp(rho) * grad_a[i] / rho
            corr = (1.0 / rho - 1.0 / rho_ref) * visc[i]
            out[1 + i] = to_spec(-adv - pres + corr)
        return out

    def implicit_solve(rhs, h):
        """Solve ``(I - h L) x = rhs`` with ``L`` the reference viscous operator on velocity."""
        out = rhs.copy()
        u_hat = rhs[1:]
        par = sum(xi[..., b] * u_hat[b] for b in range(d)) / safe
        nu = 2 * mu + lam
        f_par = 1.0 / (1.0 + h * nu * r2 / rho_ref)
        f_perp = 1.0 / (1.0 + h * mu * r2 / rho_ref)
        for i in range(d):
            along = xi[..., i] * par
            out[1 + i] = f_par * along + f_perp * (u_hat[i] - along)
        return out

    def apply_l(state):
        out = np.zeros_like(state)
        u_hat = state[1:]
        div = sum(xi[..., b] * u_hat[b] for b in range(d))
        for i in range(d):
            out[1 + i] = -(mu * r2 * u_hat[i] + (mu + lam) * xi[..., i] * div) / rho_ref
        return out

    state = field0.coeffs.copy() * mask
    norm0 = field0.l2_norm()
    fields, t, steps = [], 0.0, 0
    for target in times:
        while t < target - 1e-14:
            h = min(dt, target - t)
            f0 = explicit(state)
            lhalf = state + 0.5 * h * apply_l(state)
            pred = implicit_solve(lhalf + h * f0, 0.5 * h)
            f1 = explicit(pred)
            state = implicit_solve(lhalf + 0.5 * h * (f0 + f1), 0.5 * h)
            t += h
            steps += 1
            norm = float(np.sqrt(field0.measure * np.sum(np.abs(state) ** 2)))
            if not np.isfinite(norm) or (norm0 > 0 and norm > growth_limit * norm0):
                raise BlowupDetected(f"norm {norm:.4g} exceeds {growth_limit} x initial {norm0:.4g} at t={t:.4g}")
        fields.append(field0.with_coeffs(_symmetrize(state, d), True))
    traj = Trajectory(times, tuple(fields))
    functional = np.zeros(len(times))
    bounded = True
    if params is not None:
        table = functional_time_series(system, Trajectory(np.concatenate([[0.0], times]), (field0,) + traj.fields),
                                       params, 0, reduced_params)
        values = table.columns["functional"]
        functional = values[1:]
        bounded = bool(np.all(values[1:] <= bound_factor * values[0] + 1e-14))
    return NonlinearResult(traj, functional, bounded, steps, dt)
