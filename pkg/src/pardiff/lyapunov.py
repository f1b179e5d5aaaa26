"""Frequency-wise hypocoercive Lyapunov functionals and decay-rate envelopes.

Each mode obeys ``S dV/dt + (rho^a A + rho^b B) V = 0`` with ``A`` skew-Hermitian
and ``B`` accretive. Writing ``N = S^-1 A`` and ``M = kappa S^-1 B``, the
functional is ``L = V^* H V`` with

    H = S + w(rho) * sum_k eps_k Re[(M N^(k-1))^* (M N^k)],
    w(rho) = min(kappa rho^(a-b), 1 / (kappa rho^(a-b))).

Certification checks on a frequency grid that ``H`` is uniformly equivalent
to the identity and that ``HK + K^*H`` dominates ``min(rho^b/kappa,
kappa rho^(2a-b)) H`` where ``K = rho^a N + rho^b S^-1 B`` generates the flow.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .errors import InsufficientGrid, NoFeasibleEpsilons, NonPositiveRho, SkFails
from .kalman import kalman_rank_holds
from .symbols import FrequencySymbol, SymbolicSystem, evaluate_symbols, generator_batch

logger = logging.getLogger(__name__)


def default_rho_grid() -> np.ndarray:
    """61 log-spaced radii over ``[1e-3, 1e3]``."""
    return np.logspace(-3, 3, 61)


def herm(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, -1, -2).conj())


@dataclass(frozen=True)
class LinearForm:
    """One mode equation ``S dV/dt + (rho^a A + rho^b B) V = 0`` in a fixed direction."""

    s: np.ndarray
    a_mat: np.ndarray
    b_mat: np.ndarray
    a: int = 1
    b: int = 2

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def n_mat(self) -> np.ndarray:
        return np.linalg.solve(self.s, self.a_mat)

    @property
    def m_unscaled(self) -> np.ndarray:
        return np.linalg.solve(self.s, self.b_mat)

    def generator(self, rho: float) -> np.ndarray:
        return rho**self.a * self.n_mat + rho**self.b * self.m_unscaled

    @classmethod
    def from_symbol(cls, sym: FrequencySymbol, reduced: bool = False) -> "LinearForm":
        """Full system with ``(a, b) = (1, 2)`` or the first-block reduction with ``(1, 0)``."""
        if not reduced:
            return cls(sym.s0.astype(complex), sym.a_omega, sym.b_omega.astype(complex), 1, 2)
        n1 = sym.n1
        s11 = sym.s0[:n1, :n1].astype(complex)
        return cls(s11, s11 @ sym.nred, s11 @ sym.mred, 1, 0)


def positivity_scale(b_mat: np.ndarray) -> float:
    """Largest ``kappa`` with ``Re(B eta . eta) >= kappa |B eta|^2`` for all ``eta``."""
    b_mat = np.asarray(b_mat, dtype=complex)
    if not np.any(b_mat):
        return np.inf
    u, sv, vh = np.linalg.svd(b_mat)
    rank = int(np.sum(sv > sv[0] * 1e-12))
    basis = vh[:rank].conj().T
    num = basis.conj().T @ herm(b_mat) @ basis
    den = basis.conj().T @ (b_mat.conj().T @ b_mat) @ basis
    return float(sla.eigh(herm(num), herm(den), eigvals_only=True)[0])


@dataclass(frozen=True)
class LyapunovParams:
    """Weights and certified constants of the functional.

    Attributes:
        a: Order of the skew part.
        b: Order of the dissipative part.
        kappa: Positivity scale of the dissipative part.
        epsilons: Weights ``eps_0 .. eps_(n-1)``.
        equivalence_C: ``C`` with ``C^-1 |V|^2 <= L <= C |V|^2``.
        dissipation_c: ``c`` in the dissipation inequality.
        interaction_C: Constant of the cross-term inequality for the weighted sum.
        reduced: Whether the functional is built on the first-block reduction.
        certified: True once the grid certification succeeded.
    """

    a: int
    b: int
    kappa: float
    epsilons: tuple
    equivalence_C: float = np.inf
    dissipation_c: float = 0.0
    interaction_C: float = np.inf
    reduced: bool = False
    certified: bool = False


def weight(rho, a: int, b: int, kappa: float):
    """``min(kappa rho^(a-b), 1/(kappa rho^(a-b)))``."""
    r = kappa * np.asarray(rho, dtype=float) ** (a - b)
    return np.minimum(r, 1.0 / r)


def rate_scale(rho, a: int, b: int, kappa: float):
    """``min(rho^b / kappa, kappa rho^(2a-b))``."""
    rho = np.asarray(rho, dtype=float)
    return np.minimum(rho**b / kappa, kappa * rho ** (2 * a - b))


def interaction_matrix(n_mat: np.ndarray, m_scaled: np.ndarray, epsilons: Sequence[float]) -> np.ndarray:
    """Hermitian matrix of ``sum_k eps_k Re(M N^(k-1) V . M N^k V)``; supports batching."""
    n = n_mat.shape[-1]
    out = np.zeros(np.broadcast_shapes(n_mat.shape, m_scaled.shape), dtype=complex)
    prev = m_scaled
    for k in range(1, n):
        cur = prev @ n_mat
        out = out + epsilons[k] * herm(np.swapaxes(prev, -1, -2).conj() @ cur)
        prev = cur
    return out


def observation_matrix(n_mat: np.ndarray, m_scaled: np.ndarray, epsilons: Sequence[float],
                       start: int = 1) -> np.ndarray:
    """``sum_{k >= start} eps_k (M N^k)^* (M N^k)`` (``eps_0 := 1`` when ``start = 0``)."""
    n = n_mat.shape[-1]
    out = np.zeros(np.broadcast_shapes(n_mat.shape, m_scaled.shape), dtype=complex)
    cur = m_scaled
    for k in range(0, n):
        if k >= start:
            w = 1.0 if k == 0 else epsilons[k]
            out = out + w * np.swapaxes(cur, -1, -2).conj() @ cur
        cur = cur @ n_mat
    return out


def functional_matrix(form: LinearForm, params: LyapunovParams, rho: float) -> np.ndarray:
    """``H`` with ``L(V) = V^* H V``."""
    if rho <= 0:
        raise NonPositiveRho(f"rho must be positive, got {rho}")
    m_scaled = params.kappa * form.m_unscaled
    imat = interaction_matrix(form.n_mat, m_scaled, params.epsilons)
    return herm(form.s + weight(rho, form.a, form.b, params.kappa) * imat)


def _form(sym, params: LyapunovParams) -> LinearForm:
    return sym if isinstance(sym, LinearForm) else LinearForm.from_symbol(sym, params.reduced)


def lyapunov_value(vhat: np.ndarray, rho: float, sym, params: LyapunovParams) -> float:
    """``S V.V + w(rho) I(V)`` evaluated through the cached Hermitian form."""
    h = functional_matrix(_form(sym, params), params, rho)
    v = np.asarray(vhat, dtype=complex)
    return float(np.real(np.vdot(v, h @ v)))


def dissipation_matrix(form: LinearForm, params: LyapunovParams, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H, D)`` with ``dL/dt = -V^* D V`` along the flow."""
    h = functional_matrix(form, params, rho)
    k = form.generator(rho)
    return h, herm(h @ k + k.conj().T @ h)


def lyapunov_derivative_along_flow(rho: float, sym, params: LyapunovParams) -> tuple[float, float]:
    """``(lambda_min(D) / lambda_max(H), c * min(rho^b/kappa, kappa rho^(2a-b)))``."""
    form = _form(sym, params)
    h, d = dissipation_matrix(form, params, rho)
    observed = np.linalg.eigvalsh(d)[0] / np.linalg.eigvalsh(h)[-1]
    required = params.dissipation_c * rate_scale(rho, form.a, form.b, params.kappa)
    return float(observed), float(required)


def _interaction_constant(form: LinearForm, params: LyapunovParams, rho: float) -> float:
    """Smallest ``C`` with ``dI/dt + rho^a/2 sum eps_k |M N^k V|^2 <= C eps_0 s(rho) |M V|^2``.

    ``s(rho) = max(rho^a, rho^(2b-a)/kappa^2)``. Returns ``inf`` when no finite
    constant exists, which happens when the left side is positive somewhere
    on the kernel of ``M``.
    """
    n_mat, m_scaled = form.n_mat, params.kappa * form.m_unscaled
    imat = interaction_matrix(n_mat, m_scaled, params.epsilons)
    k = form.generator(rho)
    x = -herm(imat @ k + k.conj().T @ imat) + 0.5 * rho**form.a * observation_matrix(n_mat, m_scaled, params.epsilons)
    g = herm(m_scaled.conj().T @ m_scaled)
    gv, gu = np.linalg.eigh(g)
    scale = max(np.abs(x).max(), 1e-300)
    rank = int(np.sum(gv > gv[-1] * 1e-12))
    p_basis, q_basis = gu[:, -rank:] if rank else gu[:, :0], gu[:, : gu.shape[1] - rank]
    x_pp = p_basis.conj().T @ x @ p_basis
    if q_basis.shape[1]:
        x_qq = q_basis.conj().T @ x @ q_basis
        x_pq = p_basis.conj().T @ x @ q_basis
        sv, su = np.linalg.eigh(-herm(x_qq))
        if sv[0] < -1e-12 * scale:
            return np.inf
        flat = sv <= 1e-12 * scale
        if np.any(np.abs(x_pq @ su[:, flat]) > 1e-9 * scale):
            return np.inf
        inv = su[:, ~flat] @ np.diag(1.0 / sv[~flat]) @ su[:, ~flat].conj().T
        x_pp = x_pp + x_pq @ inv @ x_pq.conj().T
    if rank == 0:
        return 0.0
    top = sla.eigh(herm(x_pp), herm(p_basis.conj().T @ g @ p_basis), eigvals_only=True)[-1]
    scale_rho = max(rho**form.a, rho ** (2 * form.b - form.a) / params.kappa**2)
    return max(0.0, float(top)) / (params.epsilons[0] * scale_rho)


@dataclass
class CertificationTrace:
    """Per-radius diagnostics of a certification attempt."""

    rho: np.ndarray
    observed: np.ndarray
    min_eig_h: np.ndarray
    max_eig_h: np.ndarray
    interaction: np.ndarray


def _try_certify(forms: Sequence[LinearForm], params: LyapunovParams, grid: np.ndarray):
    ratios, c_equiv, c_inter = [], 1.0, 0.0
    for form in forms:
        for rho in grid:
            h, d = dissipation_matrix(form, params, rho)
            eh, ed = np.linalg.eigvalsh(h), np.linalg.eigvalsh(d)
            if eh[0] <= 0:
                return None, (rho, "functional not positive definite")
            if ed[0] <= 1e-13 * max(abs(ed[-1]), 1e-300):
                return None, (rho, "dissipation not positive definite")
            ci = _interaction_constant(form, params, rho)
            if not np.isfinite(ci):
                return None, (rho, "cross-term inequality has no finite constant")
            ratios.append(ed[0] / eh[-1] / rate_scale(rho, form.a, form.b, params.kappa))
            c_equiv = max(c_equiv, eh[-1], 1.0 / eh[0])
            c_inter = max(c_inter, ci)
    return (min(ratios), c_equiv, c_inter), None


def select_epsilons(
    sym: FrequencySymbol | LinearForm | Sequence[FrequencySymbol | LinearForm],
    a: int = 1,
    b: int = 2,
    kappa: float | None = None,
    rho_grid: np.ndarray | None = None,
    eps0: float = 1.0,
    delta: float = 0.5,
    max_halvings: int = 40,
    safety: float = 0.5,
) -> LyapunovParams:
    """Find geometric weights ``eps_k = eps0 * delta^k`` that certify the functional.

    Both ``eps0`` and ``delta`` are halved until, at every grid radius and every
    supplied direction, ``H`` is positive definite, the dissipation matrix is
    positive definite and the cross-term inequality has a finite constant.
    ``b == 0`` selects the first-block reduction of each symbol.

    Args:
        sym: One symbol (or form), or a list of them for several directions.
        a: Order of the skew part.
        b: Order of the dissipative part; ``0`` uses the reduced pair.
        kappa: Positivity scale; defaults to the largest admissible value.
        rho_grid: Radii to certify on (default :func:`default_rho_grid`).
        eps0: Initial leading weight.
        delta: Initial geometric ratio.
        max_halvings: Bisection budget.
        safety: Factor applied to the grid minimum to give ``dissipation_c``.

    Raises:
        SkFails: the SK condition fails for some direction.
        NoFeasibleEpsilons: the budget was exhausted.
    """
    syms = list(sym) if isinstance(sym, (list, tuple)) else [sym]
    reduced = b == 0
    forms = [s if isinstance(s, LinearForm) else LinearForm.from_symbol(s, reduced) for s in syms]
    forms = [replace(f, a=a, b=b) for f in forms]
    grid = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
    for form in forms:
        if not kalman_rank_holds(form.n_mat, form.m_unscaled).holds:
            raise SkFails("SK condition fails; no dissipative functional exists")
    if kappa is None:
        kappa = min(positivity_scale(f.b_mat) for f in forms)
    n = forms[0].n
    last = None
    for _ in range(max_halvings):
        eps = tuple(eps0 * delta**k for k in range(n))
        candidate = LyapunovParams(a, b, float(kappa), eps, reduced=reduced)
        result, last = _try_certify(forms, candidate, grid)
        if result is not None:
            ratio, c_equiv, c_inter = result
            logger.debug("certified eps=%s c=%.4g C=%.4g", eps, ratio, c_equiv)
            return replace(candidate, equivalence_C=float(c_equiv), dissipation_c=float(safety * ratio),
                           interaction_C=float(c_inter), certified=True)
        eps0 *= 0.5
        delta *= 0.5
    raise NoFeasibleEpsilons(*last)


def certification_trace(sym, params: LyapunovParams, rho_grid: np.ndarray) -> CertificationTrace:
    """Diagnostics for CSV output: observed rate and ``H`` spectrum per radius."""
    form = _form(sym, params)
    obs, lo, hi, inter = [], [], [], []
    for rho in rho_grid:
        h, d = dissipation_matrix(form, params, rho)
        eh = np.linalg.eigvalsh(h)
        obs.append(np.linalg.eigvalsh(d)[0] / eh[-1])
        lo.append(eh[0])
        hi.append(eh[-1])
        inter.append(_interaction_constant(form, params, rho))
    return CertificationTrace(np.asarray(rho_grid), np.array(obs), np.array(lo), np.array(hi), np.array(inter))


def spectral_decay_rate(system: SymbolicSystem, omega: np.ndarray, rho: float) -> float:
    """``min Re lambda`` over eigenvalues of ``rho N_omega + rho^2 M_omega``."""
    if rho <= 0:
        raise NonPositiveRho(f"rho must be positive, got {rho}")
    omega = np.asarray(omega, dtype=float)
    evaluate_symbols(system, omega)
    k = generator_batch(system, rho * omega)
    return float(np.linalg.eigvals(k).real.min())


def spectral_decay_rates(system: SymbolicSystem, omega: np.ndarray, rho_grid: np.ndarray) -> np.ndarray:
    """Vectorized :func:`spectral_decay_rate` over a radius grid."""
    omega = np.asarray(omega, dtype=float)
    evaluate_symbols(system, omega)
    rho = np.asarray(rho_grid, dtype=float)
    if np.any(rho <= 0):
        raise NonPositiveRho("all radii must be positive")
    k = generator_batch(system, rho[:, None] * omega[None, :])
    return np.linalg.eigvals(k).real.min(axis=-1)


@dataclass
class EnvelopeReport:
    """Log-log fit of the decay rate against frequency.

    Attributes:
        rho: Radii.
        rates: Decay rates.
        low_slope: Slope on the lowest decade.
        high_slope: Slope on the highest decade.
        plateau: Mean rate on the highest decade.
        crossover: Radius where the low-frequency power law meets the plateau.
    """

    rho: np.ndarray
    rates: np.ndarray
    low_slope: float
    high_slope: float
    plateau: float
    crossover: float
    low_stderr: float = 0.0
    high_stderr: float = 0.0
    extras: dict = field(default_factory=dict)


def rate_envelope_fit(system: SymbolicSystem, omega: np.ndarray, rho_grid: np.ndarray | None = None,
                      tail_decades: float = 1.0) -> EnvelopeReport:
    """Fit low- and high-frequency slopes of the decay rate.

    Raises:
        InsufficientGrid: fewer than 8 radii, a span under four decades, or
            fewer than three radii in a tail.
    """
    rho = default_rho_grid() if rho_grid is None else np.sort(np.asarray(rho_grid, dtype=float))
    if rho.size < 8 or np.log10(rho[-1] / rho[0]) < 4 - 1e-9:
        raise InsufficientGrid(f"need >= 8 radii spanning >= 4 decades, got {rho.size}")
    rates = spectral_decay_rates(system, omega, rho)
    low = rho <= rho[0] * 10**tail_decades
    high = rho >= rho[-1] / 10**tail_decades
    if low.sum() < 3 or high.sum() < 3:
        raise InsufficientGrid("fewer than three radii in a tail")
    if np.any(rates <= 0):
        raise InsufficientGrid("decay rate is not positive on the whole grid")
    lo = stats.linregress(np.log(rho[low]), np.log(rates[low]))
    hi = stats.linregress(np.log(rho[high]), np.log(rates[high]))
    plateau = float(np.mean(rates[high]))
    coef = np.exp(lo.intercept)
    crossover = float((plateau / coef) ** (1.0 / lo.slope)) if lo.slope > 0 else float("nan")
    return EnvelopeReport(rho, rates, float(lo.slope), float(hi.slope), plateau, crossover,
                          float(lo.stderr), float(hi.stderr))
