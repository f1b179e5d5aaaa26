"""Decision procedures for the SK condition of a matrix pair ``(N, M)``.

The pair satisfies SK when no nonzero vector is both an eigenvector of ``N``
and in the kernel of ``M``. The Kalman route checks full column rank of
``[M; MN; ...; MN^(n-1)]``; the eigenvector route is an independent oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EigenFailure, HypothesisViolation, ShapeMismatch
from .symbols import SymbolicSystem, evaluate_symbols, sphere_samples

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass
class SkVerdict:
    """Result of an SK test.

    Attributes:
        holds: Whether the SK condition holds.
        rank: Numerical rank of the Kalman stack (or of the best Hautus pencil).
        singular_values: Singular values of the tested matrix, descending.
        witness: Unit vector violating SK when ``holds`` is false.
        eigenvalue: Eigenvalue of ``N`` paired with the witness, when known.
        method: ``"kalman"`` or ``"eigenvector"``.
    """

    holds: bool
    rank: int
    singular_values: np.ndarray
    witness: np.ndarray | None = None
    eigenvalue: complex | None = None
    method: str = "kalman"

    @property
    def min_singular_value(self) -> float:
        return float(self.singular_values[-1]) if len(self.singular_values) else 0.0


def _check_pair(n_mat: np.ndarray, m_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_mat = np.atleast_2d(np.asarray(n_mat, dtype=complex))
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=complex))
    if n_mat.ndim != 2 or n_mat.shape[0] != n_mat.shape[1] or n_mat.shape != m_mat.shape:
        raise ShapeMismatch(f"need square matrices of equal size, got {n_mat.shape} and {m_mat.shape}")
    return n_mat, m_mat


def kalman_matrix(n_mat: np.ndarray, m_mat: np.ndarray) -> np.ndarray:
    """Vertical stack ``[M; M N; ...; M N^(n-1)]`` of shape ``(n^2, n)``."""
    n_mat, m_mat = _check_pair(n_mat, m_mat)
    n = n_mat.shape[0]
    blocks = [m_mat]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ n_mat)
    return np.vstack(blocks)


def default_tolerance(n: int) -> float:
    """Relative rank threshold ``n^2 * eps * 100``."""
    return n * n * _EPS * 100


def kalman_rank_holds(n_mat: np.ndarray, m_mat: np.ndarray, tol: float | None = None) -> SkVerdict:
    """Decide SK by the Kalman rank of ``[M; MN; ...]``.

    Args:
        n_mat: Convection symbol ``N``.
        m_mat: Diffusion symbol ``M``.
        tol: Relative threshold; singular values at or below ``tol * sigma_max``
            count as zero. Defaults to :func:`default_tolerance`.
    """
    n_mat, m_mat = _check_pair(n_mat, m_mat)
    n = n_mat.shape[0]
    tol = default_tolerance(n) if tol is None else tol
    stack = kalman_matrix(n_mat, m_mat)
    _, sv, vh = np.linalg.svd(stack)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > tol * smax)) if smax > 0 else 0
    witness = None
    eigenvalue = None
    if rank < n:
        # the kernel is N-invariant; an eigenvector of N restricted to it is a witness
        basis = vh[rank:].conj().T
        lams, vecs = np.linalg.eig(basis.conj().T @ n_mat @ basis)
        witness = basis @ vecs[:, 0]
        witness = witness / np.linalg.norm(witness)
        eigenvalue = complex(lams[0])
    return SkVerdict(rank == n, rank, sv, witness, eigenvalue, "kalman")


def sk_eigenvector_check(
    n_mat: np.ndarray,
    m_mat: np.ndarray,
    tol: float | None = None,
    real_lambda_only: bool = False,
) -> SkVerdict:
    """Decide SK directly from the eigenstructure of ``N``.

    For every distinct eigenvalue ``lam`` of ``N`` the pencil ``[N - lam I; M]``
    is tested for a kernel through its smallest singular value. This covers
    defective and repeated eigenvalues, where a single eigenvector basis
    would miss kernel directions inside an eigenspace.

    Args:
        n_mat: Convection symbol ``N``.
        m_mat: Diffusion symbol ``M``.
        tol: Relative threshold against the scale ``max(|N|, |M|)``.
        real_lambda_only: Restrict to eigenvalues with ``-lam`` real up to
            tolerance, the literal reading of the definition. By default all
            eigenvalues are tested.

    Raises:
        EigenFailure: the eigenvalue computation returned non-finite values.
    """
    n_mat, m_mat = _check_pair(n_mat, m_mat)
    n = n_mat.shape[0]
    tol = default_tolerance(n) if tol is None else tol
    scale = max(np.linalg.norm(n_mat, 2), np.linalg.norm(m_mat, 2))
    if scale == 0:
        return SkVerdict(False, 0, np.zeros(n), np.eye(n, dtype=complex)[0], 0j, "eigenvector")
    try:
        lams = np.linalg.eigvals(n_mat)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.all(np.isfinite(lams)):
        raise EigenFailure("non-finite eigenvalues")
    if real_lambda_only:
        lams = lams[np.abs(lams.imag) <= max(tol, 1e-9) * scale]
    best = None
    for lam in lams:
        pencil = np.vstack([n_mat - lam * np.eye(n), m_mat])
        _, sv, vh = np.linalg.svd(pencil)
        if best is None or sv[-1] < best[1][-1]:
            best = (lam, sv, vh[-1].conj())
    if best is None:
        return SkVerdict(True, n, np.full(n, scale), None, None, "eigenvector")
    lam, sv, vec = best
    rank = int(np.sum(sv > tol * scale))
    if rank == n:
        return SkVerdict(True, n, sv, None, None, "eigenvector")
    vec = vec / np.linalg.norm(vec)
    return SkVerdict(False, rank, sv, vec, complex(lam), "eigenvector")


def hypocoercivity_positivity(n_mat: np.ndarray, m_mat: np.ndarray, epsilons: Sequence[float]) -> float:
    """Smallest eigenvalue of ``sum_l eps_l (N^l)^* M^* M N^l`` for ``l < n``."""
    n_mat, m_mat = _check_pair(n_mat, m_mat)
    n = n_mat.shape[0]
    eps = np.asarray(epsilons, dtype=float)
    if eps.shape != (n,) or np.any(eps <= 0):
        raise ValueError(f"need {n} positive weights, got {list(eps)}")
    gram = np.zeros((n, n), dtype=complex)
    block = m_mat.copy()
    for weight in eps:
        gram += weight * block.conj().T @ block
        block = block @ n_mat
    return max(0.0, float(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))[0]))


def positivity_threshold(n_mat: np.ndarray, m_mat: np.ndarray, epsilons: Sequence[float],
                         tol: float | None = None) -> float:
    """Zero level for the positivity value: ``tol`` relative to the Gram scale.

    The Gram eigenvalue carries rounding of order ``eps * sigma_max^2``, so the
    threshold is relative to ``sigma_max^2`` rather than its square root.
    """
    n = np.atleast_2d(n_mat).shape[0]
    tol = default_tolerance(n) if tol is None else tol
    smax = np.linalg.norm(kalman_matrix(n_mat, m_mat), 2)
    return max(epsilons) * tol * smax**2


def _is_invertible(mat: np.ndarray, tol: float) -> bool:
    if mat.size == 0:
        return True
    sv = np.linalg.svd(mat, compute_uv=False)
    return sv[-1] > tol * max(sv[0], 1e-300)


def block_sk_reduction_check(
    n11: np.ndarray, n12: np.ndarray, n21: np.ndarray, n22: np.ndarray,
    m22: np.ndarray, q: np.ndarray, tol: float | None = None,
    samples: int = 64,
) -> bool:
    """Check the block reduction of SK against its reduced pair.

    With ``M = diag(0, M22)`` and ``N`` in blocks, SK for ``(N, M)`` implies SK
    for ``(N11, N12 Q N21)``; the converse holds when ``M22`` is invertible.
    Returns True when the verdicts are consistent with that statement.

    Raises:
        HypothesisViolation: block sizes disagree, ``N12 != +-N21^*``, or the
            real part of ``Q eta . eta`` vanishes for some sampled unit ``eta``.
    """
    n11, n12, n21, n22, m22, q = (np.atleast_2d(np.asarray(x, dtype=complex)) for x in (n11, n12, n21, n22, m22, q))
    n1, n2 = n11.shape[0], n22.shape[0]
    shapes_ok = (n11.shape == (n1, n1) and n12.shape == (n1, n2) and n21.shape == (n2, n1)
                 and m22.shape == (n2, n2) and q.shape == (n2, n2))
    if not shapes_ok:
        raise HypothesisViolation("block sizes", f"n1={n1}, n2={n2}")
    scale = max(np.abs(n12).max(initial=0.0), np.abs(n21).max(initial=0.0), 1.0)
    adj = n21.conj().T
    if not (np.allclose(n12, adj, atol=1e-10 * scale) or np.allclose(n12, -adj, atol=1e-10 * scale)):
        raise HypothesisViolation("N12 = +-N21^*", f"mismatch {np.abs(np.abs(n12) - np.abs(adj)).max():.3g}")
    herm = np.linalg.eigvalsh(0.5 * (q + q.conj().T))
    if not (herm[0] > 0 or herm[-1] < 0):
        rng = np.random.default_rng(12345)
        eta = rng.standard_normal((samples, n2)) + 1j * rng.standard_normal((samples, n2))
        vals = np.real(np.einsum("ki,ij,kj->k", eta.conj(), q, eta))
        detail = f"Hermitian part eigenvalues span [{herm[0]:.3g}, {herm[-1]:.3g}], sampled min |Re| {np.abs(vals).min():.3g}"
        raise HypothesisViolation("Re(Q eta . eta) != 0", detail)
    n_full = np.block([[n11, n12], [n21, n22]])
    m_full = np.zeros_like(n_full)
    m_full[n1:, n1:] = m22
    full = kalman_rank_holds(n_full, m_full, tol).holds
    reduced = kalman_rank_holds(n11, n12 @ q @ n21, tol).holds if n1 else True
    if _is_invertible(m22, default_tolerance(n2) if tol is None else tol):
        return full == reduced
    return (not full) or reduced


@dataclass
class SphereSkReport:
    """Per-direction SK verdicts over a set of unit directions."""

    directions: np.ndarray
    verdicts: list[SkVerdict] = field(default_factory=list)
    reduced: list[SkVerdict] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(v.holds for v in self.verdicts)

    @property
    def reduced_agrees(self) -> bool:
        return all(a.holds == b.holds for a, b in zip(self.verdicts, self.reduced))

    def rows(self) -> list[dict]:
        out = []
        for idx, (om, v) in enumerate(zip(self.directions, self.verdicts)):
            row = {"omega_index": idx}
            for a, comp in enumerate(om):
                row[f"omega_{a + 1}"] = float(comp)
            row.update(rank=v.rank, holds=v.holds, min_singular_value=v.min_singular_value)
            out.append(row)
        return out


def sk_over_sphere(system: SymbolicSystem, directions: np.ndarray | int | None = None,
                   tol: float | None = None) -> SphereSkReport:
    """Run the Kalman test on ``(N_omega, M_omega)`` and the reduced pair at each direction.

    Args:
        system: The system.
        directions: Array of unit directions, a sample count, or None for the
            default sphere sampling.
        tol: Relative rank threshold.
    """
    if directions is None or isinstance(directions, (int, np.integer)):
        directions = sphere_samples(system.d, directions)
    report = SphereSkReport(np.asarray(directions, dtype=float))
    for om in report.directions:
        sym = evaluate_symbols(system, om)
        report.verdicts.append(kalman_rank_holds(sym.n_omega, sym.m_omega, tol))
        if system.n1 and system.n2:
            report.reduced.append(kalman_rank_holds(sym.nred, sym.mred, tol))
        else:
            report.reduced.append(report.verdicts[-1])
    if not report.reduced_agrees:
        logger.warning("full and reduced SK verdicts disagree on %s", system.name)
    return report
