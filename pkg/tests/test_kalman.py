import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from pardiff.errors import HypothesisViolation, ShapeMismatch
from pardiff.kalman import (block_sk_reduction_check, default_tolerance, hypocoercivity_positivity, kalman_matrix,
                            kalman_rank_holds, positivity_threshold, sk_eigenvector_check, sk_over_sphere)
from pardiff.symbols import evaluate_symbols, sphere_samples

from oracles import controllability_rank_brute, random_pair


def test_kalman_matrix_layout():
    n_mat = np.array([[0, 1], [1, 0]])
    m_mat = np.diag([0, 1])
    np.testing.assert_array_equal(kalman_matrix(n_mat, m_mat), [[0, 0], [0, 1], [0, 0], [1, 0]])


def test_toy_pair_holds_and_decoupled_fails():
    assert kalman_rank_holds([[0, 1j], [1j, 0]], np.diag([0, 1])).holds
    v = kalman_rank_holds(np.zeros((2, 2)), np.diag([0, 1]))
    assert not v.holds and v.rank == 1
    np.testing.assert_allclose(np.abs(v.witness), [1, 0], atol=1e-14)


def test_witness_is_eigenvector_in_kernel(rng):
    for n in range(2, 7):
        n_mat, m_mat = random_pair(rng, n, fail=True)
        v = kalman_rank_holds(n_mat, m_mat)
        assert not v.holds
        w = v.witness
        assert np.linalg.norm(m_mat @ w) < 1e-9 * np.linalg.norm(m_mat)
        np.testing.assert_allclose(n_mat @ w, v.eigenvalue * w, atol=1e-8 * np.linalg.norm(n_mat))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        kalman_rank_holds(np.eye(2), np.eye(3))
    with pytest.raises(ShapeMismatch):
        sk_eigenvector_check(np.ones((2, 3)), np.ones((2, 3)))


def test_zero_matrices_fail():
    assert not kalman_rank_holds(np.zeros((3, 3)), np.zeros((3, 3))).holds
    assert not sk_eigenvector_check(np.zeros((3, 3)), np.zeros((3, 3))).holds


def test_defective_eigenvalue_caught_by_pencil():
    # Jordan block: single eigenvector e1; M sees only e2, so e1 is a witness
    n_mat = np.array([[0.0, 1.0], [0.0, 0.0]])
    m_mat = np.diag([0.0, 1.0])
    assert not kalman_rank_holds(n_mat, m_mat).holds
    assert not sk_eigenvector_check(n_mat, m_mat).holds
    # M sees e1 instead: no eigenvector in the kernel
    assert kalman_rank_holds(n_mat, np.diag([1.0, 0.0])).holds
    assert sk_eigenvector_check(n_mat, np.diag([1.0, 0.0])).holds


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_three_verdicts_agree_with_brute_oracle(n, rng):
    for trial in range(40):
        n_mat, m_mat = random_pair(rng, n, fail=trial % 2 == 0)
        eps = [1.0] * n
        k = kalman_rank_holds(n_mat, m_mat).holds
        e = sk_eigenvector_check(n_mat, m_mat).holds
        p = hypocoercivity_positivity(n_mat, m_mat, eps) > positivity_threshold(n_mat, m_mat, eps)
        b = controllability_rank_brute(n_mat, m_mat)
        assert k == e == p == b == (trial % 2 == 1)


def test_hypocoercivity_value_hand():
    # N = [[0,1],[1,0]], M = diag(0,1): sum = M^*M + N^*M^*MN = diag(0,1) + diag(1,0) = I
    assert hypocoercivity_positivity([[0, 1], [1, 0]], np.diag([0, 1]), [1, 1]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        hypocoercivity_positivity(np.eye(2), np.eye(2), [1.0, -1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1), st.booleans())
def test_verdict_invariant_under_unitary_change(n, seed, fail):
    rng = np.random.default_rng(seed)
    n_mat, m_mat = random_pair(rng, n, fail)
    u = unitary_group.rvs(n, random_state=seed)
    base = kalman_rank_holds(n_mat, m_mat).holds
    assert kalman_rank_holds(u.conj().T @ n_mat @ u, m_mat @ u).holds == base
    assert sk_eigenvector_check(u.conj().T @ n_mat @ u, m_mat @ u).holds == base


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_verdict_invariant_under_scaling(n, seed, s):
    rng = np.random.default_rng(seed)
    n_mat, m_mat = random_pair(rng, n, bool(seed % 2))
    assert kalman_rank_holds(s * n_mat, m_mat / s).holds == kalman_rank_holds(n_mat, m_mat).holds


def test_default_tolerance_scales_with_n():
    assert default_tolerance(4) == pytest.approx(16 * np.finfo(float).eps * 100)


def test_block_reduction_on_models(ns2, mhd):
    for system in (ns2, mhd):
        for om in sphere_samples(system.d, 8):
            sym = evaluate_symbols(system, om)
            n = sym.n_omega
            n1 = sym.n1
            s0 = sym.s0
            # work in the S0^(1/2) symmetrized frame where N12 = -N21^*
            r = np.diag(1 / np.sqrt(np.diag(s0)))
            ns = np.linalg.inv(r) @ n @ r
            ms = np.linalg.inv(r) @ sym.m_omega @ r
            q = np.linalg.inv(ms[n1:, n1:])
            assert block_sk_reduction_check(ns[:n1, :n1], ns[:n1, n1:], ns[n1:, :n1], ns[n1:, n1:],
                                            ms[n1:, n1:], q)


def test_block_reduction_hypotheses():
    with pytest.raises(HypothesisViolation) as exc:
        block_sk_reduction_check(np.zeros((1, 1)), [[1.0, 0.0]], [[5.0], [0.0]], np.zeros((2, 2)),
                                 np.eye(2), np.eye(2))
    assert exc.value.hypothesis == "N12 = +-N21^*"
    with pytest.raises(HypothesisViolation):
        block_sk_reduction_check(np.zeros((1, 1)), [[1.0, 0.0]], [[1.0], [0.0]], np.zeros((2, 2)),
                                 np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(HypothesisViolation):
        block_sk_reduction_check(np.zeros((1, 1)), [[1.0]], [[1.0]], np.zeros((2, 2)), np.eye(2), np.eye(2))


def test_block_reduction_singular_m22_one_way():
    # M22 singular: SK for the full pair still implies SK for the reduced pair
    n11 = np.zeros((1, 1))
    n12 = np.array([[1.0, 0.0]])
    n22 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    m22 = np.diag([0.0, 1.0])
    assert block_sk_reduction_check(n11, n12, -n12.T, n22, m22, np.eye(2))


def test_sphere_reports(toy_decoupled, ns2, mhd):
    rep = sk_over_sphere(toy_decoupled)
    assert not rep.holds and all(not v.holds for v in rep.verdicts)
    rep = sk_over_sphere(ns2, 64)
    assert rep.holds and rep.reduced_agrees
    rows = rep.rows()
    assert len(rows) == 64 and set(rows[0]) == {"omega_index", "omega_1", "omega_2", "rank", "holds",
                                                "min_singular_value"}
    assert sk_over_sphere(mhd, 32).holds
