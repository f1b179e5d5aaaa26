import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pardiff.errors import DomainViolation, NonUnitDirection, SingularZ, SystemShapeError
from pardiff.models import make_barotropic_ns, perturbation_samples
from pardiff.symbols import (ProbeSpec, SymbolicSystem, check_assumption_D, check_assumption_E, check_unit,
                             evaluate_symbols, generator_batch, s2_batch, sphere_samples, z_batch)


def const(m):
    m = np.asarray(m, dtype=float)
    return lambda u: m


def test_toy_symbols_match_hand_values(toy):
    sym = evaluate_symbols(toy, [1.0])
    np.testing.assert_allclose(sym.n_omega, [[0, 1j], [1j, 0]])
    np.testing.assert_allclose(sym.m_omega, [[0, 0], [0, 1]])
    np.testing.assert_allclose(sym.z_omega, [[1.0]])
    # reduced pair: N11 = i S11 = 0, M = S12 Z^-1 S21 = 1
    np.testing.assert_allclose(sym.nred, [[0]])
    np.testing.assert_allclose(sym.mred, [[1]])


def test_generator_matches_hand_built_matrix(toy):
    xi = np.array([[0.3], [-2.0], [7.5]])
    k = generator_batch(toy, xi)
    for x, kk in zip(xi[:, 0], k):
        np.testing.assert_allclose(kk, [[0, 1j * x], [1j * x, x * x]], atol=1e-15)


def test_ns_symbols_hand_values(ns2):
    # p = rho^2 at rho = 1: S0 = diag(2, 1, 1), S_a couples rho and u_a with p' = 2
    om = np.array([0.6, 0.8])
    sym = evaluate_symbols(ns2, om)
    np.testing.assert_allclose(sym.s0, np.diag([2.0, 1.0, 1.0]))
    np.testing.assert_allclose(sym.z_omega, np.eye(2) + np.outer(om, om), atol=1e-15)
    np.testing.assert_allclose(sym.s21[:, 0], 2 * om)
    # reduced diffusion: S12 Z^-1 S21 / S0_11 = 4 om.(I + om om^T)^-1 om / 2 = 1
    np.testing.assert_allclose(sym.mred, [[1.0]], atol=1e-14)


def test_batched_blocks_agree_with_pointwise(ns2, rng):
    om = sphere_samples(2, 7)
    z = z_batch(ns2, om)
    s2 = s2_batch(ns2, om)
    for i, o in enumerate(om):
        sym = evaluate_symbols(ns2, o)
        np.testing.assert_allclose(z[i], sym.z_omega, atol=1e-14)
        np.testing.assert_allclose(s2[i][:, :1], sym.s21, atol=1e-14)
        np.testing.assert_allclose(s2[i][:, 1:], sym.s22, atol=1e-14)


def test_non_unit_direction_rejected(toy, ns2):
    with pytest.raises(NonUnitDirection):
        evaluate_symbols(toy, [2.0])
    with pytest.raises(NonUnitDirection):
        evaluate_symbols(ns2, [1.0, 0.0, 0.0])
    with pytest.raises(NonUnitDirection):
        check_unit([0.0, 0.0])


def test_singular_z_raises():
    sys_ = SymbolicSystem(d=1, n1=1, n2=1, uref=np.zeros(2), s0=const(np.eye(2)),
                          s_alpha=[const([[0, 1], [1, 0]])], y=[[const(np.zeros((2, 2)))]])
    with pytest.raises(SingularZ):
        evaluate_symbols(sys_, [1.0])


def test_shape_errors():
    with pytest.raises(SystemShapeError):
        SymbolicSystem(d=1, n1=1, n2=1, uref=np.zeros(3), s0=const(np.eye(2)),
                       s_alpha=[const(np.eye(2))], y=[[const(np.eye(2))]])
    with pytest.raises(SystemShapeError):
        SymbolicSystem(d=2, n1=1, n2=1, uref=np.zeros(2), s0=const(np.eye(2)),
                       s_alpha=[const(np.eye(2))], y=[[const(np.eye(2))]])
    with pytest.raises(SystemShapeError):
        SymbolicSystem(d=1, n1=1, n2=1, uref=np.zeros(2), s0=const(np.eye(3)),
                       s_alpha=[const(np.eye(2))], y=[[const(np.eye(2))]])


@pytest.mark.parametrize("d,count", [(1, None), (2, 64), (3, 256), (3, 17), (4, 20)])
def test_sphere_samples_unit(d, count):
    om = sphere_samples(d, count)
    assert om.shape[1] == d
    np.testing.assert_allclose(np.linalg.norm(om, axis=1), 1.0, atol=1e-14)
    np.testing.assert_array_equal(om, sphere_samples(d, count))


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20))
def test_generator_is_s0_inverse_of_symbol(x, y):
    ns = make_barotropic_ns(d=2)
    k = generator_batch(ns, np.array([x, y]))
    s0, s_a, yy = ns.frozen
    sym = 1j * (x * s_a[0] + y * s_a[1]) + sum(
        xi_a * xi_b * yy[a, b] for a, xi_a in enumerate((x, y)) for b, xi_b in enumerate((x, y)))
    np.testing.assert_allclose(s0 @ k, sym, atol=1e-10 * (1 + x * x + y * y))


def test_assumption_D_ns_c1_is_one(ns2):
    rep = check_assumption_D(ns2, directions=sphere_samples(2, 64))
    assert rep.passed
    # Z = mu I + (mu + lam) om om^T with mu = 1, lam = 0 has smallest eigenvalue 1
    assert rep.info["c1"] == pytest.approx(1.0, abs=1e-12)


def test_assumption_D_mhd_on_samples(mhd):
    samples = perturbation_samples(mhd.uref, rel=0.1, points=2, admissible=mhd.domain_check, max_samples=32)
    rep = check_assumption_D(mhd, samples)
    assert rep.passed
    assert rep.info["c1"] > 0


def test_assumption_D_detects_nonsymmetric_s0():
    sys_ = SymbolicSystem(d=1, n1=1, n2=1, uref=np.zeros(2), s0=const([[1, 0.5], [0, 1]]),
                          s_alpha=[const(np.zeros((2, 2)))], y=[[const(np.diag([0, 1]))]])
    rep = check_assumption_D(sys_)
    assert not rep.passed
    assert rep.failures()[0].name.startswith("D1")


def test_assumption_D_detects_diffusion_leak():
    sys_ = SymbolicSystem(d=1, n1=1, n2=1, uref=np.zeros(2), s0=const(np.eye(2)),
                          s_alpha=[const(np.zeros((2, 2)))], y=[[const(np.eye(2))]])
    rep = check_assumption_D(sys_)
    assert [f.name for f in rep.failures()] == ["D3[0]"]


def test_assumption_D_domain_violation(ns2):
    with pytest.raises(DomainViolation):
        check_assumption_D(ns2, [np.array([-1.0, 0.0, 0.0])])


def test_assumption_E_ns_passes_mhd_fails(ns2, mhd):
    rep = check_assumption_E(ns2, ProbeSpec(states=(ns2.uref, np.array([1.3, 0.2, -0.1]))))
    assert rep.passed, rep.failures()
    assert rep.info["s0_11_is_identity"] is False
    rep_m = check_assumption_E(mhd)
    assert not rep_m.passed
    assert "E1" in [f.name for f in rep_m.failures()]
