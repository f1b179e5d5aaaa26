import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from pardiff.errors import (AssumptionFailure, BlowupDetected, CflViolation, DegenerateWindow, SystemShapeError)
from pardiff.littlewood_paley import SpectralField, block_range, dyadic_block
from pardiff.spectral_sim import (decay_window, evolve_linear, evolve_nonlinear_ns, fit_decay_exponent,
                                  initial_data, parabolic_block_constant, parabolic_mode_field, parabolic_residual)
from pardiff.symbols import SymbolicSystem, generator_batch

import cases


def test_toy_mode_matches_expm(toy):
    L, k = 2.0, 5
    fld = initial_data("single-mode", toy, L, 32, component=0, wavevector=[k], amplitude=1.0)
    traj = evolve_linear(toy, fld, [0.0, 0.4, 3.0])
    xi = k / L
    kmat = np.array([[0, 1j * xi], [1j * xi, xi * xi]])
    for t, f in traj:
        expected = expm(-kmat * t) @ np.array([0.5, 0.0])
        np.testing.assert_allclose(f.coeffs[:, k], expected, atol=1e-14)
        np.testing.assert_allclose(f.coeffs[:, -k], expected.conj(), atol=1e-14)
        assert f.hermitian_defect() < 1e-15


def test_heat_exact_damping(heat):
    fld = initial_data("random-band", heat, 1.5, 32, seed=3)
    traj = evolve_linear(heat, fld, [0.7])
    expected = fld.coeffs * np.exp(-0.7 * fld.radius**2)
    np.testing.assert_allclose(traj.fields[0].coeffs, expected, atol=1e-15)


def test_ns_defective_mode_uses_robust_path(ns2):
    # at |xi| = sqrt(2) the longitudinal block of NS is defective
    fld = SpectralField.zeros(2, 3, 1.0, (4, 4))
    coeffs = np.zeros((3, 4, 4), dtype=complex)
    coeffs[:, 1, 1] = [1.0, 0.3, -0.2]
    fld = fld.with_coeffs(coeffs, False)
    t = 0.9
    out = evolve_linear(ns2, fld, [t]).fields[0]
    k = generator_batch(ns2, np.array([1.0, 1.0]))
    np.testing.assert_allclose(out.coeffs[:, 1, 1], expm(-k * t) @ coeffs[:, 1, 1], atol=1e-12)


def test_evolve_errors(toy, ns2):
    with pytest.raises(SystemShapeError):
        evolve_linear(toy, SpectralField.zeros(2, 3, 1.0, (4, 4)), [0.0])
    bad = SymbolicSystem(d=1, n1=1, n2=1, uref=np.zeros(2), s0=lambda u: np.eye(2),
                         s_alpha=[lambda u: np.zeros((2, 2))], y=[[lambda u: np.eye(2)]])
    with pytest.raises(AssumptionFailure):
        evolve_linear(bad, SpectralField.zeros(1, 2, 1.0, (8,)), [0.0])


@pytest.mark.parametrize("label", ["toy-random", "toy-single-V1", "toy-gaussian", "ns2-random", "mhd-random"])
def test_parabolic_residual(label):
    name = next(c for c in cases.CASES if c[0] == label)[1]
    res = parabolic_residual(cases.system(name), cases.trajectory(label))
    assert res.max() <= 1e-9


def test_parabolic_mode_hand_value(toy):
    # toy: Z = 1, S21 = 1, S22 = 0, so W = i V1 / rho + V2
    fld = SpectralField.zeros(1, 2, 1.0, (8,))
    c = np.zeros((2, 8), dtype=complex)
    c[:, 2] = [1.0, 2.0]
    w = parabolic_mode_field(toy, fld.with_coeffs(c, False))
    assert w.coeffs[0, 2] == pytest.approx(0.5j + 2.0)
    assert w.coeffs[0, 0] == 0


def _grid_directions(fld):
    xi = fld.xi.reshape(-1, fld.d)
    r = np.linalg.norm(xi, axis=1)
    return xi[r > 0] / r[r > 0, None]


@pytest.mark.parametrize("name,L,grid", [("toy1d", 3.0, 64), ("ns2", 2.0, 32)])
def test_parabolic_block_bounds(name, L, grid):
    sys_ = cases.system(name)
    for seed in range(100):
        fld = initial_data("random-band", sys_, L, grid, seed=seed)
        const = parabolic_block_constant(sys_, _grid_directions(fld))
        w = parabolic_mode_field(sys_, fld)
        for j in block_range(fld):
            vj = dyadic_block(fld, j).l2_norm()
            wj = dyadic_block(w, j).l2_norm()
            bound = const * vj if j > 0 else const * 2.0 ** (-j) * vj
            assert wj <= bound * (1 + 1e-12) + 1e-300


@pytest.mark.parametrize("label", [c[0] for c in cases.CASES])
def test_functional_nonincreasing(label):
    table = cases.functional_table(label)
    assert cases.monotone_violation(table.columns["functional"]) <= cases.MONOTONE_SLACK


def test_mhd_divergence_of_b_preserved():
    mhd = cases.system("mhd")
    # band below the Nyquist index, where a real field can hold any divergence-free B
    fld = initial_data("random-band", mhd, 1.0, 8, seed=5, kmax=3.0)
    xi = fld.xi
    c = fld.coeffs.copy()
    b = c[5:8]
    r2 = np.where(fld.radius > 0, fld.radius**2, 1.0)
    div = sum(xi[..., a] * b[a] for a in range(3))
    c[5:8] = b - np.moveaxis(xi, -1, 0) * div / r2
    fld = fld.with_coeffs(c)
    traj = evolve_linear(mhd, fld, [0.0, 0.5, 2.0])
    scale = np.max(np.abs(fld.coeffs))
    for _, f in traj:
        div = sum(xi[..., a] * f.coeffs[5 + a] for a in range(3))
        assert np.max(np.abs(div)) <= 1e-13 * scale


def test_fit_exact_power_law():
    t = np.geomspace(1, 100, 20)
    fit = fit_decay_exponent(np.column_stack([t, 3 * t**-0.75]), (2, 50))
    assert fit.exponent == pytest.approx(-0.75, abs=1e-12)
    assert fit.n_points == int(np.sum((t >= 2) & (t <= 50)))
    # row layout is accepted too
    assert fit_decay_exponent(np.vstack([t, t**-1.0]), (1, 100)).exponent == pytest.approx(-1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_fit_recovers_any_exponent(p, amp):
    t = np.geomspace(0.5, 40, 15)
    assert fit_decay_exponent(np.column_stack([t, amp * t**p]), (0.5, 40)).exponent == pytest.approx(p, abs=1e-9)


def test_fit_degenerate():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    with pytest.raises(DegenerateWindow):
        fit_decay_exponent(np.column_stack([t, t]), (3.5, 10))
    with pytest.raises(DegenerateWindow):
        fit_decay_exponent(np.column_stack([t, 0 * t]), (1, 4))
    with pytest.raises(DegenerateWindow):
        fit_decay_exponent(np.column_stack([t, t]), (4, 1))


def test_decay_window_ns(ns2):
    # rate(8/64) = (1/8)^2 for NS at low frequency, so T = 2 / (1/64) = 128
    lo, hi = decay_window(ns2, 64.0)
    assert hi == pytest.approx(128.0, rel=1e-9) and lo == pytest.approx(32.0, rel=1e-9)


def test_initial_data_presets(toy, ns2):
    z = initial_data("zero", ns2, 1.0, 8)
    assert z.l2_norm() == 0
    g = initial_data("gaussian", ns2, 4.0, 32, width=1.0, amplitudes=[1.0, 0.0, 2.0])
    phys = g.to_physical()
    assert np.max(np.abs(phys[1])) == 0 and np.max(phys[2]) == pytest.approx(2 * np.max(phys[0]))
    r1 = initial_data("random-band", ns2, 2.0, 16, seed=9, amplitude=0.5, kmin=1.0, kmax=3.0)
    r2 = initial_data("random-band", ns2, 2.0, 16, seed=9, amplitude=0.5, kmin=1.0, kmax=3.0)
    np.testing.assert_array_equal(r1.coeffs, r2.coeffs)
    assert r1.l2_norm() == pytest.approx(0.5)
    live = np.any(np.abs(r1.coeffs) > 0, axis=0)
    assert np.all((r1.radius[live] >= 1.0) & (r1.radius[live] <= 3.0))
    s = initial_data("single-mode", toy, 1.0, 16, component=1, wavevector=[2], amplitude=3.0)
    assert s.l2_norm() == pytest.approx(3.0 * math.sqrt(math.pi))
    with pytest.raises(ValueError):
        initial_data("tophat", toy, 1.0, 8)


def test_nonlinear_zero_stays_zero(ns2):
    res = evolve_nonlinear_ns(ns2, initial_data("zero", ns2, 1.0, 16), [0.5])
    assert res.trajectory.fields[0].l2_norm() == 0.0


def test_nonlinear_small_data_tracks_linear(ns2):
    amp = 1e-4
    f0 = initial_data("random-band", ns2, 1.0, 16, seed=2, amplitude=amp, kmax=4.0)
    times = [0.25, 0.5]
    lin = evolve_linear(ns2, f0, times)
    non = evolve_nonlinear_ns(ns2, f0, times, dt=2e-3)
    for a, b in zip(lin.fields, non.trajectory.fields):
        assert (a - b).l2_norm() <= 1e-2 * amp


def test_nonlinear_bounded_and_guards(ns2):
    full, reduced = cases.params("ns2")
    f0 = initial_data("random-band", ns2, 1.0, 16, seed=4, amplitude=0.05, kmax=4.0)
    res = evolve_nonlinear_ns(ns2, f0, np.linspace(0.1, 1.0, 5), params=full, reduced_params=reduced)
    assert res.bounded and res.steps > 0
    with pytest.raises(CflViolation):
        evolve_nonlinear_ns(ns2, f0, [0.1], dt=1.0)
    with pytest.raises(BlowupDetected):
        evolve_nonlinear_ns(ns2, f0, [0.1], growth_limit=0.5)
    with pytest.raises(SystemShapeError):
        evolve_nonlinear_ns(cases.system("toy1d"), initial_data("zero", cases.system("toy1d"), 1.0, 8), [0.1])
