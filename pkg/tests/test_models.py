import numpy as np
import pytest

from pardiff.errors import AssumptionGViolation, ModelUnknown, ParameterViolation
from pardiff.models import (MODEL_REGISTRY, MhdParams, PressureLaw, ThermoClosure, TransportCoeffs, build_model,
                            check_assumption_G, ideal_gas, make_barotropic_ns, make_mhd, perturbation_samples)
from pardiff.symbols import evaluate_symbols


def test_registry_keys():
    assert {"toy1d", "ns-baro", "mhd"} <= set(MODEL_REGISTRY)
    with pytest.raises(ModelUnknown):
        build_model("euler")


def test_pressure_law():
    law = PressureLaw(3.0, 1.4)
    assert law.p(2.0) == pytest.approx(3.0 * 2.0**1.4)
    assert law.dp(2.0) == pytest.approx(3.0 * 1.4 * 2.0**0.4)


@pytest.mark.parametrize("kwargs", [{"mu": 0.0}, {"mu": 1.0, "lam": -2.5}, {"rho_ref": -1.0},
                                    {"pressure_law": PressureLaw(-1.0, 2.0)}])
def test_ns_parameter_violations(kwargs):
    with pytest.raises(ParameterViolation):
        make_barotropic_ns(**kwargs)


def test_ns_density_dependent_viscosity():
    ns = make_barotropic_ns(d=2, mu=lambda r: 2 * r, lam=lambda r: -r, rho_ref=1.5)
    z = evaluate_symbols(ns, np.array([1.0, 0.0])).z_omega
    # mu = 3, lam = -1.5: Z(e1) = diag(2 mu + lam, mu)
    np.testing.assert_allclose(z, np.diag([4.5, 3.0]))


def test_mhd_z_at_e1(mhd):
    z = evaluate_symbols(mhd, np.array([1.0, 0.0, 0.0])).z_omega
    np.testing.assert_allclose(z, np.diag([3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]))


def test_mhd_s0_values(mhd):
    # ideal gas at rho = theta = 1, mu0 = 1: S0 = I
    np.testing.assert_allclose(mhd.frozen[0], np.eye(8))


def test_mhd_symmetric_convection(mhd):
    s_a = mhd.frozen[1]
    for m in s_a:
        np.testing.assert_allclose(m, m.T)


def test_assumption_G_items():
    rep = check_assumption_G(MhdParams())
    assert rep.passed
    assert [i.name for i in rep.items] == ["G1", "G2", "G3"]
    bad = MhdParams(transport=TransportCoeffs(sigma=-1.0))
    assert [f.name for f in check_assumption_G(bad).failures()] == ["G3"]


def test_mhd_rejects_bad_thermodynamics():
    thermo = ThermoClosure(p=lambda r, t: -r * t, e=lambda r, t: t)
    with pytest.raises(AssumptionGViolation) as exc:
        make_mhd(thermo)
    assert exc.value.item == "G1"


def test_thermo_finite_difference_fallback():
    closure = ThermoClosure(p=lambda r, t: r * r * t, e=lambda r, t: 2 * t)
    assert closure.dp_rho(1.5, 2.0) == pytest.approx(2 * 1.5 * 2.0, rel=1e-8)
    assert closure.dp_theta(1.5, 2.0) == pytest.approx(1.5**2, rel=1e-8)
    assert closure.de_theta(1.5, 2.0) == pytest.approx(2.0, rel=1e-8)
    exact = ideal_gas()
    assert exact.dp_rho(2.0, 3.0) == 3.0


def test_perturbation_samples():
    u = np.array([1.0, 0.0])
    s = perturbation_samples(u, rel=0.1, points=3)
    assert len(s) == 9
    np.testing.assert_allclose(sorted({x[1] for x in s}), [-0.1, 0.0, 0.1])
    thin = perturbation_samples(np.ones(6), points=3, max_samples=100)
    assert len(thin) <= 100
