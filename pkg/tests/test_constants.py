import numpy as np
import pytest

from fracshe import constants
from fracshe.grid import GridSpec
from fracshe.noise import CovarianceModel
from fracshe.solver import SigmaSpec


@pytest.mark.parametrize("dim,beta,expected", [(1, 1.0, 2.0), (1, 0.5, 7.54247), (2, 2.0, np.pi)])
def test_k_beta_reference_values(dim, beta, expected):
    assert constants.k_beta(dim, beta).value == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("dim,beta", [(1, 0.5), (1, 1.0), (2, 1.0), (2, 2.0)])
def test_k_beta_routes_agree(dim, beta):
    rep = constants.k_beta(dim, beta)
    assert rep.agrees, rep
    if rep.closed_form is not None:
        assert rep.value == pytest.approx(rep.closed_form, rel=1e-8)


def test_k_beta_domain():
    with pytest.raises(ValueError):
        constants.k_beta(1, 1.5)
    with pytest.raises(ValueError):
        constants.k_beta(2, 0.0)


def test_theta_of_constant_fields():
    f = np.ones((10, 64))
    val, se = constants.estimate_theta(f, SigmaSpec.linear(2.0, 1.0))
    assert val == pytest.approx(3.0)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_psi_of_constant_fields_and_lag_shape():
    f = np.full((4, 8, 8), 2.0)
    m, se = constants.estimate_psi(f, SigmaSpec.linear(1.0), [(0, 0), (1, 2)], grid_dim=2)
    assert np.allclose(m, 4.0) and np.allclose(se, 0.0)
    with pytest.raises(ValueError):
        constants.estimate_psi(f, SigmaSpec.linear(1.0), [1], grid_dim=2)


def test_effective_sample_size_for_white_fields(rng):
    s = rng.standard_normal((50, 512))
    assert constants.effective_sample_size(s) == pytest.approx(512, rel=0.2)
    smooth = np.cumsum(rng.standard_normal((50, 512)), axis=1)
    assert constants.effective_sample_size(smooth) < 100


def test_nu_squared_white_noise_is_second_moment():
    f = np.full((5, 32), 1.0)
    g = GridSpec(1, 4.0, 32)
    v, se = constants.estimate_nu_squared(f, SigmaSpec.linear(1.5), CovarianceModel.white(1), g)
    assert v == pytest.approx(2.25) and se == pytest.approx(0.0)
    with pytest.raises(ValueError):
        constants.estimate_nu_squared(f, SigmaSpec.linear(1.0), CovarianceModel.riesz(1, 0.5), g)


def test_rho_for_unit_sigma():
    riesz = CovarianceModel.riesz(1, 0.5)
    assert constants.rho(riesz, 1.0) == pytest.approx(np.sqrt(7.54247), rel=1e-5)
    assert constants.rho(riesz, 1.0) == pytest.approx(2.7464, abs=1e-4)
    assert constants.rho(CovarianceModel.white(1), None, 1.0) == pytest.approx(np.sqrt(2))
    with pytest.raises(ValueError):
        constants.rho_squared(CovarianceModel.white(1), 1.0)


def test_limit_constants_time_integral_and_ordering():
    t = np.linspace(0, 1, 5)
    lc = constants.LimitConstants(CovarianceModel.white(1), 2.0, t, np.ones(5), np.zeros(5),
                                  nu=np.ones(5), nu_se=np.zeros(5))
    assert lc.integrated_rho_squared(0.5) == pytest.approx(1.0)
    assert lc.integrated_rho_squared(0.3) == pytest.approx(0.6)
    assert lc.nu_dominates_theta()
    bad = constants.LimitConstants(CovarianceModel.white(1), 2.0, t, np.full(5, 2.0), np.zeros(5),
                                   nu=np.ones(5), nu_se=np.zeros(5))
    assert not bad.nu_dominates_theta()
    with pytest.raises(ValueError):
        lc.integrated_rho_squared(2.0)
    assert set(lc.to_dict()) >= {"k_beta", "theta", "nu", "rho"}


def test_moment_series_theta_squared_is_debiased(rng):
    x = 1.0 + rng.standard_normal((1, 2000))
    ms = constants.MomentSeries(np.array([0.0]), x)
    est, se = ms.theta_squared()
    assert abs(est[0] - 1.0) < 3 * se[0]
    with pytest.raises(ValueError):
        ms.nu_squared()
