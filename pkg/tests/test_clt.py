import numpy as np
import pytest

from fracshe import clt
from fracshe.grid import GridSpec
from fracshe.noise import CovarianceModel
from fracshe.solver import SigmaSpec, SolverConfig

WHITE = CovarianceModel.white(1)
RIESZ = CovarianceModel.riesz(1, 0.5)
TIMES = tuple(i / 16 for i in range(1, 9))


@pytest.fixture(scope="module")
def additive_ensemble():
    cfg = SolverConfig(1.5, 1 / 128, 0.5, GridSpec(1, 16.0, 256), SigmaSpec.constant(1.0), WHITE,
                       replicas=400, seed=303)
    return clt.run_ensemble(cfg, clt.geometric_radii(8.0, 5), TIMES)


def test_spatial_average_of_constant_fields():
    g = GridSpec(1, 16.0, 256)
    assert clt.spatial_average(np.ones(g.shape), g, 3.0) == pytest.approx(0.0)
    assert clt.spatial_average(np.full(g.shape, 2.0), g, 3.1) == pytest.approx(6.2, rel=1e-12)
    g2 = GridSpec(2, 8.0, 128)
    two = np.full((3,) + g2.shape, 2.0)
    assert np.allclose(clt.spatial_average(two, g2, 2.0), 4 * np.pi, rtol=1e-3)


def test_truncation_rule():
    g = GridSpec(1, 16.0, 256)
    assert clt.truncation_radius(g, 1.5, 0.5) == pytest.approx(16 - 4 * 0.5 ** (2 / 3))
    with pytest.raises(ValueError, match="truncation-safe"):
        clt.spatial_average(np.ones(g.shape), g, 14.0, alpha=1.5, T=0.5)
    with pytest.raises(ValueError):
        clt.spatial_average(np.ones(g.shape), g, 0.0)


def test_geometric_radii_and_slope():
    r = clt.geometric_radii(64.0)
    assert len(r) == 7 and r[-1] == 64.0 and r[0] == pytest.approx(8.0)
    assert clt.ols_slope(np.log(r), 2 * np.log(r) + 1) == pytest.approx(2.0)


def test_null_calibration_passes():
    cal = clt.null_calibration(2000, trials=40)
    assert cal.passed
    assert cal.ordering_ok


def test_distances_detect_non_gaussian(rng):
    n = 4000
    floors = clt.distance_floors(n)
    z = rng.exponential(size=n)
    assert clt.ks_distance(z) > 3 * floors["ks"]
    assert clt.tv_distance(z) > floors["tv"]


def test_tightness_same_time_is_zero():
    assert clt.tightness_kernel(RIESZ, 1.5, 4.0, 0.5, 0.5) == 0.0


def test_tightness_radius_doubling_is_stable():
    rep = clt.tightness_check(RIESZ, 1.5, [8.0, 16.0], [(0.5, 0.25), (1.0, 0.5)])
    assert rep.doubling_gap < 0.25
    assert rep.passed


def test_additive_ball_covariance_large_radius_limit():
    # R^{-1} Var G_R(t) -> |B_1| t for white noise, d = 1
    R = 200.0
    v = clt.additive_ball_covariance(WHITE, 1.5, R, 0.5)
    assert v / R == pytest.approx(1.0, rel=0.01)


def test_additive_ball_covariance_is_symmetric_in_times():
    a = clt.additive_ball_covariance(RIESZ, 1.5, 4.0, 0.5, 0.25)
    b = clt.additive_ball_covariance(RIESZ, 1.5, 4.0, 0.25, 0.5)
    assert a == pytest.approx(b) and a > 0


def test_ensemble_shapes_and_subset(additive_ensemble):
    s = additive_ensemble
    assert s.values.shape == (400, 8, 5)
    assert s.additive
    assert s.time_index(0.25) == 3
    with pytest.raises(ValueError):
        s.time_index(0.3)
    half = s.subset(slice(0, 200))
    assert half.n_replicas == 200
    both = clt.EnsembleSamples.concatenate([half, s.subset(slice(200, None))])
    assert np.array_equal(both.values, s.values)


def test_ensemble_rejects_off_lattice_times():
    cfg = SolverConfig(1.5, 1 / 128, 0.5, GridSpec(1, 16.0, 256), SigmaSpec.constant(1.0), WHITE)
    with pytest.raises(ValueError):
        clt.run_ensemble(cfg, [2.0], [0.3001])


def test_additive_variances_match_oracle(additive_ensemble):
    vs = clt.variance_scaling(additive_ensemble, 0.5, n_boot=200, oracle=True)
    assert vs.oracle_passed, vs.oracle_z()
    assert vs.target == 1.0
    assert vs.notes


def test_limiting_covariance_additive_target(additive_ensemble):
    res = clt.limiting_covariance(additive_ensemble, 0.5, n_boot=200)
    # |B_1| nu^2 t = 2 * 1 * 0.5 exactly, since sigma is constant
    assert res.target == pytest.approx(1.0, abs=1e-12)
    assert res.passed


def test_fclt_additive_target(additive_ensemble):
    res = clt.fclt(additive_ensemble, n_boot=100)
    t = np.asarray(TIMES)
    assert np.allclose(res.target, 2 * np.minimum.outer(t, t), atol=1e-12)
    assert res.gate_normality
    assert res.passed


def test_fclt_needs_eight_snapshots(additive_ensemble):
    with pytest.raises(ValueError):
        clt.fclt(additive_ensemble, times=TIMES[:4])


def test_mardia_on_gaussian_sample(rng):
    x = rng.standard_normal((2000, 3))
    stat, p = clt.mardia_skewness_test(x)
    assert p > 0.001
    stat2, p2 = clt.mardia_skewness_test(rng.exponential(size=(2000, 3)))
    assert p2 < 1e-6
