import numpy as np
import pytest

from fracshe import noise
from fracshe.grid import GridSpec
from fracshe.noise import CovarianceModel

WHITE = CovarianceModel.white(1)
RIESZ = CovarianceModel.riesz(1, 0.5)


def test_riesz_spectral_constant():
    assert RIESZ.riesz_constant == pytest.approx(np.sqrt(2 * np.pi), rel=1e-10)
    assert RIESZ.spectral_density(1.0) == pytest.approx(np.sqrt(2 * np.pi))


def test_white_model_rules():
    assert CovarianceModel.white(1).violations(1.5) == []
    v = CovarianceModel.white(2).violations(1.5)
    assert any("case (ii) requires d = 1" in m for m in v)
    assert any("alpha > 1" in m for m in CovarianceModel.white(1).violations(1.0))


def test_riesz_model_rules():
    assert RIESZ.violations(1.5) == []
    assert any("case (i) requires" in m for m in CovarianceModel.riesz(1, 1.5).violations(1.5))
    assert any("case (i) requires" in m for m in CovarianceModel.riesz(1, 1.0).violations(0.8))


def test_point_mass_rules():
    asym = CovarianceModel.riesz(1, 0.5, [(1.0, (0.0,)), (0.3, (1.0,))])
    assert any("symmetric" in m for m in asym.violations(1.5))
    heavy = CovarianceModel.riesz(1, 0.5, [(0.2, (0.0,)), (0.3, (1.0,)), (0.3, (-1.0,))])
    assert any("origin weight" in m for m in heavy.violations(1.5))
    ok = CovarianceModel.riesz(1, 0.5, [(1.0, (0.0,)), (0.3, (1.0,)), (0.3, (-1.0,))])
    assert ok.violations(1.5) == []
    assert ok.mu_mass == pytest.approx(1.6)


def test_unknown_variant_and_density():
    with pytest.raises(ValueError):
        CovarianceModel("pink")
    with pytest.raises(ValueError):
        CovarianceModel.integrable(1, "nope")


@pytest.mark.parametrize("model", [WHITE, RIESZ, CovarianceModel.integrable(2, "gaussian"),
                                   CovarianceModel.riesz(2, 0.7, [(1.0, (0, 0)), (0.5, (1, 0)), (0.5, (-1, 0))])])
def test_dict_round_trip(model):
    assert CovarianceModel.from_dict(model.to_dict()) == model


def test_upsilon_white_heat_closed_form():
    assert noise.dalang_upsilon(WHITE, 2.0, 1.0) == pytest.approx(1 / np.sqrt(8), rel=1e-4)


def test_upsilon_decreasing_and_vanishing():
    lams = [0.1, 1.0, 10.0, 100.0]
    vals = [noise.dalang_upsilon(RIESZ, 1.5, lam) for lam in lams]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert noise.dalang_upsilon(RIESZ, 1.5, 1e6) < 1e-2 * vals[1]


def test_upsilon_rejects_divergent_cases():
    with pytest.raises(ValueError):
        noise.dalang_upsilon(WHITE, 1.0, 1.0)
    with pytest.raises(ValueError):
        noise.dalang_upsilon(WHITE, 1.5, 0.0)


def test_verify_dalang():
    assert noise.verify_dalang(WHITE, 1.5)[0]
    assert not noise.verify_dalang(WHITE, 1.0)[0]
    assert noise.verify_dalang(RIESZ, 1.5)[0]
    assert not noise.verify_dalang(CovarianceModel.riesz(1, 0.9), 0.8)[0]
    assert noise.verify_dalang(CovarianceModel.integrable(2, "gaussian"), 1.0)[0]


def test_correlation_time_white_heat():
    assert noise.correlation_time_spectral(WHITE, 2.0, 1.0) == pytest.approx(0.199471, abs=1e-6)
    assert noise.correlation_time_kernel(WHITE, 2.0, 1.0) == pytest.approx(0.199471, abs=1e-6)


def test_correlation_time_decreasing():
    vals = [noise.correlation_time_spectral(RIESZ, 1.5, t) for t in (0.1, 0.5, 1.0, 4.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        noise.correlation_time_spectral(RIESZ, 1.5, 0.0)


@pytest.mark.parametrize("model", [RIESZ, CovarianceModel.integrable(1, "gaussian")])
def test_correlation_time_routes_agree(model):
    a = noise.correlation_time_spectral(model, 1.5, 0.7)
    b = noise.correlation_time_physical(model, 1.5, 0.7)
    assert a == pytest.approx(b, rel=5e-3)


def test_integrated_correlation_white_heat():
    # int_0^t (8 pi s)^{-1/2} ds = sqrt(t / (2 pi))
    assert noise.integrated_correlation(WHITE, 2.0, 0.5) == pytest.approx(np.sqrt(0.5 / (2 * np.pi)), rel=1e-4)


def test_replica_streams_are_addressable():
    a = noise.replica_generator(7, 3).standard_normal(5)
    b = noise.replica_generator(7, 3).standard_normal(5)
    c = noise.replica_generator(7, 4).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    g = GridSpec(1, 4.0, 16)
    src = noise.ReplicaNoise(g, 7, [2, 3])
    assert np.array_equal(src.draw()[1], noise.ReplicaNoise(g, 7, [3]).draw()[0])


def test_coarsened_noise_keeps_unit_variance():
    g = GridSpec(1, 8.0, 64)
    c = noise.CoarsenedNoise(noise.ReplicaNoise(g, 1, range(200)), 2)
    x = np.stack([c.draw() for _ in range(20)])
    assert x.var() == pytest.approx(1.0, abs=0.03)


def test_embedded_noise_is_central_block():
    big_g, small_g = GridSpec(1, 8.0, 64), GridSpec(1, 4.0, 32)
    e = noise.EmbeddedNoise(noise.ReplicaNoise(big_g, 5, [0]), small_g)
    full = noise.ReplicaNoise(big_g, 5, [0]).draw()
    assert np.array_equal(e.draw()[0], full[0, 16:48])
    with pytest.raises(ValueError):
        noise.EmbeddedNoise(noise.ReplicaNoise(big_g, 5, [0]), GridSpec(1, 4.0, 64))


def test_sampled_increment_mean_and_variance(rng):
    g = GridSpec(1, 16.0, 256)
    w = noise.sample_noise_increment(g, WHITE, 0.25, rng, size=400)
    assert abs(w.mean()) < 4 * np.sqrt(0.25 / g.spacing / w.size)
    assert w.var() == pytest.approx(0.25 / g.spacing, rel=0.02)
    with pytest.raises(ValueError):
        noise.sample_noise_increment(g, WHITE, 0.0, rng)


def test_bump_pairing_white_closed_form():
    p, q = noise.GaussianBump(1.0), noise.GaussianBump(1.0, 2.0)
    assert noise.bump_pairing(WHITE, p, q) == pytest.approx(np.exp(-1.0) / np.sqrt(4 * np.pi))


@pytest.mark.parametrize("model,grid", [(WHITE, GridSpec(1, 64.0, 1024)), (RIESZ, GridSpec(1, 64.0, 1024))])
def test_sampler_reproduces_pairing_covariance(model, grid):
    chk = noise.validate_sampler(grid, model, n_draws=4000, seed=11)
    assert chk.passed, chk.rows
