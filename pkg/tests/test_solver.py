import numpy as np
import pytest

from fracshe import solver
from fracshe.grid import GridSpec
from fracshe.noise import CovarianceModel
from fracshe.solver import SigmaSpec, SolverConfig

WHITE = CovarianceModel.white(1)
RIESZ = CovarianceModel.riesz(1, 0.5)


def _cfg(sigma, model=WHITE, replicas=8, T=0.25, dt=1 / 64, grid=None, **kw):
    return SolverConfig(1.5, dt, T, grid or GridSpec(1, 16.0, 256), sigma, model,
                        replicas=replicas, seed=3, **kw)


def test_sigma_kinds():
    u = np.array([-1.0, 0.0, 2.0])
    assert np.allclose(SigmaSpec.constant(2)(u), 2)
    assert np.allclose(SigmaSpec.linear(0.5, 1)(u), [0.5, 1, 2])
    assert np.allclose(SigmaSpec.sine(1, 0)(u), np.sin(u))
    assert np.allclose(SigmaSpec.clamped(1, 0, -0.5, 0.5)(u), [-0.5, 0, 0.5])
    assert SigmaSpec.from_dict(SigmaSpec.linear(1, 2).to_dict()) == SigmaSpec.linear(1, 2)
    with pytest.raises(ValueError):
        SigmaSpec("cubic", (1,))
    with pytest.raises(ValueError):
        SigmaSpec.clamped(1, 0, 1, 0)


def test_sigma_lipschitz_probe():
    for s in (SigmaSpec.linear(0.7, 1), SigmaSpec.sine(2, 0), SigmaSpec.clamped(3, 0, -1, 1)):
        assert s.check_lipschitz() <= 1 + 1e-9
    assert SigmaSpec.clamped(1, 0, 0, 1).has_derivative is False


def test_config_violations():
    bad = SolverConfig(1.5, 0.3, 1.0, GridSpec(1, 8.0, 64), SigmaSpec.linear(1), WHITE)
    assert any("integer multiple" in v for v in bad.violations())
    wn2 = SolverConfig(1.5, 0.25, 1.0, GridSpec(2, 8.0, 64), SigmaSpec.linear(1), CovarianceModel.white(2))
    assert any("d = 1" in v for v in wn2.violations())
    with pytest.raises(ValueError):
        _cfg(SigmaSpec.linear(1), output_times=(0.1,)).output_steps()


def test_zero_sigma_keeps_constant_solution():
    traj = solver.simulate(_cfg(SigmaSpec.constant(0.0)))
    assert np.allclose(traj.fields, 1.0, atol=1e-13)


def test_runs_are_deterministic_and_replicas_addressable():
    cfg = _cfg(SigmaSpec.linear(1.0), model=RIESZ)
    a = solver.simulate(cfg).fields
    b = solver.simulate(cfg).fields
    assert np.array_equal(a, b)
    c = solver.simulate(cfg, replica_ids=[5]).fields
    assert np.allclose(c[0], a[5], atol=1e-13)


def test_batching_does_not_change_results():
    cfg = _cfg(SigmaSpec.linear(1.0))
    a = solver.simulate(cfg).fields
    cfg.batch_elements = 3 * 256
    assert np.allclose(solver.simulate(cfg).fields, a, atol=1e-13)


def test_additive_variance_matches_integrated_correlation():
    from fracshe.battery import grid_integrated_correlation
    grid = GridSpec(1, 8.0, 512)
    cfg = _cfg(SigmaSpec.constant(1.0), replicas=200, T=0.5, dt=1 / 128, grid=grid)
    u = solver.simulate(cfg).fields[:, -1]
    # the scheme reproduces the torus mode sum exactly; pooled nodes are correlated, so the band is loose
    target = grid_integrated_correlation(grid, WHITE, 1.5, 0.5)
    assert u.var() == pytest.approx(target, rel=0.05)


def test_mean_is_preserved():
    cfg = _cfg(SigmaSpec.linear(1.0), model=RIESZ, replicas=400, T=0.5, dt=1 / 128)
    u = solver.simulate(cfg).fields[:, -1, 128]
    assert abs(u.mean() - 1) < 4 * u.std(ddof=1) / np.sqrt(u.size)


def test_field_is_stationary_in_space():
    # additive noise keeps the field Gaussian, so the chi-square error bar applies
    cfg = _cfg(SigmaSpec.constant(1.0), replicas=200, T=0.5)
    u = solver.simulate(cfg).fields[:, -1]
    v = u.var(axis=0)
    se = v.mean() * np.sqrt(2 / (u.shape[0] - 1))
    assert np.max(np.abs(v - v.mean())) < 5 * se


def test_observer_sees_output_times():
    seen = []

    class Rec:
        def observe(self, n, t, u, ids):
            seen.append(t)

    cfg = _cfg(SigmaSpec.linear(1.0), output_times=(0.125, 0.25))
    solver.simulate(cfg, observers=[Rec()], keep_fields=False)
    assert seen == [0.125, 0.25]


def test_picard_fixed_point_matches_solver():
    cfg = _cfg(SigmaSpec.linear(1.0), replicas=1, T=0.125, dt=1 / 64, grid=GridSpec(1, 8.0, 64))
    res = solver.picard_iterate(cfg, 12)
    u = solver.simulate(cfg).fields[0, -1]
    assert res.sup_differences[-1] < 1e-10
    assert np.max(np.abs(res.iterates[-1] - u)) < 1e-10
    assert res.converged


def test_picard_rejects_nonaffine_sigma():
    with pytest.raises(ValueError):
        solver.picard_iterate(_cfg(SigmaSpec.sine(1, 1)), 3)


def test_series_first_term_white_heat():
    rep = solver.picard_series_check(WHITE, 2.0, 1.0, 1.0, 1.0, n_max=6)
    assert rep.terms[1, -1] == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-3)
    assert np.all(np.isfinite(rep.partial_sums))


def test_series_cauchy_white_heat():
    assert solver.picard_series_check(WHITE, 2.0, 1.0, 1.0, 1.0).cauchy
    assert solver.picard_series_check(WHITE, 1.5, 1.0, 1.0, 0.5).cauchy


def test_series_terms_vanish_for_riesz():
    rep = solver.picard_series_check(RIESZ, 1.5, 1.0, 2.0, 1.0, n_max=40)
    assert rep.terms[-1].max() < 1e-15 * rep.partial_sums[-1].max()
    assert np.isfinite(rep.growth_rate)


def test_series_trivial_cases():
    rep = solver.picard_series_check(RIESZ, 1.5, 0.0, 1.0, 1.0, n_max=5)
    assert np.allclose(rep.partial_sums[-1], 1.0)
    rep = solver.picard_series_check(WHITE, 2.0, 1.0, 2.0, 0.5, n_max=8)
    small = rep.terms <= 1
    assert np.all(np.sqrt(rep.terms[small]) >= rep.terms[small])
    with pytest.raises(ValueError):
        solver.picard_series_check(RIESZ, 1.5, 1.0, 0.5, 1.0)


def test_malliavin_derivative_constant_sigma_is_deterministic():
    cfg = _cfg(SigmaSpec.constant(0.7), replicas=3, T=0.25)
    D = solver.malliavin_derivative_path(cfg, 0.125, 128, [0.25], [0, 1, 2])
    assert np.allclose(D[0], D[1]) and np.allclose(D[1], D[2])
    assert D[0, 0].sum() * cfg.grid.spacing == pytest.approx(0.7, rel=1e-6)


def test_malliavin_rejects_bad_times():
    cfg = _cfg(SigmaSpec.linear(1.0), replicas=1)
    with pytest.raises(ValueError):
        solver.malliavin_derivative_path(cfg, 0.125, 128, [0.125], [0])
    with pytest.raises(ValueError):
        solver.malliavin_derivative_path(cfg, 0.1, 128, [0.25], [0])
