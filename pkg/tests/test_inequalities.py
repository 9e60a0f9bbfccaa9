import math

import numpy as np
import pytest

from fracshe import inequalities as ineq
from fracshe.grid import GridSpec
from fracshe.noise import CovarianceModel
from fracshe.solver import SigmaSpec, SolverConfig

WHITE = CovarianceModel.white(1)
RIESZ = CovarianceModel.riesz(1, 0.5)
G1 = ineq.TestFunction("gaussian", (1.0, 0.0))


def test_zero_functions_give_zero_ratio():
    z = ineq.TestFunction("zero")
    row = ineq.check_convolution_inequality(WHITE, z, z, 1.0, 1.5, GridSpec(1, 16.0, 256))
    assert row["lhs"] == 0 and row["ratio"] == 0


def test_white_gaussian_pairing():
    row = ineq.check_convolution_inequality(WHITE, G1, G1, 1.0, 1.5, GridSpec(1, 16.0, 512))
    assert row["lhs"] == pytest.approx(1 / (2 * np.sqrt(np.pi)), abs=1e-5)
    # for white noise with 2q = 2 the bound is Cauchy-Schwarz, so the ratio is at most one
    assert row["ratio"] <= 1 + 1e-10


def test_convolution_window_is_enforced():
    with pytest.raises(ValueError):
        ineq.check_convolution_inequality(RIESZ, G1, G1, 2.0, 1.5, GridSpec(1, 16.0, 256))


def test_admissible_exponents():
    assert ineq.admissible_two_q(RIESZ, 1.5) == pytest.approx(2.0)
    assert ineq.admissible_two_q(CovarianceModel.riesz(2, 1.0), 1.5) == pytest.approx(2.0)
    assert ineq.admissible_two_q(WHITE, 1.5) == 2.0


def test_default_battery_size():
    assert len(ineq.default_battery(1, 1.5, 2.0)) == 20


def test_test_function_registry():
    g = GridSpec(1, 8.0, 256)
    ind = ineq.TestFunction("indicator", (1.0, 0.0)).sample(g)
    assert np.sum(ind) * g.spacing == pytest.approx(2.0)
    with pytest.raises(ValueError):
        ineq.TestFunction("triangle", (1.0, 0.0)).sample(g)


def test_lp_norm_of_indicator():
    g = GridSpec(1, 8.0, 256)
    f = (np.abs(g.nodes) <= 2.0).astype(float)
    assert ineq.lp_norm(g, f, 3.0) == pytest.approx((np.sum(f) * g.spacing) ** (1 / 3.0))


def test_gamma_ratios_vanish():
    r = ineq.gamma_ratio_sequence(2 / 9, 30)
    assert len(r) == 31
    assert np.all(np.diff(r[5:]) < 0)
    assert r[-1] < 0.25 * r[0]
    c = ineq.gamma_series_coefficients(2 / 9, 3)
    assert c[0] == pytest.approx(1 / math.gamma(7 / 9))


def test_richardson_order():
    h = 2.0 ** -np.arange(3)
    assert ineq.richardson_order(1 + h ** 2) == pytest.approx(2.0)


def test_smoothing_parameter_rules():
    with pytest.raises(ValueError, match="beta < alpha"):
        ineq.check_riesz_smoothing(1.5, 0.5, [1.0], [1.0], dim=1)
    with pytest.raises(ValueError):
        ineq.check_riesz_smoothing(1.5, 1.6, [1.0], [1.0], dim=2)


def test_gronwall_rejections():
    g = GridSpec(1, 16.0, 256)
    with pytest.raises(ValueError, match="white noise only"):
        ineq.gronwall_iteration(RIESZ, 1.5, 1.0, 3, g, [0.5])


def test_malliavin_needs_derivative():
    cfg = SolverConfig(1.5, 1 / 64, 0.25, GridSpec(1, 16.0, 256), SigmaSpec.clamped(1, 0, -1, 2), WHITE)
    with pytest.raises(ValueError, match="no derivative"):
        ineq.check_malliavin_bound(cfg, 0.125, [0.25], [0.0])


def test_report_pass_logic():
    rep = ineq.InequalityReport("x", [], 1.0, 1.5)
    assert rep.passed and rep.refinement_change == 1.5
    assert not ineq.InequalityReport("x", [], 1.0, 2.5).passed
    assert not ineq.InequalityReport("x", [], 1.0).stable
    assert not ineq.InequalityReport("x", [], 1.0, 1.0, extra={"checks": {"a": False}}).passed
