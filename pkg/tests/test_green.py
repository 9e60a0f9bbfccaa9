import numpy as np
import pytest

from fracshe import green
from fracshe.grid import GridSpec


def _at_origin(k):
    g = k.grid
    return k.values[(g.origin_index,) * g.dim]


def test_heat_kernel_value_at_origin():
    k = green.evaluate_kernel(GridSpec(1, 32.0, 4096), 2.0, 1.0)
    assert _at_origin(k) == pytest.approx((4 * np.pi) ** -0.5, abs=1e-6)


def test_poisson_kernel_value_at_origin():
    g = green.kernel_grid(1, 1.0, 1.0)
    k = green.evaluate_kernel(g, 1.0, 1.0, deperiodize=True)
    assert _at_origin(k) == pytest.approx(1 / np.pi, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("dim", [1, 2])
def test_unit_mass_symmetry_positivity(alpha, dim):
    g = green.kernel_grid(dim, alpha, 1.0, points=1024 if dim == 1 else 256)
    k = green.evaluate_kernel(g, alpha, 1.0)
    assert abs(k.mass - 1) < 1e-4
    assert k.symmetry_error() < 1e-10
    assert k.min_relative > -1e-6


@pytest.mark.parametrize("alpha,t", [(0.0, 1.0), (2.5, 1.0), (1.5, 0.0), (1.5, -1.0)])
def test_invalid_parameters_rejected(alpha, t):
    with pytest.raises(ValueError):
        green.evaluate_kernel(GridSpec(1, 8.0, 64), alpha, t)


def test_semigroup_heat_closed_form():
    g = GridSpec(1, 20.0, 2048)
    res = green.check_semigroup(2.0, 0.5, 0.5, g)
    assert res.detail["max_abs_error"] < 1e-8
    assert res.reliable


def test_semigroup_fractional():
    g = green.kernel_grid(1, 1.5, 0.5)
    assert green.check_semigroup(1.5, 0.5, 0.5, g).passed


def test_semigroup_needs_positive_times():
    with pytest.raises(ValueError):
        green.check_semigroup(1.5, 1.0, 0.0, GridSpec(1, 8.0, 64))


def test_semigroup_flags_under_resolution():
    res = green.check_semigroup(1.5, 1e-3, 1e-3, GridSpec(1, 64.0, 256))
    assert not res.reliable


def test_scaling_identity_at_origin():
    g = GridSpec(1, 64.0, 8192)
    g16 = _at_origin(green.evaluate_kernel(g, 2.0, 16.0))
    g1 = _at_origin(green.evaluate_kernel(g, 2.0, 1.0))
    assert g16 == pytest.approx(16 ** -0.5 * g1, rel=1e-10)


def test_scaling_cauchy_matches_closed_form():
    g = green.kernel_grid(1, 1.0, 4.0)
    k = green.evaluate_kernel(g, 1.0, 4.0, deperiodize=True)
    x = g.nodes
    sel = np.abs(x) < g.half_length / 2
    exact = 0.25 * green.closed_form_kernel(1.0, 1.0, 1, x[sel] / 4)
    assert np.max(np.abs(k.values[sel] - exact)) / exact.max() < 1e-6
    assert green.check_scaling(1.0, 4.0, g).passed


def test_scaling_fractional_2d():
    g = green.kernel_grid(2, 1.5, 2.0, points=512)
    res = green.check_scaling(1.5, 2.0, g)
    assert res.value < 1e-4


@pytest.mark.parametrize("alpha,t,dim", [(2.0, 0.1, 1), (1.0, 10.0, 1), (2.0, 1.0, 2), (1.0, 1.0, 2)])
def test_closed_forms(alpha, t, dim):
    g = green.kernel_grid(dim, alpha, t, points=4096 if dim == 1 else 512)
    assert green.check_closed_form(alpha, t, g).value < 1e-6


def test_tail_sandwich_rejects_gaussian():
    with pytest.raises(ValueError, match="alpha < 2"):
        green.tail_bound_ratio(2.0, GridSpec(1, 64.0, 4096))


def test_tail_sandwich_requires_range():
    with pytest.raises(ValueError):
        green.tail_bound_ratio(1.5, GridSpec(1, 16.0, 1024))


def test_tail_sandwich_fractional():
    res = green.tail_bound_ratio(1.5, GridSpec(1, 64.0, 8192))
    assert res.detail["min_ratio"] > 0.01
    assert res.value < 50
    assert res.reliable


def test_cauchy_tail_ratio_tends_to_one_over_pi():
    g = GridSpec(1, 256.0, 32768)
    k = green.evaluate_kernel(g, 1.0, 1.0, deperiodize=True)
    x = g.nodes
    j = np.argmin(np.abs(x - 100.0))
    assert k.values[j] * (1 + x[j]) ** 2 == pytest.approx(1 / np.pi, rel=0.03)


def test_kappa_arithmetic():
    assert green.kappa_exponent(1, 1.5, 1.2) == pytest.approx(2 / 9)


def test_two_q_window_is_open():
    with pytest.raises(ValueError, match="2d/\\(2d - alpha\\)"):
        green.check_two_q_window(1, 1.5, 2 / (2 - 1.5))
    with pytest.raises(ValueError, match="2q > 1"):
        green.check_two_q_window(1, 1.5, 1.0)
    with pytest.raises(ValueError):
        green.fractional_power_integral(1.5, 0.5 * 2.5, 1.0, GridSpec(1, 64.0, 1024))


def test_fractional_power_integral_scales_like_t_power():
    a, two_q = 1.5, 1.2
    kappa = green.kappa_exponent(1, a, two_q)
    vals = []
    for t in (1.0, 4.0):
        g = green.kernel_grid(1, a, t, scaled_half_length=64.0)
        vals.append(green.fractional_power_integral(a, two_q / 2, t, g) / t ** (kappa / 2))
    assert vals[0] / vals[1] == pytest.approx(1.0, abs=0.01)


def test_ball_weights_volume():
    g = GridSpec(1, 8.0, 256)
    assert np.sum(green.ball_weights(g, 2.3)) * g.spacing == pytest.approx(4.6, rel=1e-12)
    g2 = GridSpec(2, 8.0, 256)
    assert np.sum(green.ball_weights(g2, 3.0)) * g2.cell_volume == pytest.approx(9 * np.pi, rel=1e-3)


def test_radial_quadrature_matches_closed_form():
    r = np.array([0.0, 0.5, 2.0, 7.0])
    for alpha, dim in ((2.0, 1), (1.0, 1), (1.0, 2), (2.0, 2)):
        q = green.radial_kernel_quadrature(alpha, 1.3, dim, r)
        exact = green.closed_form_kernel(alpha, 1.3, dim, r)
        assert np.allclose(q, exact, rtol=1e-6, atol=1e-12)
