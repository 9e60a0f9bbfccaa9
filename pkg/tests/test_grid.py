import numpy as np
import pytest

from fracshe.grid import (GridSpec, circular_convolve, forward_transform, inverse_transform,
                          parseval_check, spectral_multiply)


def test_spacing_and_frequencies_are_consistent():
    g = GridSpec(2, 3.0, 64)
    assert g.spacing * g.points == pytest.approx(2 * g.half_length, rel=0, abs=1e-15)
    k = np.sort(g.axis_frequencies)
    assert k[0] == pytest.approx(-np.pi * 32 / 3.0)
    # symmetric up to the Nyquist mode
    assert set(np.round(-k[1:], 12)) == set(np.round(k[1:], 12))


@pytest.mark.parametrize("bad", [(3, 1.0, 8), (1, -1.0, 8), (1, 1.0, 12), (1, np.inf, 8)])
def test_invalid_grids_rejected(bad):
    with pytest.raises(ValueError):
        GridSpec(*bad)


def test_constant_field_transform(grid1):
    c = forward_transform(grid1, np.full(grid1.shape, 2.5))
    assert c[0].real == pytest.approx(2.5 * 40.0, rel=1e-13)
    assert np.max(np.abs(c[1:])) < 1e-10


def test_single_mode_lands_on_first_frequency(grid1):
    f = np.cos(np.pi * grid1.nodes / grid1.half_length)
    c = np.abs(forward_transform(grid1, f))
    top = np.sort(np.argsort(c)[-2:])
    assert np.allclose(np.abs(grid1.axis_frequencies[top]), np.pi / grid1.half_length)


def test_gaussian_matches_closed_form_transform(grid1):
    c = forward_transform(grid1, np.exp(-grid1.nodes ** 2))
    xi = grid1.axis_frequencies
    exact = np.sqrt(np.pi) * np.exp(-xi ** 2 / 4)
    sel = exact > 1e-3
    assert np.max(np.abs(c[sel].real - exact[sel]) / exact[sel]) < 1e-8


def test_gaussian_2d_transform():
    g = GridSpec(2, 12.0, 128)
    X, Y = g.coords()
    c = forward_transform(g, np.exp(-(X ** 2 + Y ** 2)))
    exact = np.pi * np.exp(-g.wave_norm ** 2 / 4)
    assert np.max(np.abs(c - exact)) < 1e-10


def test_round_trip_many_random_fields(rng):
    for g in (GridSpec(1, 5.0, 64), GridSpec(2, 5.0, 16)):
        f = rng.standard_normal((1000,) + g.shape)
        back = inverse_transform(g, forward_transform(g, f))
        assert np.max(np.abs(back - f)) / np.max(np.abs(f)) < 1e-12


def test_zero_and_delta_spectra(grid1):
    assert np.all(inverse_transform(grid1, np.zeros(grid1.shape)) == 0)
    c = np.zeros(grid1.shape, complex)
    c[0] = 40.0
    assert np.allclose(inverse_transform(grid1, c), 1.0, atol=1e-13)


def test_linearity(rng, grid1):
    f, h = rng.standard_normal((2,) + grid1.shape)
    a, b = 1.7, -0.3
    lhs = forward_transform(grid1, a * f + b * h)
    rhs = a * forward_transform(grid1, f) + b * forward_transform(grid1, h)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))
    C, D = forward_transform(grid1, f), forward_transform(grid1, h)
    inv = inverse_transform(grid1, a * C + b * D)
    assert np.max(np.abs(inv - (a * f + b * h))) < 1e-12 * np.max(np.abs(inv))


def test_non_finite_and_non_hermitian_rejected(grid1, rng):
    f = np.ones(grid1.shape)
    f[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        forward_transform(grid1, f)
    c = forward_transform(grid1, rng.standard_normal(grid1.shape))
    c[5] += 3j
    with pytest.raises(ValueError, match="Hermitian"):
        inverse_transform(grid1, c)


def test_parseval(rng, grid1):
    assert parseval_check(grid1, np.exp(-grid1.nodes ** 2)) < 1e-10
    assert parseval_check(grid1, np.zeros(grid1.shape)) == 0.0
    smooth = np.real(np.fft.ifft(np.fft.fft(rng.standard_normal(grid1.shape)) * np.exp(-grid1.wave_norm)))
    assert parseval_check(grid1, smooth) < 1e-10
    assert parseval_check(GridSpec(2, 4.0, 32), rng.standard_normal((32, 32))) < 1e-10


def test_convolution_routes_agree(grid1):
    f = np.exp(-grid1.nodes ** 2)
    direct = circular_convolve(grid1, f, f)
    # the transform of exp(-x^2) squared, applied as a multiplier
    mult = np.sqrt(np.pi) * np.exp(-np.abs(np.fft.rfftfreq(grid1.points, grid1.spacing) * 2 * np.pi) ** 2 / 4)
    via_mult = spectral_multiply(grid1, f, mult)
    exact = np.sqrt(np.pi / 2) * np.exp(-grid1.nodes ** 2 / 2)
    assert np.max(np.abs(direct - exact)) < 1e-10
    assert np.max(np.abs(via_mult - exact)) < 1e-10
