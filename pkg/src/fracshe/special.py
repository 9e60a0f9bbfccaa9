"""Special functions and closed-form constants used across the package.

Bessel functions of order 0, 1/2 and 1 are implemented here (power series
below ``x = 17``, Hankel asymptotics above) so that the constant routines do
not depend on an external special-function library.
"""
import numpy as np
from scipy.special import gamma

_SWITCH = 17.0
_SERIES_TERMS = 60
_HANKEL_TERMS = 30


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    # sum_k (-1)^k (x/2)^{2k+nu} / (k! Gamma(k+nu+1))
    h = 0.5 * x
    term = h**nu / gamma(nu + 1.0)
    out = term.copy()
    q = -h * h
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + nu))
        out += term
    return out


def _hankel(nu: float, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    a = 1.0
    inv = 1.0 / x
    xp = np.ones_like(x)
    for k in range(1, _HANKEL_TERMS):
        a = a * (mu - (2 * k - 1) ** 2) / (k * 8.0)
        xp = xp * inv
        t = a * xp
        if k % 2 == 1:
            Q += (-1) ** ((k - 1) // 2) * t
        else:
            P += (-1) ** (k // 2) * t
    chi = x - (0.5 * nu + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def _bessel_int_order(nu: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax <= _SWITCH
    out[small] = _series(float(nu), ax[small])
    if np.any(~small):
        out[~small] = _hankel(float(nu), ax[~small])
    if nu % 2 == 1:
        out = np.where(x < 0, -out, out)
    return out


def bessel_j0(x) -> np.ndarray:
    return _bessel_int_order(0, x)


def bessel_j1(x) -> np.ndarray:
    return _bessel_int_order(1, x)


def bessel_j_half(x) -> np.ndarray:
    """``J_{1/2}(x) = sqrt(2/(pi x)) sin x`` for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(2.0 / (np.pi * x)) * np.sin(x)
    return np.where(x == 0, 0.0, out)


def bessel_j_half_dim(dim: int, x) -> np.ndarray:
    """``J_{d/2}`` for ``d`` in {1, 2}."""
    if dim == 1:
        return bessel_j_half(x)
    if dim == 2:
        return bessel_j1(x)
    raise ValueError(f"unsupported dimension {dim}")


def unit_ball_volume(dim: int) -> float:
    return float(np.pi ** (dim / 2) / gamma(dim / 2 + 1))


def unit_sphere_area(dim: int) -> float:
    return float(2 * np.pi ** (dim / 2) / gamma(dim / 2))


def riesz_constant(dim: int, beta: float) -> float:
    """Constant ``c`` in the Fourier pair ``|x|^{-beta} <-> c |xi|^{beta-d}``."""
    if not (0 < beta <= dim):
        raise ValueError(f"need 0 < beta <= d, got beta={beta}, d={dim}")
    if beta == dim:
        return 1.0
    return float(2 ** (dim - beta) * np.pi ** (dim / 2) * gamma((dim - beta) / 2) / gamma(beta / 2))


def ball_indicator_transform_sq(dim: int, R: float, xi) -> np.ndarray:
    """``|FT(1_{B_R})(xi)|^2 = (2 pi R)^d |xi|^{-d} J_{d/2}(R |xi|)^2``."""
    xi = np.asarray(xi, dtype=float)
    vol = unit_ball_volume(dim) * R**dim
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (2 * np.pi * R) ** dim * xi ** (-dim) * bessel_j_half_dim(dim, R * xi) ** 2
    return np.where(xi == 0, vol * vol, out)


def stable_tail_coefficients(alpha: float, dim: int, n_terms: int = 3) -> np.ndarray:
    """Coefficients ``a_k`` of the large-``r`` expansion of the unit-time stable density.

    ``G(1, r) ~ sum_{k>=1} a_k r^{-(d + alpha k)}``; at time ``t`` term ``k``
    picks up a factor ``t^k``.  All coefficients vanish for ``alpha = 2``.
    """
    k = np.arange(1, n_terms + 1, dtype=float)
    fact = gamma(k + 1.0)
    a = ((-1.0) ** (k + 1) / fact * 2.0 ** (alpha * k)
         * gamma((dim + alpha * k) / 2) * gamma(1 + alpha * k / 2)
         * np.sin(np.pi * alpha * k / 2) / np.pi ** (dim / 2 + 1))
    if alpha == 2.0:
        a[:] = 0.0
    return a
