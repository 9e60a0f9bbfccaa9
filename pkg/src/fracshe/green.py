"""Fractional heat kernel: the density with Fourier transform exp(-t |xi|^alpha).

Values come from spectral inversion on the torus.  The torus kernel is the
periodisation of the kernel on R^d; :func:`evaluate_kernel` can subtract the
periodic images (using the large-distance expansion of stable densities, which
is accurate because every image sits at distance >= L) to recover R^d values.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import RectBivariateSpline
from scipy.special import zeta

from . import kernels
from .grid import GridSpec, inverse_transform, power_of_two_at_least
from .special import (bessel_j0, stable_tail_coefficients, unit_ball_volume,
                      unit_sphere_area)

log = logging.getLogger(__name__)

RINGING_RTOL = 1e-8
BAND_TOL = 1e-9


def _check_alpha_t(alpha, t):
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t} (t = 0 is a Dirac mass)")


def symbol(alpha: float, t: float, wave_norm) -> np.ndarray:
    return np.exp(-t * np.asarray(wave_norm) ** alpha)


@dataclass
class ResolutionReport:
    width_ratio: float        # t^{1/alpha} / dx
    band_residual: float      # symbol value at the largest resolved |xi|
    tail_mass: float          # mass of the R^d kernel outside the inscribed ball
    image_residual: float     # size of the first omitted image term, relative to the peak
    deperiodized: bool

    @property
    def well_resolved(self) -> bool:
        periodic_ok = self.tail_mass < 1e-6 or (self.deperiodized and self.image_residual < 1e-6)
        return self.width_ratio >= 4.0 and self.band_residual <= BAND_TOL and periodic_ok


@dataclass
class KernelField:
    alpha: float
    t: float
    grid: GridSpec
    values: np.ndarray
    deperiodized: bool
    resolution: ResolutionReport
    min_relative: float = field(init=False)
    n_negative: int = field(init=False)

    def __post_init__(self):
        peak = float(self.values.max())
        self.min_relative = float(self.values.min()) / peak
        self.n_negative = int(np.count_nonzero(self.values < -RINGING_RTOL * peak))
        if self.n_negative:
            log.info("kernel alpha=%g t=%g: %d nodes below ringing tolerance (min %.2e of peak)",
                     self.alpha, self.t, self.n_negative, self.min_relative)

    @property
    def peak(self) -> float:
        return float(self.values.max())

    @property
    def mass(self) -> float:
        return float(self.values.sum()) * self.grid.cell_volume

    def as_density(self) -> np.ndarray:
        """Values clipped at zero, for use as a probability density."""
        return np.clip(self.values, 0.0, None)

    def symmetry_error(self) -> float:
        v = self.values
        # x -> -x maps node j to N - j (node 0 at -L maps to itself modulo 2L)
        flipped = np.roll(np.flip(v, axis=tuple(range(v.ndim))), 1, axis=tuple(range(v.ndim)))
        return float(np.max(np.abs(v - flipped))) / self.peak


def resolution_report(grid: GridSpec, alpha: float, t: float, deperiodized: bool = False,
                      n_terms: int = 3) -> ResolutionReport:
    width = t ** (1.0 / alpha) / grid.spacing
    band = float(np.exp(-t * (np.pi / grid.spacing) ** alpha))
    L = grid.half_length
    a = stable_tail_coefficients(alpha, grid.dim, n_terms + 1)
    if alpha == 2.0:
        # Gaussian: chi-square tail of |X|^2 / (2t)
        from scipy.stats import chi2
        tail = float(chi2.sf(L * L / (2 * t), df=grid.dim))
        resid = 0.0
    else:
        tail = float(unit_sphere_area(grid.dim) * abs(a[0]) * t * L ** (-alpha) / alpha)
        peak = t ** (-grid.dim / alpha)
        resid = float(abs(a[n_terms]) * t ** (n_terms + 1) * L ** (-(grid.dim + alpha * (n_terms + 1)))) / peak
        resid *= 10.0  # lattice multiplicity, generous
    return ResolutionReport(width, band, tail, resid, deperiodized)


# ---------------------------------------------------------------------------
# periodic images


def _image_remainder_2d(A: float, s: float) -> float:
    """int over R^2 outside the square [-A, A]^2 of |u|^{-s} du (s > 2)."""
    val, _ = integrate.quad(lambda p: (A / np.cos(p)) ** (2.0 - s), 0.0, np.pi / 4)
    return 8.0 * val / (s - 2.0)


def image_sum(grid: GridSpec, alpha: float, t: float, n_terms: int = 3, lattice: int = 40) -> np.ndarray:
    """Sum over nonzero periods of the asymptotic kernel, at every node."""
    a = stable_tail_coefficients(alpha, grid.dim, n_terms)
    if not np.any(a):
        return np.zeros(grid.shape)
    P = 2.0 * grid.half_length
    powers = grid.dim + alpha * np.arange(1, n_terms + 1)
    coeffs = a * t ** np.arange(1, n_terms + 1)
    if grid.dim == 1:
        x = grid.nodes
        out = np.zeros_like(x)
        for c, s in zip(coeffs, powers):
            out += c * P ** (-s) * (zeta(s, 1.0 + x / P) + zeta(s, 1.0 - x / P))
        return out
    # 2D: lattice sum on a coarse mesh, spline-interpolated to the nodes
    L = grid.half_length
    m = 33
    cx = np.linspace(-L, L, m)
    CX, CY = np.meshgrid(cx, cx, indexing="ij")
    pts = np.ascontiguousarray(np.stack([CX.ravel(), CY.ravel()], axis=1))
    vals = kernels.lattice_image_sum(pts, P, coeffs, powers, lattice)
    A = lattice + 0.5
    vals += sum(c * P ** (-s) * _image_remainder_2d(A, s) for c, s in zip(coeffs, powers))
    spline = RectBivariateSpline(cx, cx, vals.reshape(m, m), kx=3, ky=3)
    return spline(grid.nodes, grid.nodes)


def evaluate_kernel(grid: GridSpec, alpha: float, t: float, deperiodize: bool = False) -> KernelField:
    """Kernel at time ``t`` sampled on ``grid`` by inverse transform of its symbol.

    With ``deperiodize=True`` the periodic images are removed so that the
    values approximate the kernel on R^d rather than on the torus.
    """
    _check_alpha_t(alpha, t)
    coeffs = symbol(alpha, t, grid.wave_norm)
    values = inverse_transform(grid, coeffs)
    if deperiodize:
        values = values - image_sum(grid, alpha, t)
    return KernelField(alpha, t, grid, values, deperiodize,
                       resolution_report(grid, alpha, t, deperiodize))


def kernel_grid(dim: int, alpha: float, t: float, scaled_half_length: float = 32.0,
                points: int | None = None) -> GridSpec:
    """Grid whose half-length is the power of two at least ``scaled_half_length * t^{1/alpha}``."""
    L = float(power_of_two_at_least(scaled_half_length * t ** (1.0 / alpha)))
    if points is None:
        points = 8192 if dim == 1 else 2048
    return GridSpec(dim, L, points)


# ---------------------------------------------------------------------------
# independent radial evaluation (used by the scaling check)


def radial_kernel_quadrature(alpha: float, t: float, dim: int, r) -> np.ndarray:
    """``G(t, r)`` by direct quadrature of the radial inverse Fourier integral."""
    _check_alpha_t(alpha, t)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    xi_max = (60.0 / t) ** (1.0 / alpha)
    for i, ri in enumerate(r):
        if dim == 1:
            f = lambda k: np.exp(-t * k**alpha)
            if ri == 0:
                v, _ = integrate.quad(f, 0, xi_max, limit=400)
            else:
                v, _ = integrate.quad(f, 0, xi_max, weight="cos", wvar=ri, limit=400)
            out[i] = v / np.pi
        else:
            f = lambda k: np.exp(-t * k**alpha) * k * bessel_j0(ri * k)
            n_pan = max(8, int(np.ceil(xi_max * ri / np.pi)) + 1)
            edges = np.linspace(0.0, xi_max, n_pan + 1)
            xg, wg = np.polynomial.legendre.leggauss(24)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * np.diff(edges)
            nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
            weights = (half[:, None] * wg[None, :]).ravel()
            # the 0-end has a k^{alpha} cusp in the exponent; refine the first panel
            v0, _ = integrate.quad(f, 0.0, edges[1], limit=200)
            sel = nodes > edges[1]
            out[i] = (v0 + np.sum(f(nodes[sel]) * weights[sel])) / (2 * np.pi)
    return out


# ---------------------------------------------------------------------------
# property checks


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    reliable: bool = True
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.threshold)


def check_semigroup(alpha: float, t: float, s: float, grid: GridSpec) -> CheckResult:
    """max |G(t+s) - G(t) * G(s)| relative to the peak of G(t+s), on the torus."""
    if not (t > 0 and s > 0):
        raise ValueError("semigroup check needs t > 0 and s > 0")
    from .grid import circular_convolve
    gts = evaluate_kernel(grid, alpha, t + s)
    gt = evaluate_kernel(grid, alpha, t)
    gs = evaluate_kernel(grid, alpha, s)
    conv = circular_convolve(grid, gt.values, gs.values)
    err = float(np.max(np.abs(gts.values - conv)))
    rel = err / gts.peak
    res = resolution_report(grid, alpha, min(t, s))
    reliable = res.width_ratio >= 4.0 and res.band_residual <= BAND_TOL
    if not reliable:
        log.warning("semigroup check alpha=%g t=%g s=%g under-resolved", alpha, t, s)
    return CheckResult("semigroup", rel, 1e-6, reliable, {"max_abs_error": err, "peak": gts.peak})


def check_scaling(alpha: float, t: float, grid: GridSpec, floor: float = 1e-6) -> CheckResult:
    """Compare grid values of G(t, x) against t^{-d/alpha} G(1, t^{-1/alpha} x).

    The right side is evaluated independently by radial quadrature at the
    nodes on the first coordinate axis with ``|x| <= L/2``.
    """
    _check_alpha_t(alpha, t)
    k = evaluate_kernel(grid, alpha, t, deperiodize=True)
    o = grid.origin_index
    line = k.values if grid.dim == 1 else k.values[:, o]
    x = grid.nodes
    sel = (x >= 0) & (x <= grid.half_length / 2) & (line > floor * k.peak)
    rhs = t ** (-grid.dim / alpha) * radial_kernel_quadrature(alpha, 1.0, grid.dim, x[sel] * t ** (-1.0 / alpha))
    rel = np.abs(line[sel] - rhs) / np.abs(rhs)
    return CheckResult("scaling", float(rel.max()), 1e-4, k.resolution.width_ratio >= 4,
                       {"nodes_compared": int(sel.sum())})


def closed_form_kernel(alpha: float, t: float, dim: int, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if alpha == 2.0:
        return (4 * np.pi * t) ** (-dim / 2) * np.exp(-r * r / (4 * t))
    if alpha == 1.0:
        if dim == 1:
            return t / (np.pi * (t * t + r * r))
        return t / (2 * np.pi) * (t * t + r * r) ** -1.5
    raise ValueError("closed form only for alpha in {1, 2}")


def check_closed_form(alpha: float, t: float, grid: GridSpec) -> CheckResult:
    k = evaluate_kernel(grid, alpha, t, deperiodize=True)
    exact = closed_form_kernel(alpha, t, grid.dim, grid.radius)
    err = float(np.max(np.abs(k.values - exact))) / float(exact.max())
    return CheckResult("closed_form", err, 1e-6, k.resolution.well_resolved)


def tail_bound_ratio(alpha: float, grid: GridSpec) -> CheckResult:
    """Range of G(1, x) (1 + |x|)^{d + alpha} over 1 <= |x| <= L/2."""
    if alpha >= 2.0:
        raise ValueError("tail sandwich applies to stable tails only (alpha < 2); "
                         "the Gaussian kernel alpha = 2 decays faster than any power")
    if grid.half_length / 2 < 20:
        raise ValueError("grid must resolve |x| up to at least 20 (need L >= 40)")
    k = evaluate_kernel(grid, alpha, 1.0, deperiodize=True)
    r = grid.radius
    sel = (r >= 1.0) & (r <= grid.half_length / 2)
    v = k.values[sel]
    neg = v < RINGING_RTOL * k.peak
    ratio = v * (1 + r[sel]) ** (grid.dim + alpha)
    lo, hi = float(ratio.min()), float(ratio.max())
    value = hi / lo if lo > 0 else np.inf
    return CheckResult("tail_sandwich", value, 50.0, not bool(np.any(neg)),
                       {"min_ratio": lo, "max_ratio": hi})


def kappa_exponent(dim: int, alpha: float, two_q: float) -> float:
    return (2.0 * dim / alpha) * (1.0 - 1.0 / two_q)


def two_q_upper(dim: int, alpha: float) -> float:
    """Right end of the admissible open window for 2q."""
    upper1 = 2.0 * dim / (2.0 * dim - alpha) if 2.0 * dim > alpha else np.inf
    return float(min(upper1, (dim + alpha) / dim))


def check_two_q_window(dim: int, alpha: float, two_q: float):
    """Raise ValueError naming the violated bound if 2q is outside the admissible window."""
    upper1 = 2.0 * dim / (2.0 * dim - alpha) if 2.0 * dim > alpha else np.inf
    upper2 = (dim + alpha) / dim
    if not two_q > 1.0:
        raise ValueError(f"2q = {two_q} violates 2q > 1")
    if not two_q < upper1:
        raise ValueError(f"2q = {two_q} violates 2q < 2d/(2d - alpha) = {upper1:.6g} (needed for kappa < 1)")
    if not two_q < upper2:
        raise ValueError(f"2q = {two_q} violates 2q < (d + alpha)/d = {upper2:.6g} (integrability of G^(1/(2q)))")


def ball_weights(grid: GridSpec, R: float) -> np.ndarray:
    """Fraction of each node's cell lying in the closed ball of radius R about 0."""
    h = 0.5 * grid.spacing
    if grid.dim == 1:
        x = grid.nodes
        return np.clip((np.minimum(x + h, R) - np.maximum(x - h, -R)) / grid.spacing, 0.0, 1.0)
    return kernels.ball_fractions_2d(grid.nodes, grid.spacing, float(R), 32)


def fractional_power_integral(alpha: float, q: float, t: float, grid: GridSpec,
                              n_terms: int = 6) -> float:
    """int G(t, x)^{1/(2q)} dx over R^d.

    Nodes with ``|x| <= L/2`` are summed (kernel de-periodised and clipped at
    zero); beyond ``L/2`` the large-distance expansion is integrated radially.
    """
    two_q = 2.0 * q
    check_two_q_window(grid.dim, alpha, two_q)
    p = 1.0 / two_q
    k = evaluate_kernel(grid, alpha, t, deperiodize=True)
    rho = grid.half_length / 2
    w = ball_weights(grid, rho)
    inner = float(np.sum(w * k.as_density() ** p)) * grid.cell_volume
    if alpha == 2.0:
        return inner
    a = stable_tail_coefficients(alpha, grid.dim, n_terms)
    if alpha > 1.0:
        a = a[:3]  # asymptotic, not convergent, for alpha > 1
    ks = np.arange(1, a.size + 1)

    def f(r):
        g = np.sum(a * t**ks * r ** (-(grid.dim + alpha * ks)))
        return max(g, 0.0) ** p * r ** (grid.dim - 1)

    tail, _ = integrate.quad(f, rho, np.inf, limit=200)
    return inner + unit_sphere_area(grid.dim) * tail
