"""Limit constants: the ball-pair constant k_beta and the moment functions
theta(s), nu(s), Psi(s, z) and rho(s) estimated from simulations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .noise import CovarianceModel
from .special import (bessel_j_half_dim, riesz_constant, unit_ball_volume,
                      unit_sphere_area)


# ---------------------------------------------------------------------------
# k_beta


def _overlap_density(dim: int, r):
    """Measure of {(x, x') in B_1^2 : x - x' = z} as a function of |z| = r."""
    r = np.asarray(r, dtype=float)
    if dim == 1:
        return np.clip(2.0 - r, 0.0, None)
    u = np.clip(r / 2.0, 0.0, 1.0)
    return 2.0 * np.arccos(u) - r * np.sqrt(np.clip(1.0 - u * u, 0.0, None))


def k_beta_difference_quadrature(dim: int, beta: float) -> float:
    """int_{B_1^2} |x - x'|^{-beta} via the overlap function in difference coordinates."""
    if dim == 1:
        f = lambda r: _overlap_density(1, r) * r ** (-beta)
        val, _ = integrate.quad(f, 0.0, 2.0, limit=200)
        return 2.0 * val
    f = lambda r: _overlap_density(2, r) * r ** (1.0 - beta)
    val, _ = integrate.quad(f, 0.0, 2.0, limit=200)
    return 2 * np.pi * val


def k_beta_bessel(dim: int, beta: float, x_max: float = 1e3) -> float:
    """Fourier-side value ``c_{d,beta} |S^{d-1}| int_0^inf r^{beta-d-1} J_{d/2}(r)^2 dr``.

    Unit-length panels with 32-point Gauss-Legendre up to ``x_max``; the
    remainder replaces ``J^2`` by its mean ``1/(pi r)``.
    """
    c = riesz_constant(dim, beta)
    f = lambda r: r ** (beta - dim - 1.0) * bessel_j_half_dim(dim, np.asarray(r)) ** 2
    first, _ = integrate.quad(f, 0.0, 1.0, limit=200)
    xg, wg = np.polynomial.legendre.leggauss(32)
    edges = np.arange(1.0, x_max + 1e-9, 1.0)
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * xg[None, :]
    body = float(np.sum(f(nodes) * (0.5 * (b - a))[:, None] * wg[None, :]))
    tail = x_max ** (beta - dim - 1.0) / (np.pi * (dim + 1.0 - beta))
    return float(c * unit_sphere_area(dim) * (first + body + tail))


def k_beta_closed_form(dim: int, beta: float) -> float | None:
    if beta == dim:
        return unit_ball_volume(dim)
    if dim == 1:
        return 2 ** (3 - beta) / ((1 - beta) * (2 - beta))
    return None


@dataclass
class KBetaReport:
    dim: int
    beta: float
    value: float
    quadrature: float
    bessel: float
    closed_form: float | None

    @property
    def route_gap(self) -> float:
        return abs(self.quadrature - self.bessel) / abs(self.value)

    @property
    def agrees(self) -> bool:
        return self.route_gap < 5e-3


def k_beta(dim: int, beta: float) -> KBetaReport:
    """Ball-pair constant; for beta = d it is |B_1|, otherwise the Riesz double integral."""
    if not (0 < beta <= dim):
        raise ValueError(f"k_beta needs 0 < beta <= d (beta = {beta}, d = {dim})")
    bessel = k_beta_bessel(dim, beta)
    if beta == dim:
        v = unit_ball_volume(dim)
        return KBetaReport(dim, beta, v, v, bessel, v)
    q = k_beta_difference_quadrature(dim, beta)
    return KBetaReport(dim, beta, q, q, bessel, k_beta_closed_form(dim, beta))


def model_k_beta(model: CovarianceModel) -> float:
    return k_beta(model.dim, model.beta).value


# ---------------------------------------------------------------------------
# estimates from simulation summaries


@dataclass
class MomentSeries:
    """Per-replica spatial summaries of sigma(u(s, .)) on a time lattice.

    ``mean[k, i]`` is the spatial mean of ``sigma(u)`` at time ``times[k]`` for
    replica ``i``; ``cross[k, i]`` is the spatial mean of
    ``sigma(u)(x) * (gamma * sigma(u))(x)`` for beta = d models (for white
    noise simply ``sigma(u)^2``).
    """

    times: np.ndarray
    mean: np.ndarray
    cross: np.ndarray | None = None

    def theta(self):
        m = self.mean.mean(axis=1)
        se = self.mean.std(axis=1, ddof=1) / np.sqrt(self.mean.shape[1])
        return m, se

    def nu_squared(self):
        if self.cross is None:
            raise ValueError("nu is defined only for beta = d models")
        m = self.cross.mean(axis=1)
        se = self.cross.std(axis=1, ddof=1) / np.sqrt(self.cross.shape[1])
        return m, se

    def theta_squared(self):
        """Unbiased estimate of theta^2 per time (from independent replica means)."""
        m, se = self.theta()
        n = self.mean.shape[1]
        var_mean = self.mean.var(axis=1, ddof=1) / n
        return m * m - var_mean, 2 * np.abs(m) * se


def estimate_theta(fields: np.ndarray, sigma, grid_dim: int = 1):
    """theta and a standard error from raw fields of shape (replicas, *grid)."""
    s = sigma(fields)
    axes = tuple(range(1, s.ndim))
    per_rep = s.mean(axis=axes)
    ess = effective_sample_size(s, grid_dim)
    n = per_rep.size
    val = float(per_rep.mean())
    # pooled node variance with the spatial effective size, compared against the replica spread
    se_pool = float(np.sqrt(s.var() / (ess * n)))
    se_rep = float(per_rep.std(ddof=1) / np.sqrt(n)) if n > 1 else se_pool
    return val, max(se_pool, se_rep)


def effective_sample_size(s: np.ndarray, grid_dim: int = 1, cutoff: float = 0.05) -> float:
    """Effective number of independent nodes per field from the spatial autocorrelation.

    Sums the autocorrelation over lags until it first drops below ``cutoff``.
    """
    axes = tuple(range(s.ndim - grid_dim, s.ndim))
    c = s - s.mean(axis=axes, keepdims=True)
    f = np.fft.rfftn(c, axes=axes)
    ac = np.fft.irfftn(np.abs(f) ** 2, s=s.shape[-grid_dim:], axes=axes)
    ac = ac.reshape((-1,) + s.shape[-grid_dim:]).mean(axis=0)
    if ac.flat[0] <= 0:
        return float(np.prod(s.shape[-grid_dim:]))
    rho = ac / ac.flat[0]
    n_nodes = int(np.prod(s.shape[-grid_dim:]))
    line = rho if grid_dim == 1 else rho[:, 0]
    half = line[: len(line) // 2]
    below = np.nonzero(half < cutoff)[0]
    m = int(below[0]) if below.size else len(half)
    if grid_dim == 1:
        tau = 1.0 + 2.0 * np.sum(half[1:m])
    else:
        sub = rho[:m, :m]
        tau = 4.0 * np.sum(sub) - 2.0 * np.sum(sub[0, :]) - 2.0 * np.sum(sub[:, 0]) + sub[0, 0]
    return float(n_nodes / max(tau, 1.0))


def estimate_psi(fields: np.ndarray, sigma, lags, grid_dim: int = 1):
    """Psi(z) = E sigma(u(0)) sigma(u(z)) at on-grid integer lags, with standard errors.

    ``lags`` are integer node offsets (ints in 1D, pairs in 2D); the estimate
    averages over all base points (stationarity) and the error comes from the
    replica-to-replica spread.
    """
    s = sigma(fields)
    axes = tuple(range(1, s.ndim))
    out, se = [], []
    for lag in lags:
        lag = tuple(np.atleast_1d(lag).astype(int).tolist())
        if len(lag) != grid_dim:
            raise ValueError(f"lag {lag} is not an on-grid offset for d={grid_dim}")
        shifted = np.roll(s, shift=tuple(-l for l in lag), axis=axes)
        per = (s * shifted).mean(axis=axes)
        out.append(per.mean())
        se.append(per.std(ddof=1) / np.sqrt(per.size) if per.size > 1 else 0.0)
    return np.array(out), np.array(se)


def estimate_nu_squared(fields: np.ndarray, sigma, model: CovarianceModel, grid) -> tuple:
    """nu^2 = int Psi(z) mu(dz) from raw fields, for beta = d models."""
    if model.beta != model.dim:
        raise ValueError("nu is defined only when beta = d")
    per = cross_moment(sigma(fields), model, grid)
    n = per.size
    return float(per.mean()), float(per.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def cross_moment(s: np.ndarray, model: CovarianceModel, grid) -> np.ndarray:
    """Per-replica spatial mean of ``s(x) int s(x + z) mu(dz)``."""
    axes = tuple(range(1, s.ndim))
    if model.variant == "white":
        return (s * s).mean(axis=axes)
    from .noise import _lag_vectors
    gam = model.covariance(_lag_vectors(grid))
    gh = np.fft.rfftn(gam) * grid.cell_volume
    conv = np.fft.irfftn(np.fft.rfftn(s, axes=axes) * gh, s=grid.shape, axes=axes)
    return (s * conv).mean(axis=axes)


@dataclass
class LimitConstants:
    """Constants entering the limiting variance, tabulated on a time lattice."""

    model: CovarianceModel
    k_beta: float
    times: np.ndarray
    theta: np.ndarray
    theta_se: np.ndarray
    nu: np.ndarray | None = None
    nu_se: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def mu_mass(self) -> float:
        return self.model.mu_mass

    def rho_squared(self) -> np.ndarray:
        if self.model.beta < self.model.dim:
            return self.mu_mass * self.k_beta * self.theta ** 2
        return self.k_beta * self.nu ** 2

    def rho(self) -> np.ndarray:
        return np.sqrt(np.clip(self.rho_squared(), 0.0, None))

    def integrated_rho_squared(self, t: float) -> float:
        """Trapezoid integral of rho^2 over [0, t] on the stored lattice."""
        return float(_cumtrapz_at(self.times, self.rho_squared(), t))

    def nu_dominates_theta(self, n_se: float = 2.0) -> bool:
        if self.nu is None:
            return True
        gap = self.nu ** 2 - self.theta ** 2
        se = 2 * self.nu * self.nu_se + 2 * np.abs(self.theta) * self.theta_se
        return bool(np.all(gap >= -n_se * se - 1e-12))

    def to_dict(self) -> dict:
        out = {"k_beta": self.k_beta, "mu_mass": self.mu_mass,
               "times": self.times.tolist(), "theta": self.theta.tolist(),
               "theta_se": self.theta_se.tolist(), "provenance": self.provenance}
        if self.nu is not None:
            out.update(nu=self.nu.tolist(), nu_se=self.nu_se.tolist())
        out["rho"] = self.rho().tolist()
        return out


def _cumtrapz_at(times, values, t):
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if t <= times[0]:
        return 0.0
    if t > times[-1] + 1e-12:
        raise ValueError(f"time {t} beyond the tabulated lattice (last {times[-1]})")
    k = np.searchsorted(times, t - 1e-12)
    v_t = np.interp(t, times, values)
    ts = np.append(times[:k], t)
    vs = np.append(values[:k], v_t)
    return np.trapezoid(vs, ts)


def rho_squared(model: CovarianceModel, theta_sq, nu_sq=None):
    """rho(s)^2: mu k_beta theta^2 (beta < d) or |B_1| nu^2 (beta = d)."""
    if model.beta < model.dim:
        return model.mu_mass * model_k_beta(model) * np.asarray(theta_sq)
    if nu_sq is None:
        raise ValueError("beta = d needs nu^2")
    return unit_ball_volume(model.dim) * np.asarray(nu_sq)


def rho(model: CovarianceModel, theta_sq, nu_sq=None):
    return np.sqrt(np.clip(rho_squared(model, theta_sq, nu_sq), 0.0, None))
