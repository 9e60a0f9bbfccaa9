"""Spatial covariance models, their Dalang functionals, and noise sampling.

Three regimes are supported:

``white``   space-time white noise, d = 1, alpha > 1.
``riesz``   covariance ``sum_i w_i |x - a_i|^{-beta}`` (Riesz kernel convolved
            with a symmetric finite point-mass measure), beta < alpha ^ d.
``density`` a bounded integrable covariance density from a small registry
            (``gaussian``, ``exponential``, ``indicator``); beta = d.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .grid import GridSpec
from .special import (bessel_j0, bessel_j1, riesz_constant, unit_ball_volume,
                      unit_sphere_area)

log = logging.getLogger(__name__)

VARIANTS = ("white", "riesz", "density")
DENSITIES = ("gaussian", "exponential", "indicator")
CLIP_REJECT = 1e-6


# ---------------------------------------------------------------------------
# registry of covariance densities; each entry maps (r, scale, dim) to values


def _gaussian_phys(r, s, d):
    return np.exp(-0.5 * (r / s) ** 2)


def _gaussian_spec(k, s, d):
    return (2 * np.pi * s * s) ** (d / 2) * np.exp(-0.5 * (s * k) ** 2)


def _exponential_phys(r, s, d):
    return np.exp(-r / s)


def _exponential_spec(k, s, d):
    if d == 1:
        return 2 * s / (1 + (s * k) ** 2)
    return 2 * np.pi * s * s / (1 + (s * k) ** 2) ** 1.5


def _indicator_phys(r, s, d):
    # normalised self-overlap of a ball of radius s: |B_s cap (B_s + x)| / |B_s|
    u = np.clip(np.asarray(r, dtype=float) / (2 * s), 0.0, 1.0)
    if d == 1:
        return 1.0 - u
    return (2.0 / np.pi) * (np.arccos(u) - u * np.sqrt(1 - u * u))


def _indicator_spec(k, s, d):
    k = np.asarray(k, dtype=float)
    vol = unit_ball_volume(d) * s**d
    with np.errstate(divide="ignore", invalid="ignore"):
        if d == 1:
            ft = 2 * np.sin(s * k) / k
        else:
            ft = 2 * np.pi * s * bessel_j1(s * k) / k
    ft = np.where(k == 0, vol, ft)
    return ft * ft / vol


_REGISTRY = {
    "gaussian": (_gaussian_phys, _gaussian_spec),
    "exponential": (_exponential_phys, _exponential_spec),
    "indicator": (_indicator_phys, _indicator_spec),
}


@dataclass(frozen=True)
class CovarianceModel:
    """Spatial covariance of the driving noise.

    Parameters
    ----------
    variant : {'white', 'riesz', 'density'}
    dim : int
    beta : float, optional
        Homogeneity exponent; forced to ``dim`` for ``white`` and ``density``.
    masses : tuple of (weight, position) pairs, optional
        Point-mass measure for the Riesz variant; default is a unit mass at 0.
    density : str, optional
        Registry name for the density variant.
    scale : float
        Length scale of the registry density.
    """

    variant: str
    dim: int = 1
    beta: float | None = None
    masses: tuple | None = None
    density: str | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown noise variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant in ("white", "density"):
            object.__setattr__(self, "beta", float(self.dim))
        elif self.beta is None:
            raise ValueError("riesz variant needs beta")
        else:
            object.__setattr__(self, "beta", float(self.beta))
        if self.masses is None:
            object.__setattr__(self, "masses", ((1.0, (0.0,) * self.dim),))
        ms = tuple((float(w), tuple(np.atleast_1d(np.asarray(a, dtype=float)).tolist()))
                   for w, a in self.masses)
        for w, a in ms:
            if len(a) != self.dim:
                raise ValueError(f"point mass position {a} has wrong dimension for d={self.dim}")
        object.__setattr__(self, "masses", ms)
        if self.variant == "density" and self.density not in DENSITIES:
            raise ValueError(f"unknown density {self.density!r}; registry has {DENSITIES}")

    # -- factories --------------------------------------------------------
    @classmethod
    def white(cls, dim=1):
        return cls("white", dim)

    @classmethod
    def riesz(cls, dim, beta, masses=None):
        return cls("riesz", dim, beta, tuple(masses) if masses else ((1.0, (0.0,) * dim),))

    @classmethod
    def integrable(cls, dim, name, scale=1.0):
        return cls("density", dim, density=name, scale=scale)

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceModel":
        v = d["variant"]
        dim = int(d.get("dim", 1))
        if v == "white":
            return cls.white(dim)
        if v == "riesz":
            masses = d.get("masses")
            if masses is not None:
                masses = [(m["weight"], m["position"]) for m in masses]
            return cls.riesz(dim, float(d["beta"]), masses)
        if v == "density":
            return cls.integrable(dim, d["density"], float(d.get("scale", 1.0)))
        raise ValueError(f"unknown noise variant {v!r}")

    def to_dict(self) -> dict:
        out = {"variant": self.variant, "dim": self.dim}
        if self.variant == "riesz":
            out["beta"] = self.beta
            out["masses"] = [{"weight": w, "position": list(a)} for w, a in self.masses]
        if self.variant == "density":
            out["density"] = self.density
            out["scale"] = self.scale
        return out

    # -- basic properties -------------------------------------------------
    @property
    def regime(self) -> str:
        """Which of the three structural cases the model falls under."""
        if self.variant == "riesz":
            return "i"
        return "ii" if self.dim == 1 else "iii"

    @property
    def mu_mass(self) -> float:
        if self.variant == "white":
            return 1.0
        if self.variant == "riesz":
            return float(sum(w for w, _ in self.masses))
        phys, spec = _REGISTRY[self.density]
        return float(spec(0.0, self.scale, self.dim))

    @property
    def r_exponent(self) -> float:
        return np.inf if self.variant == "density" else np.nan

    @property
    def riesz_constant(self) -> float:
        return riesz_constant(self.dim, self.beta) if self.variant == "riesz" else 1.0

    def violations(self, alpha: float) -> list:
        """All structural-rule violations for use with exponent ``alpha``."""
        out = []
        d = self.dim
        if d not in (1, 2):
            out.append(f"dimension must be 1 or 2, got {d}")
        if not (0 < alpha <= 2):
            out.append(f"alpha must lie in (0, 2], got {alpha}")
        if self.variant == "white":
            if d != 1:
                out.append("case (ii) requires d = 1 for white noise")
            if not alpha > 1:
                out.append(f"case (ii) requires alpha > 1 for white noise (alpha = {alpha})")
        elif self.variant == "riesz":
            if not (0 < self.beta < min(alpha, d)):
                out.append(f"case (i) requires 0 < beta < alpha ^ d (beta = {self.beta}, "
                           f"alpha = {alpha}, d = {d})")
            w = np.array([m[0] for m in self.masses])
            if np.any(w <= 0):
                out.append("point-mass weights must be positive")
            pos = {tuple(a): wt for wt, a in self.masses}
            for a, wt in pos.items():
                if not np.isclose(pos.get(tuple(-x for x in a), -1.0), wt):
                    out.append(f"point-mass measure must be symmetric (mass at {a} has no mirror)")
                    break
            w0 = sum(wt for a, wt in pos.items() if not any(a))
            if w0 < sum(wt for a, wt in pos.items() if any(a)) - 1e-12:
                out.append("point-mass measure must have origin weight >= total off-origin weight "
                           "(keeps the spectral density nonnegative)")
        else:
            if d == 1 and alpha <= 1 and not self.r_exponent > d / alpha:
                out.append("case (iii) requires r > d / alpha")
        return out

    def validate(self, alpha: float):
        v = self.violations(alpha)
        if v:
            raise ValueError("; ".join(v))

    # -- covariance in space and frequency --------------------------------
    def covariance(self, x) -> np.ndarray:
        """Physical covariance function; ``x`` has shape (..., dim) or (...,) in 1D."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if self.variant == "white":
            raise ValueError("white noise has no pointwise covariance function")
        if self.variant == "riesz":
            out = np.zeros(x.shape[:-1])
            for w, a in self.masses:
                r = np.linalg.norm(x - np.asarray(a), axis=-1)
                with np.errstate(divide="ignore"):
                    out += w * r ** (-self.beta)
            return out
        phys, _ = _REGISTRY[self.density]
        return phys(np.linalg.norm(x, axis=-1), self.scale, self.dim)

    def covariance_radial(self, r) -> np.ndarray:
        """Covariance as a function of ``|x|`` (point masses must sit at the origin)."""
        if self.variant == "riesz" and any(any(a) for _, a in self.masses):
            raise ValueError("covariance is not radial for off-origin point masses")
        r = np.asarray(r, dtype=float)
        if self.variant == "riesz":
            with np.errstate(divide="ignore"):
                return self.mu_mass * r ** (-self.beta)
        phys, _ = _REGISTRY[self.density]
        return phys(r, self.scale, self.dim)

    def spectral_density(self, xi) -> np.ndarray:
        """Spectral density at wave vectors ``xi`` of shape (..., dim) (or (...,) in 1D).

        The Riesz value at xi = 0 is infinite; grids use
        :func:`grid_spectral_density`, which replaces it by a calibrated value.
        """
        xi = np.asarray(xi, dtype=float)
        if self.dim == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
            xi = xi[..., None]
        k = np.linalg.norm(xi, axis=-1)
        if self.variant == "white":
            return np.ones_like(k)
        if self.variant == "riesz":
            gm = np.zeros_like(k)
            for w, a in self.masses:
                gm += w * np.cos(xi @ np.asarray(a))
            with np.errstate(divide="ignore"):
                return self.riesz_constant * k ** (self.beta - self.dim) * gm
        _, spec = _REGISTRY[self.density]
        return spec(k, self.scale, self.dim)

    def spectral_radial(self, k) -> np.ndarray:
        """Angular average of the spectral density over the sphere ``|xi| = k``."""
        k = np.asarray(k, dtype=float)
        if self.variant == "white":
            return np.ones_like(k)
        if self.variant == "riesz":
            gm = np.zeros_like(k)
            for w, a in self.masses:
                ra = float(np.linalg.norm(a))
                gm += w * (np.cos(k * ra) if self.dim == 1 else bessel_j0(k * ra))
            with np.errstate(divide="ignore"):
                return self.riesz_constant * k ** (self.beta - self.dim) * gm
        _, spec = _REGISTRY[self.density]
        return spec(k, self.scale, self.dim)

    def spectral_tail_exponent(self) -> float | None:
        """Power ``p`` with spectral density ~ |xi|^p at infinity, or None if faster decay."""
        if self.variant == "white":
            return 0.0
        if self.variant == "riesz":
            return self.beta - self.dim
        if self.density == "indicator":
            return -(self.dim + 1.0)
        if self.density == "exponential":
            return -(self.dim + 1.0)
        return None


# ---------------------------------------------------------------------------
# radial spectral quadrature


def radial_spectral_integral(model: CovarianceModel, weight, k_max: float = 1e4,
                             tail_power: float | None = None, tail_coeff: float = 0.0) -> float:
    """``(2 pi)^{-d} int_{R^d} weight(|xi|) g_hat(xi) d xi``.

    ``weight`` is vectorised in ``|xi|``.  Beyond ``k_max`` an analytic tail
    ``tail_coeff * int_{k_max}^inf k^tail_power dk`` may be supplied.
    """
    d = model.dim
    f = lambda k: weight(k) * model.spectral_radial(k) * k ** (d - 1)
    edges = np.concatenate([[0.0], np.logspace(-3, np.log10(k_max), 40)])
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            v, _ = integrate.quad(f, a, b, limit=200)
            total += v
    if tail_power is not None and tail_coeff != 0.0:
        if tail_power >= -1:
            raise ValueError("divergent spectral tail")
        total += tail_coeff * k_max ** (tail_power + 1) / (-(tail_power + 1))
    return unit_sphere_area(d) * total / (2 * np.pi) ** d


def _tail_params(model: CovarianceModel, alpha: float, power_shift: float):
    """Leading large-|xi| behaviour of weight * g_hat * k^{d-1} for weight ~ k^power_shift."""
    p = model.spectral_tail_exponent()
    if p is None:
        return None, 0.0
    if model.variant == "white":
        c = 1.0
    elif model.variant == "riesz":
        if any(any(a) for _, a in model.masses):
            # oscillating off-origin terms average out in the tail
            c = model.riesz_constant * sum(w for w, a in model.masses if not any(a))
        else:
            c = model.riesz_constant * model.mu_mass
    else:
        return None, 0.0
    return p + model.dim - 1 + power_shift, c


def dalang_upsilon(model: CovarianceModel, alpha: float, lam: float) -> float:
    """``(2 pi)^{-d} int g_hat(xi) / (lam + 2 |xi|^alpha) d xi``; raises if divergent."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    ok, msg = verify_dalang(model, alpha)
    if not ok:
        raise ValueError(f"Dalang integral diverges: {msg}")
    power, c = _tail_params(model, alpha, -alpha)
    k_max = max(1e4, (1e4 * lam) ** (1.0 / alpha))
    return radial_spectral_integral(model, lambda k: 1.0 / (lam + 2 * k**alpha), k_max,
                                    power, 0.5 * c)


def verify_dalang(model: CovarianceModel, alpha: float):
    """Return ``(finite, diagnostic)`` for the integrability of g_hat / (1 + |xi|^alpha)."""
    d = model.dim
    if model.variant == "white":
        ok = alpha > 1 and d == 1
        return ok, ("white noise in d=1 needs alpha > 1: integrand ~ |xi|^{-alpha}"
                    + ("" if ok else f" is not integrable for alpha = {alpha}"))
    if model.variant == "riesz":
        ok = model.beta < alpha
        return ok, (f"Riesz integrand ~ |xi|^(beta - d - alpha) |xi|^(d-1): integrable iff beta < alpha "
                    f"(beta = {model.beta}, alpha = {alpha})")
    # numeric tail test: the integral over [K, 2K] must shrink geometrically
    f = lambda k: model.spectral_radial(k) * k ** (d - 1) / (1 + k**alpha)
    pieces = [integrate.quad(f, K, 2 * K, limit=200)[0] for K in (1e2, 1e3, 1e4)]
    ok = pieces[2] < 0.5 * pieces[1] + 1e-300 and pieces[1] < 0.5 * pieces[0] + 1e-300
    return ok, f"density tail pieces over dyadic shells: {pieces}"


# ---------------------------------------------------------------------------
# correlation-time kernel I(t)


def correlation_time_spectral(model: CovarianceModel, alpha: float, t: float) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    k_max = (80.0 / (2 * t)) ** (1.0 / alpha)
    return radial_spectral_integral(model, lambda k: np.exp(-2 * t * k**alpha), k_max)


def correlation_time_physical(model: CovarianceModel, alpha: float, t: float) -> float:
    """``int G(2t, z) gamma(z) dz`` with the kernel from radial Fourier quadrature."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return _correlation_time_physical(model, alpha, t)


def _correlation_time_physical(model, alpha, t):
    from .green import radial_kernel_quadrature, stable_tail_coefficients
    d = model.dim
    tau = 2.0 * t
    if model.variant == "white":
        return float(radial_kernel_quadrature(alpha, tau, d, [0.0])[0])
    # radial table of the kernel, with the large-distance expansion beyond it
    width = tau ** (1.0 / alpha)
    r_max = 60.0 * width
    r_tab = np.concatenate([[0.0], np.logspace(np.log10(width) - 4, np.log10(r_max), 500)])
    g_tab = radial_kernel_quadrature(alpha, tau, d, r_tab)
    a = stable_tail_coefficients(alpha, d, 3)
    ks = np.arange(1, 4)

    def G(r):
        r = np.asarray(r, dtype=float)
        inner = np.interp(r, r_tab, g_tab)
        outer = np.sum(a[:, None] * tau ** ks[:, None] * np.maximum(r, r_max)[None, :] ** (-(d + alpha * ks[:, None])), axis=0) \
            if alpha < 2 else np.zeros_like(r)
        return np.where(r <= r_max, inner, outer)

    total = 0.0
    for w, pos in (model.masses if model.variant == "riesz" else [(1.0, (0.0,) * d)]):
        pos = np.asarray(pos)
        if model.variant == "riesz":
            gam = lambda rr: rr ** (-model.beta)
        else:
            gam = lambda rr: model.covariance_radial(rr)
        breaks = [0.0, width, 10 * width, r_max, 10 * r_max, np.inf]
        if d == 1:
            # int G(2t, pos + w) gamma(w) dw over the real line, split at the singularity
            for sgn in (1.0, -1.0):
                f = lambda u: float(G(np.abs(pos[0] + sgn * np.array([u])))[0]) * float(gam(np.array(u)))
                for lo, hi in zip(breaks[:-1], breaks[1:]):
                    total += w * integrate.quad(f, lo, hi, limit=200)[0]
        else:
            ra = float(np.linalg.norm(pos))
            phis = np.linspace(0, 2 * np.pi, 129)[:-1]

            def f(u):
                rr = np.hypot(ra + u * np.cos(phis), u * np.sin(phis))
                return float(np.mean(G(rr))) * 2 * np.pi * u * float(gam(np.array(u)))

            for lo, hi in zip(breaks[:-1], breaks[1:]):
                total += w * integrate.quad(f, lo, hi, limit=200)[0]
    return float(total)


def correlation_time_kernel(model: CovarianceModel, alpha: float, t: float, rtol: float = 5e-3) -> float:
    """Spectral value of I(t), cross-checked against the physical-space route."""
    spec = correlation_time_spectral(model, alpha, t)
    phys = correlation_time_physical(model, alpha, t)
    if abs(spec - phys) > rtol * abs(spec):
        raise RuntimeError(f"I({t}) routes disagree: spectral {spec:.6g} vs physical {phys:.6g}")
    return spec


def integrated_correlation(model: CovarianceModel, alpha: float, t: float) -> float:
    """``int_0^t I(s) ds = (2 pi)^{-d} int (1 - e^{-2 t |xi|^alpha}) / (2 |xi|^alpha) g_hat``."""
    power, c = _tail_params(model, alpha, -alpha)
    k_max = 1e5
    env = -np.expm1(-2 * t * k_max**alpha)
    return radial_spectral_integral(
        model, lambda k: -np.expm1(-2 * t * k**alpha) / (2 * k**alpha), k_max, power, 0.5 * c * env)


# ---------------------------------------------------------------------------
# grid spectral density and sampling


@dataclass
class GridSpectrum:
    """Spectral density on the ``rfftn`` layout of a grid, plus diagnostics."""

    grid: GridSpec
    values: np.ndarray
    zero_mode: float
    clip_fraction: float = 0.0
    notes: dict = field(default_factory=dict)


def _rfft_wave_vectors(grid: GridSpec):
    half = 2.0 * np.pi * np.fft.rfftfreq(grid.points, d=grid.spacing)
    if grid.dim == 1:
        return half[:, None]
    K0, K1 = np.meshgrid(grid.axis_frequencies, half, indexing="ij")
    return np.stack([K0, K1], axis=-1)


def _lag_radius(grid: GridSpec) -> np.ndarray:
    """Distance of each FFT-ordered lag (index 0 is lag 0) from the origin."""
    lag = grid.spacing * np.fft.fftfreq(grid.points, d=1.0 / grid.points)
    if grid.dim == 1:
        return np.abs(lag)
    A, B = np.meshgrid(lag, lag, indexing="ij")
    return np.hypot(A, B)


def _lag_vectors(grid: GridSpec) -> np.ndarray:
    lag = grid.spacing * np.fft.fftfreq(grid.points, d=1.0 / grid.points)
    if grid.dim == 1:
        return lag[:, None]
    A, B = np.meshgrid(lag, lag, indexing="ij")
    return np.stack([A, B], axis=-1)


def riesz_low_mode_calibration(grid: GridSpec, model: CovarianceModel, values: np.ndarray,
                               n_shells: int | None = None):
    """Adjust the lowest Fourier shells so the torus covariance matches the target.

    Without correction the torus covariance differs from the R^d covariance by
    a constant plus a smooth term growing like ``|lag|^2``.  Both are
    absorbed by least-squares corrections to the modes with the
    ``n_shells`` smallest integer norms ``|k|^2`` (the zero mode included),
    fitted over lags ``L/32 <= |lag| <= L/2``.  Returns the corrected values
    and the per-shell corrections.
    """
    if n_shells is None:
        n_shells = 4 if grid.dim == 1 else 6
    v = values.copy()
    v.flat[0] = 0.0
    axes = tuple(range(grid.dim))
    c0 = np.fft.irfftn(v, s=grid.shape, axes=axes) / grid.cell_volume
    r = _lag_radius(grid)
    L = grid.half_length
    sel = (r >= L / 32) & (r <= L / 2)
    target = model.covariance(_lag_vectors(grid)[sel])
    kint = np.rint(_rfft_wave_vectors(grid) / grid.frequency_spacing).astype(int)
    k2 = np.sum(kint**2, axis=-1)
    shells = np.unique(k2)[:n_shells]
    basis = []
    for sh in shells:
        e = np.where(k2 == sh, 1.0, 0.0)
        basis.append((np.fft.irfftn(e, s=grid.shape, axes=axes) / grid.cell_volume)[sel])
    delta, *_ = np.linalg.lstsq(np.array(basis).T, target - c0[sel], rcond=None)
    for sh, dl in zip(shells, delta):
        v[k2 == sh] += dl
    return v, dict(zip(shells.tolist(), delta.tolist()))


def grid_spectral_density(grid: GridSpec, model: CovarianceModel) -> GridSpectrum:
    """Spectral density at the grid modes (``rfftn`` layout)."""
    if model.dim != grid.dim:
        raise ValueError(f"model dimension {model.dim} differs from grid dimension {grid.dim}")
    if model.variant == "white":
        return GridSpectrum(grid, np.ones(grid.rwave_norm.shape), 1.0)
    if model.variant == "riesz":
        xi = _rfft_wave_vectors(grid)
        vals = model.spectral_density(xi)
        vals, corr = riesz_low_mode_calibration(grid, model, vals)
        if np.any(vals < 0):
            raise ValueError("low-mode calibration produced a negative spectral value; enlarge the torus")
        floor_val = float(model.spectral_density(np.full(grid.dim, np.pi / (4 * grid.half_length)))[()])
        return GridSpectrum(grid, vals, float(vals.flat[0]),
                            notes={"shell_corrections": corr, "floor_value_alternative": floor_val})
    # density: transform of the sampled covariance, clipped at zero
    lagvals = model.covariance(_lag_vectors(grid))
    spec = np.fft.rfftn(lagvals, axes=tuple(range(grid.dim))).real * grid.cell_volume
    neg = spec < 0
    clip = float(np.sum(-spec[neg])) / float(np.sum(np.abs(spec)))
    if clip > CLIP_REJECT:
        raise ValueError(f"covariance density transform has clipped mass fraction {clip:.2e} > {CLIP_REJECT}")
    spec = np.clip(spec, 0.0, None)
    return GridSpectrum(grid, spec, float(spec.flat[0]), clip)


def replica_generator(master_seed: int, replica_id: int) -> np.random.Generator:
    """Counter-based stream for one replica.

    The Philox key comes from ``SeedSequence(master_seed, spawn_key=(replica_id,))``,
    so replica ``k`` is reproducible without generating replicas ``0..k-1``.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica_id),))
    return np.random.Generator(np.random.Philox(ss))


class ReplicaNoise:
    """Standard normal node fields, one independent stream per replica."""

    def __init__(self, grid: GridSpec, master_seed: int, replica_ids):
        self.grid = grid
        self.replica_ids = np.asarray(list(replica_ids), dtype=int)
        self._gens = [replica_generator(master_seed, r) for r in self.replica_ids]

    def draw(self) -> np.ndarray:
        out = np.empty((len(self._gens),) + self.grid.shape)
        for i, g in enumerate(self._gens):
            g.standard_normal(out=out[i])
        return out

    def subset(self, mask) -> "ReplicaNoise":
        new = object.__new__(ReplicaNoise)
        new.grid = self.grid
        new.replica_ids = self.replica_ids[mask]
        new._gens = [g for g, m in zip(self._gens, mask) if m]
        return new


class CoarsenedNoise:
    """Feeds a solver with time step ``k dt`` from a source built for ``dt``.

    Each draw sums ``k`` consecutive fine draws and rescales by ``1/sqrt(k)``,
    so the coarse and fine solvers see the same Brownian increments.
    """

    def __init__(self, fine, factor: int = 2):
        self.fine = fine
        self.factor = int(factor)
        self.grid = fine.grid
        self.replica_ids = fine.replica_ids

    def draw(self) -> np.ndarray:
        acc = self.fine.draw()
        for _ in range(self.factor - 1):
            acc += self.fine.draw()
        return acc / np.sqrt(self.factor)

    def subset(self, mask):
        return CoarsenedNoise(self.fine.subset(mask), self.factor)


class EmbeddedNoise:
    """Noise on a small torus taken as the central block of a larger torus' noise.

    Both grids must share the spacing; the small torus sees exactly the node
    variables of the large one on ``[-L, L)^d``.
    """

    def __init__(self, big, small_grid: GridSpec):
        if not np.isclose(big.grid.spacing, small_grid.spacing):
            raise ValueError("embedded noise needs equal spacings")
        self.big = big
        self.grid = small_grid
        self.replica_ids = big.replica_ids
        off = (big.grid.points - small_grid.points) // 2
        self._sl = (slice(None),) + (slice(off, off + small_grid.points),) * small_grid.dim

    def draw(self) -> np.ndarray:
        return np.ascontiguousarray(self.big.draw()[self._sl])

    def subset(self, mask):
        return EmbeddedNoise(self.big.subset(mask), self.grid)


class NoiseFilter:
    """Maps standard normal node fields to noise increments over a step ``dt``."""

    def __init__(self, grid: GridSpec, model: CovarianceModel, dt: float, spectrum: GridSpectrum | None = None):
        self.grid = grid
        self.model = model
        self.dt = float(dt)
        self.spectrum = spectrum if spectrum is not None else grid_spectral_density(grid, model)
        self.white = model.variant == "white"
        self.amp = np.sqrt(self.dt / grid.cell_volume)
        self.sqrt_density = np.sqrt(self.spectrum.values)
        self._axes = tuple(range(-grid.dim, 0))

    def increment_hat(self, zeta: np.ndarray) -> np.ndarray:
        """rfftn of the increment field (per unit cell volume)."""
        zh = np.fft.rfftn(zeta, axes=self._axes)
        if self.white:
            return self.amp * zh
        return (self.amp * self.sqrt_density) * zh

    def increment(self, zeta: np.ndarray) -> np.ndarray:
        if self.white:
            return self.amp * zeta
        return np.fft.irfftn(self.increment_hat(zeta), s=self.grid.shape, axes=self._axes)


def sample_noise_increment(grid: GridSpec, model: CovarianceModel, dt: float, rng: np.random.Generator,
                           size: int | None = None) -> np.ndarray:
    """Gaussian increment field(s) with covariance ``dt * gamma`` (node values are cell averages)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    shape = grid.shape if size is None else (size,) + grid.shape
    zeta = rng.standard_normal(shape)
    return NoiseFilter(grid, model, dt).increment(zeta)


# ---------------------------------------------------------------------------
# sampler validation against the pairing covariance


@dataclass(frozen=True)
class GaussianBump:
    """Normalized Gaussian test function of standard deviation ``scale`` centred at ``center``."""

    scale: float
    center: float = 0.0          # offset along the first axis

    def sample(self, grid: GridSpec) -> np.ndarray:
        x = grid.coords()
        r2 = (x[0] - self.center) ** 2 + sum(xi ** 2 for xi in x[1:])
        s2 = self.scale ** 2
        return np.exp(-r2 / (2 * s2)) / (2 * np.pi * s2) ** (grid.dim / 2)


def bump_pairing(model: CovarianceModel, phi: GaussianBump, psi: GaussianBump) -> float:
    """``int int phi(y) psi(y') gamma(y - y') dy dy'`` by physical-space quadrature.

    The cross-correlation of two Gaussian bumps is a Gaussian of variance
    ``s1^2 + s2^2`` centred at the offset, so the double integral reduces to
    one radial integral against ``gamma`` (with a modified Bessel angular
    factor in 2D).
    """
    if model.variant == "riesz" and any(any(a) for _, a in model.masses):
        raise ValueError("bump pairing quadrature supports a point mass at the origin only")
    s2 = phi.scale ** 2 + psi.scale ** 2
    delta = abs(phi.center - psi.center)
    d = model.dim
    if model.variant == "white":
        return float(np.exp(-delta ** 2 / (2 * s2)) / (2 * np.pi * s2) ** (d / 2))
    gam = model.covariance_radial
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if d == 1:
            f = lambda z: (np.exp(-(z - delta) ** 2 / (2 * s2)) + np.exp(-(z + delta) ** 2 / (2 * s2))) \
                / np.sqrt(2 * np.pi * s2) * gam(np.array(z))[()]
            hi = delta + 12 * np.sqrt(s2)
            pts = [delta] if 0 < delta < hi else None
            v, _ = integrate.quad(f, 0, hi, points=pts, limit=400)
            return float(v)
        from scipy.special import i0e
        f = lambda r: r * gam(np.array(r))[()] / s2 * np.exp(-(r - delta) ** 2 / (2 * s2)) \
            * i0e(r * delta / s2)
        hi = delta + 12 * np.sqrt(s2)
        v, _ = integrate.quad(f, 0, hi, points=[delta] if delta > 0 else None, limit=400)
        return float(v)


DEFAULT_PAIRS = ((GaussianBump(1.0), GaussianBump(1.0)),
                 (GaussianBump(0.5), GaussianBump(0.5)),
                 (GaussianBump(1.0), GaussianBump(1.0, 2.0)),
                 (GaussianBump(0.5), GaussianBump(2.0)),
                 (GaussianBump(1.0), GaussianBump(0.5, 4.0)),
                 (GaussianBump(2.0), GaussianBump(2.0, 3.0)))


@dataclass
class SamplerCheck:
    model: dict
    rows: list          # per pair: empirical, target, se, z
    n_draws: int

    @property
    def max_abs_z(self) -> float:
        return float(max(abs(r["z"]) for r in self.rows))

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= 3.0


def validate_sampler(grid: GridSpec, model: CovarianceModel, n_draws: int = 10_000,
                     dt: float = 1.0, seed: int = 0, pairs=DEFAULT_PAIRS,
                     chunk: int = 500) -> SamplerCheck:
    """Empirical ``Cov(<W, phi>, <W, psi>)`` against ``dt`` times the pairing quadrature.

    The standard error uses the sample fourth moments of the pair.
    """
    rng = np.random.default_rng(seed)
    flt = NoiseFilter(grid, model, dt)
    tests = np.stack([np.stack([p.sample(grid).ravel(), q.sample(grid).ravel()]) for p, q in pairs])
    tests = tests.reshape(-1, tests.shape[-1]) * grid.cell_volume
    vals = []
    for start in range(0, n_draws, chunk):
        m = min(chunk, n_draws - start)
        W = flt.increment(rng.standard_normal((m,) + grid.shape)).reshape(m, -1)
        vals.append(W @ tests.T)
    X = np.concatenate(vals).reshape(n_draws, len(pairs), 2)
    rows = []
    for k, (p, q) in enumerate(pairs):
        a, b = X[:, k, 0], X[:, k, 1]
        prod = (a - a.mean()) * (b - b.mean())
        emp = float(prod.sum() / (n_draws - 1))
        se = float(prod.std(ddof=1) / np.sqrt(n_draws))
        target = dt * bump_pairing(model, p, q)
        rows.append({"phi": (p.scale, p.center), "psi": (q.scale, q.center), "empirical": emp,
                     "target": target, "se": se, "z": (emp - target) / se})
    return SamplerCheck(model.to_dict(), rows, n_draws)
