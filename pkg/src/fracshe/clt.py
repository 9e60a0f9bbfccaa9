"""Monte Carlo harness for the Gaussian fluctuations of spatial averages.

The central object is :class:`EnsembleSamples`: for every replica it holds
``G_R(t) = int_{B_R} (u(t, x) - 1) dx`` on a set of radii and record times,
plus per-replica spatial summaries of ``sigma(u)`` on the step lattice (used
for theta and nu).  Experiments are analyses of one such ensemble.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from . import kernels
from .constants import LimitConstants, cross_moment, k_beta
from .green import ball_weights
from .grid import GridSpec
from .noise import CovarianceModel
from .solver import SolverConfig, simulate
from .special import bessel_j_half_dim, unit_ball_volume, unit_sphere_area

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# spatial averages


def truncation_radius(grid: GridSpec, alpha: float, T: float) -> float:
    """Largest admissible ball radius: ``L - 4 T^{1/alpha}``."""
    return grid.half_length - 4.0 * T ** (1.0 / alpha)


def check_radius(grid: GridSpec, R: float, alpha: float | None = None, T: float | None = None):
    limit = grid.half_length if alpha is None else truncation_radius(grid, alpha, T)
    if not (0 < R <= limit):
        raise ValueError(f"radius {R} outside the truncation-safe range (0, {limit:.4g}] "
                         f"for L = {grid.half_length}")


def ball_weight_matrix(grid: GridSpec, radii) -> np.ndarray:
    """Rows are cell-volume weighted ball indicators, shape ``(len(radii), nodes)``."""
    return np.stack([ball_weights(grid, R).ravel() * grid.cell_volume for R in radii])


def spatial_average(u, grid: GridSpec, R: float, alpha: float | None = None,
                    T: float | None = None):
    """``sum_{|x| <= R} (u(x) - 1) dx^d`` with cut cells weighted by their covered fraction.

    ``u`` may carry leading batch axes.
    """
    check_radius(grid, R, alpha, T)
    u = np.asarray(u, dtype=float)
    w = ball_weights(grid, R) * grid.cell_volume
    axes = tuple(range(u.ndim - grid.dim, u.ndim))
    return np.sum((u - 1.0) * w, axis=axes)


# ---------------------------------------------------------------------------
# ensemble collection


class EnsembleRecorder:
    """Solver observer storing ball averages and sigma(u) summaries per replica."""

    every_step = True

    def __init__(self, cfg: SolverConfig, radii, record_steps, replica_ids,
                 moment_stride: int = 1):
        self.cfg = cfg
        self.weights = ball_weight_matrix(cfg.grid, radii)
        self.record_steps = {s: j for j, s in enumerate(record_steps)}
        self.row = {int(r): i for i, r in enumerate(replica_ids)}
        n = len(replica_ids)
        self.values = np.full((n, len(record_steps), len(radii)), np.nan)
        self.moment_steps = list(range(0, cfg.n_steps + 1, moment_stride))
        self.moment_index = {s: k for k, s in enumerate(self.moment_steps)}
        self.mean = np.full((len(self.moment_steps), n), np.nan)
        self.with_cross = cfg.model.beta == cfg.model.dim
        self.cross = np.full_like(self.mean, np.nan) if self.with_cross else None

    def observe(self, n, t, u, ids):
        rows = np.array([self.row[int(i)] for i in ids])
        if n in self.record_steps:
            flat = u.reshape(len(ids), -1) - 1.0
            self.values[rows, self.record_steps[n]] = flat @ self.weights.T
        k = self.moment_index.get(n)
        if k is not None:
            s = self.cfg.sigma(u)
            axes = tuple(range(1, s.ndim))
            self.mean[k, rows] = s.mean(axis=axes)
            if self.with_cross:
                self.cross[k, rows] = cross_moment(s, self.cfg.model, self.cfg.grid)


@dataclass
class EnsembleSamples:
    """Raw per-replica statistics of one ensemble run."""

    radii: np.ndarray
    times: np.ndarray                 # record times
    replica_ids: np.ndarray
    values: np.ndarray                # (replicas, times, radii)
    moment_times: np.ndarray
    mean_sigma: np.ndarray            # (moment times, replicas)
    cross_sigma: np.ndarray | None
    alpha: float
    model: CovarianceModel
    additive: bool = False
    failures: list = field(default_factory=list)

    @property
    def n_replicas(self) -> int:
        return len(self.replica_ids)

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"no snapshot at t={t}; recorded {self.times.tolist()}")
        return k

    def constants(self, rows=None) -> LimitConstants:
        rows = slice(None) if rows is None else rows
        m = self.mean_sigma[:, rows]
        n = m.shape[1]
        theta = m.mean(axis=1)
        theta_se = m.std(axis=1, ddof=1) / np.sqrt(n)
        nu = nu_se = None
        if self.cross_sigma is not None:
            c = self.cross_sigma[:, rows]
            nu2 = c.mean(axis=1)
            nu = np.sqrt(np.clip(nu2, 0.0, None))
            nu_se = c.std(axis=1, ddof=1) / np.sqrt(n) / np.maximum(2 * nu, 1e-300)
        kb = k_beta(self.model.dim, self.model.beta).value
        return LimitConstants(self.model, kb, self.moment_times, theta, theta_se, nu, nu_se,
                              provenance={"theta": "replica and node average of sigma(u)",
                                          "nu": "replica average of s * (gamma conv s)"
                                          if nu is not None else None,
                                          "replicas": n})

    def subset(self, rows) -> "EnsembleSamples":
        return dataclasses.replace(
            self, replica_ids=self.replica_ids[rows], values=self.values[rows],
            mean_sigma=self.mean_sigma[:, rows],
            cross_sigma=None if self.cross_sigma is None else self.cross_sigma[:, rows])

    @staticmethod
    def concatenate(parts) -> "EnsembleSamples":
        first = parts[0]
        cross = None if first.cross_sigma is None else np.concatenate([p.cross_sigma for p in parts], axis=1)
        return dataclasses.replace(
            first, replica_ids=np.concatenate([p.replica_ids for p in parts]),
            values=np.concatenate([p.values for p in parts]),
            mean_sigma=np.concatenate([p.mean_sigma for p in parts], axis=1),
            cross_sigma=cross, failures=sum((p.failures for p in parts), []))


def _run_chunk(cfg, radii, record_times, ids, moment_stride, noise_factory):
    steps = [int(round(t / cfg.dt)) for t in record_times]
    cfg = dataclasses.replace(cfg, output_times=tuple(record_times))
    rec = EnsembleRecorder(cfg, radii, steps, ids, moment_stride)
    traj = simulate(cfg, ids, noise_factory=noise_factory, observers=[rec], keep_fields=False)
    alive = np.isin(ids, traj.replica_ids)
    cross = None if rec.cross is None else rec.cross[:, alive]
    return EnsembleSamples(np.asarray(radii, float), np.asarray(record_times, float),
                           np.asarray(ids)[alive], rec.values[alive],
                           np.array(rec.moment_steps) * cfg.dt, rec.mean[:, alive], cross,
                           cfg.alpha, cfg.model, cfg.sigma.kind == "constant", traj.failures)


def run_ensemble(cfg: SolverConfig, radii, record_times, moment_stride: int = 1,
                 replica_ids=None, workers: int = 1, noise_factory=None) -> EnsembleSamples:
    """Simulate ``cfg`` and collect ball averages at ``record_times``.

    Replicas are split into contiguous ranges, one per worker; results are
    concatenated in replica order, so the output does not depend on
    ``workers``.
    """
    radii = np.asarray(radii, dtype=float)
    for R in radii:
        check_radius(cfg.grid, R, cfg.alpha, cfg.T)
    record_times = tuple(float(t) for t in record_times)
    for t in record_times:
        n = t / cfg.dt
        if abs(n - round(n)) > 1e-9 or t > cfg.T + 1e-12:
            raise ValueError(f"record time {t} is not on the step lattice of dt={cfg.dt}")
    ids = np.arange(cfg.replicas) if replica_ids is None else np.asarray(replica_ids, int)
    if workers <= 1 or noise_factory is not None:
        return _run_chunk(cfg, radii, record_times, ids, moment_stride, noise_factory)
    chunks = np.array_split(ids, workers)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(_run_chunk, cfg, radii, record_times, c, moment_stride, None)
                for c in chunks if len(c)]
        parts = [f.result() for f in futs]
    return EnsembleSamples.concatenate(parts)


def geometric_radii(r_max: float, count: int = 7, ratio: float = math.sqrt(2.0)) -> np.ndarray:
    """``count`` radii ending at ``r_max`` with constant ratio."""
    return r_max / ratio ** np.arange(count - 1, -1, -1)


# ---------------------------------------------------------------------------
# bootstrap utilities


def bootstrap_rows(n: int, n_boot: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, size=(n_boot, n))


def ols_slope(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def percentile_ci(samples, level: float = 0.95):
    a = 0.5 * (1 - level)
    return (float(np.quantile(samples, a)), float(np.quantile(samples, 1 - a)))


# ---------------------------------------------------------------------------
# spectral ball integrals (deterministic)


def ball_spectral_integral(model: CovarianceModel, R: float, factor, x_max: float = 2e3,
                           panel: float = 0.5) -> float:
    """``(2 pi)^{-d} int |F 1_{B_R}(xi)|^2 ghat(xi) factor(|xi|) dxi`` for radial models.

    With ``x = R |xi|`` this is ``|S^{d-1}| R^d int J_{d/2}(x)^2 / x ghat(x/R)
    factor(x/R) dx``.  The range ``[0, x_max]`` uses Gauss-Legendre panels;
    the remainder replaces ``J^2`` by its mean ``1/(pi x)``.
    """
    d = model.dim

    def f(x):
        x = np.asarray(x, float)
        k = x / R
        return bessel_j_half_dim(d, x) ** 2 / x * model.spectral_radial(k) * factor(k)

    head, _ = integrate.quad(f, 0.0, panel, limit=200)
    xg, wg = np.polynomial.legendre.leggauss(24)
    edges = np.arange(panel, x_max + 1e-9, panel)
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * xg[None, :]
    body = float(np.sum(f(nodes) * (0.5 * (b - a))[:, None] * wg[None, :]))
    g = lambda x: model.spectral_radial(x / R) * factor(x / R) / (np.pi * x * x)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        tail, _ = integrate.quad(g, x_max, np.inf, limit=200)
    return float(unit_sphere_area(d) * R ** d * (head + body + tail))


def _relaxation(a, t):
    """``int_0^t exp(-2 s a) ds`` evaluated stably."""
    a = np.asarray(a, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(-2 * t * a) / (2 * a)
    return np.where(a * t < 1e-12, t, out)


def additive_ball_covariance(model: CovarianceModel, alpha: float, R: float, t: float,
                             r: float | None = None, sigma_value: float = 1.0) -> float:
    """Exact ``Cov(G_R(t), G_R(r))`` for additive noise ``sigma = sigma_value``."""
    r = t if r is None else r
    lo, hi = min(t, r), max(t, r)
    fac = lambda k: np.exp(-(hi - lo) * k ** alpha) * _relaxation(k ** alpha, lo)
    return sigma_value ** 2 * ball_spectral_integral(model, R, fac)


def tightness_kernel(model: CovarianceModel, alpha: float, R: float, t: float, s: float) -> float:
    """Second moment bound K_R(t, s) of the increment of the ball integral, s <= t."""
    if s > t:
        s, t = t, s
    h = t - s
    if h == 0:
        return 0.0

    def fac(k):
        a = k ** alpha
        return (-np.expm1(-a * h)) ** 2 * _relaxation(a, s) + _relaxation(a, h)

    return ball_spectral_integral(model, R, fac)


@dataclass
class TightnessReport:
    rows: list          # dicts R, t, s, K, ratio
    max_ratio: float
    min_ratio: float
    doubling_gap: float
    threshold: float = 10.0

    @property
    def spread(self) -> float:
        return self.max_ratio / self.min_ratio

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_ratio) and self.spread < self.threshold)


def tightness_check(model: CovarianceModel, alpha: float, radii, time_pairs) -> TightnessReport:
    """Ratios ``K_R(t, s) / (R^{2d - beta} (t - s))`` over radii and time pairs."""
    d, beta = model.dim, model.beta
    rows = []
    for R in radii:
        for t, s in time_pairs:
            if t == s:
                rows.append(dict(R=float(R), t=t, s=s, K=0.0, ratio=np.nan))
                continue
            K = tightness_kernel(model, alpha, R, t, s)
            if not np.isfinite(K):
                raise ArithmeticError(f"tightness quadrature failed at R={R}, t={t}, s={s}")
            rows.append(dict(R=float(R), t=t, s=s, K=K, ratio=K / (R ** (2 * d - beta) * abs(t - s))))
    ratios = np.array([r["ratio"] for r in rows if np.isfinite(r["ratio"])])
    gaps = []
    by_key = {(r["R"], r["t"], r["s"]): r["ratio"] for r in rows}
    for (R, t, s), v in by_key.items():
        w = by_key.get((2 * R, t, s))
        if w is not None and np.isfinite(v):
            gaps.append(abs(w / v - 1))
    return TightnessReport(rows, float(ratios.max()), float(ratios.min()),
                           float(max(gaps)) if gaps else np.nan)


# ---------------------------------------------------------------------------
# variance scaling


@dataclass
class VarianceScalingResult:
    radii: np.ndarray
    variance: np.ndarray
    variance_se: np.ndarray
    variance_ci: np.ndarray          # (radii, 2)
    slope: float
    slope_ci: tuple
    target: float
    tolerance: float = 0.15
    oracle: np.ndarray | None = None
    notes: list = field(default_factory=list)

    @property
    def slope_in_band(self) -> bool:
        return abs(self.slope - self.target) <= self.tolerance

    @property
    def ci_resolved(self) -> bool:
        return 0.5 * (self.slope_ci[1] - self.slope_ci[0]) <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.slope_in_band and self.ci_resolved

    def oracle_z(self) -> np.ndarray | None:
        if self.oracle is None:
            return None
        return (self.variance - self.oracle) / self.variance_se

    @property
    def oracle_passed(self) -> bool | None:
        z = self.oracle_z()
        return None if z is None else bool(np.all(np.abs(z) <= 3.0))


def variance_scaling(samples: EnsembleSamples, t: float, n_boot: int = 1000, seed: int = 0,
                     oracle: bool = False, min_replicas: int = 5000) -> VarianceScalingResult:
    """Per-radius variances of G_R(t) and the log-log slope, with a joint replica bootstrap."""
    k = samples.time_index(t)
    x = samples.values[:, k, :]
    n = x.shape[0]
    var = x.var(axis=0, ddof=1)
    logR = np.log(samples.radii)
    slope = ols_slope(logR, np.log(var))
    idx = bootstrap_rows(n, n_boot, seed)
    bvar = np.stack([x[i].var(axis=0, ddof=1) for i in idx])
    bslope = np.array([ols_slope(logR, np.log(v)) for v in bvar])
    d, beta = samples.model.dim, samples.model.beta
    notes = []
    if n < min_replicas:
        notes.append(f"only {n} replicas (< {min_replicas}); CI widths may exceed the tolerance")
    if samples.radii.max() / samples.radii.min() < 8 - 1e-9 or len(samples.radii) < 5:
        notes.append("radii do not span a factor 8 with at least 5 values")
    orc = None
    if oracle:
        orc = np.array([additive_ball_covariance(samples.model, samples.alpha, R, t) for R in samples.radii])
    res = VarianceScalingResult(samples.radii, var, bvar.std(axis=0, ddof=1),
                                np.array([percentile_ci(bvar[:, j]) for j in range(len(var))]),
                                slope, percentile_ci(bslope), 2 * d - beta, oracle=orc, notes=notes)
    if not res.ci_resolved:
        res.notes.append("slope CI half-width exceeds the tolerance: more replicas needed")
    return res


# ---------------------------------------------------------------------------
# limiting covariance


def _target_integral(samples: EnsembleSamples, rows, upper: float) -> float:
    return samples.constants(rows).integrated_rho_squared(upper)


@dataclass
class LimitingCovarianceResult:
    radii: np.ndarray
    t: float
    r: float
    normalized: np.ndarray          # R^{beta - 2d} Cov per radius
    normalized_se: np.ndarray
    target: float
    target_se: float
    gap_se: float                   # bootstrap s.e. of (normalized - target) at the largest R
    rel_tolerance: float = 0.10

    @property
    def gap(self) -> float:
        return float(self.normalized[-1] - self.target)

    @property
    def relative_gap(self) -> float:
        return abs(self.gap) / abs(self.target)

    @property
    def passed(self) -> bool:
        return bool(abs(self.gap) < max(self.rel_tolerance * abs(self.target), 3 * self.gap_se))


def limiting_covariance(samples: EnsembleSamples, t: float, r: float | None = None,
                        n_boot: int = 500, seed: int = 1) -> LimitingCovarianceResult:
    r = t if r is None else r
    kt, kr = samples.time_index(t), samples.time_index(r)
    d, beta = samples.model.dim, samples.model.beta
    scale = samples.radii ** (beta - 2 * d)

    def stat(rows):
        a = samples.values[rows, kt, :]
        b = samples.values[rows, kr, :]
        cov = np.mean((a - a.mean(0)) * (b - b.mean(0)), axis=0) * len(a) / (len(a) - 1)
        return cov * scale

    n = samples.n_replicas
    full = stat(slice(None))
    target = _target_integral(samples, slice(None), min(t, r))
    idx = bootstrap_rows(n, n_boot, seed)
    bs = np.stack([stat(i) for i in idx])
    bt = np.array([_target_integral(samples, i, min(t, r)) for i in idx])
    gap_se = float(np.std(bs[:, -1] - bt, ddof=1))
    return LimitingCovarianceResult(samples.radii, t, r, full, bs.std(axis=0, ddof=1),
                                    target, float(bt.std(ddof=1)), gap_se)


# ---------------------------------------------------------------------------
# distances to the Gaussian


def ks_distance(z) -> float:
    """Kolmogorov distance of the standardized sample to N(0, 1)."""
    z = np.sort((z - z.mean()) / z.std(ddof=1))
    n = z.size
    cdf = special.ndtr(z)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def scott_edges(n: int, lo: float = -5.0, hi: float = 5.0) -> np.ndarray:
    """Scott-rule bin edges for a standardized sample of size n on [lo, hi]."""
    h = 3.49 * n ** (-1.0 / 3.0)
    m = int(np.ceil((hi - lo) / h))
    return np.linspace(lo, hi, m + 1)


def tv_distance(z, edges=None) -> float:
    """Binned total-variation distance of the standardized sample to N(0, 1).

    Mass outside the outermost edges is one more bin on each side.
    """
    z = (z - z.mean()) / z.std(ddof=1)
    n = z.size
    edges = scott_edges(n) if edges is None else edges
    counts = np.histogram(z, bins=edges)[0]
    below = np.sum(z < edges[0])
    above = np.sum(z > edges[-1])
    p_hat = np.concatenate([[below], counts, [above]]) / n
    cdf = special.ndtr(edges)
    p = np.concatenate([[cdf[0]], np.diff(cdf), [1 - cdf[-1]]])
    return float(0.5 * np.sum(np.abs(p_hat - p)))


def distance_floors(n: int) -> dict:
    """Declared null floors: KS at 95% and the binned TV noise bound sqrt(bins/n)."""
    bins = len(scott_edges(n)) + 1
    return {"ks": 1.36 / math.sqrt(n), "tv": math.sqrt(bins / n), "bins": bins}


@dataclass
class DistanceEstimate:
    raw: float
    corrected: float
    ci: tuple
    boot_sd: float


@dataclass
class NullCalibration:
    n: int
    trials: int
    ks_values: np.ndarray
    tv_values: np.ndarray
    floors: dict

    @property
    def ks_pass_rate(self) -> float:
        return float(np.mean(self.ks_values < self.floors["ks"]))

    @property
    def tv_pass_rate(self) -> float:
        return float(np.mean(self.tv_values < self.floors["tv"]))

    @property
    def passed(self) -> bool:
        return self.ks_pass_rate >= 0.95 and self.tv_pass_rate == 1.0

    @property
    def ordering_ok(self) -> bool:
        return bool(np.all(self.ks_values <= self.tv_values + self.floors["tv"]))


def null_calibration(n: int, trials: int = 40, seed: int = 7) -> NullCalibration:
    """Apply both estimators to exact N(0, 1) samples of size n."""
    rng = np.random.default_rng(seed)
    ks, tv = [], []
    for _ in range(trials):
        z = rng.standard_normal(n)
        ks.append(ks_distance(z))
        tv.append(tv_distance(z))
    return NullCalibration(n, trials, np.array(ks), np.array(tv), distance_floors(n))


@dataclass
class DistanceDecayResult:
    radii: np.ndarray
    ks: list
    tv: list
    ks_slope: float
    ks_slope_ci: tuple
    tv_slope: float
    tv_slope_ci: tuple
    bound: float                 # -beta/2 + 0.2
    floors: dict
    null: NullCalibration | None = None

    @staticmethod
    def _monotone(est) -> bool:
        """No significant increase between neighbours and a significant overall decrease."""
        for a, b in zip(est[:-1], est[1:]):
            if b.ci[0] > a.ci[1]:
                return False
        return est[-1].ci[1] < est[0].ci[0]

    @property
    def ks_decreasing(self) -> bool:
        return self._monotone(self.ks)

    @property
    def tv_decreasing(self) -> bool:
        return self._monotone(self.tv)

    @property
    def ordering_ok(self) -> bool:
        return all(k.raw <= t.raw + self.floors["tv"] for k, t in zip(self.ks, self.tv))

    @property
    def passed(self) -> bool:
        null_ok = self.null is None or self.null.passed
        return bool(null_ok and self.ks_decreasing and self.tv_decreasing
                    and self.ks_slope <= self.bound and self.tv_slope <= self.bound
                    and self.ordering_ok)


def _decay_slope(logR, est, boot):
    vals = np.array([max(e.corrected, 1e-12) for e in est])
    slope = ols_slope(logR, np.log(vals))
    bs = np.array([ols_slope(logR, np.log(np.maximum(row, 1e-12))) for row in boot])
    sd = bs.std(ddof=1)
    return slope, (slope - 1.96 * sd, slope + 1.96 * sd)


def gaussian_distance(samples: EnsembleSamples, t: float, n_boot: int = 200, seed: int = 3,
                      calibrate: bool = True, min_replicas: int = 10_000) -> DistanceDecayResult:
    """KS and binned TV distances of standardized G_R(t) to N(0, 1), per radius.

    Both estimators are bias corrected by the bootstrap; the decay slope is
    fitted to the corrected values.
    """
    k = samples.time_index(t)
    n = samples.n_replicas
    if n < 200:
        raise ValueError(f"{n} replicas are too few for Scott-rule binning")
    if n < min_replicas:
        log.warning("distance experiment with %d replicas (< %d)", n, min_replicas)
    rng = np.random.default_rng(seed)
    ks, tv, ks_b, tv_b = [], [], [], []
    for j in range(len(samples.radii)):
        z = samples.values[:, k, j]
        idx = rng.integers(0, n, size=(n_boot, n))
        kb = np.array([ks_distance(z[i]) for i in idx])
        tb = np.array([tv_distance(z[i]) for i in idx])
        for fn, b, out, store in ((ks_distance, kb, ks, ks_b), (tv_distance, tb, tv, tv_b)):
            raw = fn(z)
            bias = b.mean() - raw
            lo, hi = percentile_ci(b - 2 * bias)
            out.append(DistanceEstimate(raw, raw - bias, (lo, hi), float(b.std(ddof=1))))
            store.append(b - 2 * bias)
    logR = np.log(samples.radii)
    ks_slope, ks_ci = _decay_slope(logR, ks, np.array(ks_b).T)
    tv_slope, tv_ci = _decay_slope(logR, tv, np.array(tv_b).T)
    null = null_calibration(n) if calibrate else None
    return DistanceDecayResult(samples.radii, ks, tv, ks_slope, ks_ci, tv_slope, tv_ci,
                               -samples.model.beta / 2 + 0.2, distance_floors(n), null)


# ---------------------------------------------------------------------------
# functional CLT


@dataclass
class FcltResult:
    times: np.ndarray
    empirical: np.ndarray        # normalized covariance matrix
    target: np.ndarray
    se: np.ndarray
    mardia_statistic: float
    mardia_p: float
    gate_normality: bool
    rel_tolerance: float = 0.15

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.empirical - self.target)

    @property
    def entry_ok(self) -> np.ndarray:
        return self.gap < np.maximum(self.rel_tolerance * np.abs(self.target), 3 * self.se)

    @property
    def max_relative_gap(self) -> float:
        return float(np.max(self.gap / np.abs(self.target)))

    @property
    def normality_ok(self) -> bool:
        return self.mardia_p > 0.01

    @property
    def passed(self) -> bool:
        ok = bool(np.all(self.entry_ok))
        return ok and (self.normality_ok or not self.gate_normality)


def mardia_skewness_test(x: np.ndarray):
    """Mardia's multivariate skewness statistic and its chi-square p-value."""
    n, k = x.shape
    z = x - x.mean(axis=0)
    S = z.T @ z / n
    b1 = float(kernels.mardia_skewness(np.ascontiguousarray(z), np.linalg.inv(S)))
    stat = n * b1 / 6.0
    dof = k * (k + 1) * (k + 2) / 6.0
    return stat, float(stats.chi2.sf(stat, dof))


def fclt(samples: EnsembleSamples, radius_index: int = -1, n_boot: int = 300, seed: int = 5,
         gate_normality: bool | None = None, times=None) -> FcltResult:
    """Covariance of ``R^{beta/2 - d} G_R(t_i)`` against ``int_0^{t_i ^ t_j} rho^2``.

    The Mardia check gates the verdict only for additive noise, where the
    vector is exactly Gaussian; otherwise it is reported.
    """
    times = samples.times if times is None else np.asarray(times, float)
    if len(times) < 8:
        raise ValueError(f"functional check needs at least 8 snapshots, got {len(times)}")
    ks = [samples.time_index(t) for t in times]
    d, beta = samples.model.dim, samples.model.beta
    R = samples.radii[radius_index]
    x = samples.values[:, ks, radius_index] * R ** (beta / 2 - d)
    emp = np.cov(x, rowvar=False)
    mins = np.minimum.outer(times, times)

    def target_matrix(rows):
        c = samples.constants(rows)
        return np.vectorize(c.integrated_rho_squared)(mins)

    tgt = target_matrix(slice(None))
    idx = bootstrap_rows(len(x), n_boot, seed)
    diffs = np.stack([np.cov(x[i], rowvar=False) - target_matrix(i) for i in idx])
    stat, p = mardia_skewness_test(x)
    if gate_normality is None:
        gate_normality = samples.additive
    return FcltResult(np.asarray(times), emp, tgt, diffs.std(axis=0, ddof=1), stat, p, gate_normality)
