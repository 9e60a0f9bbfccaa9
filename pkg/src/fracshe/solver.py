"""Spectral exponential-Euler integration of the mild equation on the torus.

Default scheme (``exponential-euler``)::

    u_hat(t + dt) = E u_hat(t) + Phi F[sigma(u(t)) dW]

with ``E = exp(-dt |xi|^alpha)`` and the noise weight
``Phi = sqrt((1 - E^2) / (2 dt |xi|^alpha))``, which gives each injected
mode exactly the variance of the stochastic convolution over one step
when the integrand is frozen at the left end point.  The unweighted variant
``u_hat(t + dt) = E (u_hat + F[sigma(u) dW])`` is available as
``exponential-euler-literal``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import kernels
from .grid import GridSpec
from .noise import (CovarianceModel, GridSpectrum, NoiseFilter, ReplicaNoise,
                    grid_spectral_density, verify_dalang)

log = logging.getLogger(__name__)

BLOWUP = 1e8
SCHEMES = ("exponential-euler", "exponential-euler-literal")


# ---------------------------------------------------------------------------
# diffusion coefficient


@dataclass(frozen=True)
class SigmaSpec:
    """Lipschitz diffusion coefficient.

    Kinds: ``constant`` (c), ``linear`` (a, b) for ``a u + b``, ``sine`` (c, d)
    for ``c sin(u) + d``, ``clamped`` (a, b, lo, hi) for ``clip(a u + b, lo, hi)``.
    """

    kind: str
    params: tuple

    _ARITY = {"constant": 1, "linear": 2, "sine": 2, "clamped": 4}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ValueError(f"unknown sigma kind {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        if len(p) != self._ARITY[self.kind]:
            raise ValueError(f"sigma kind {self.kind!r} takes {self._ARITY[self.kind]} parameters")
        if self.kind == "clamped" and not p[2] < p[3]:
            raise ValueError("clamped sigma needs lo < hi")
        object.__setattr__(self, "params", p)

    @classmethod
    def constant(cls, c):
        return cls("constant", (c,))

    @classmethod
    def linear(cls, a, b=0.0):
        return cls("linear", (a, b))

    @classmethod
    def sine(cls, c, d):
        return cls("sine", (c, d))

    @classmethod
    def clamped(cls, a, b, lo, hi):
        return cls("clamped", (a, b, lo, hi))

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["params"]))

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    def __call__(self, u):
        p = self.params
        if self.kind == "constant":
            return np.full_like(np.asarray(u, dtype=float), p[0])
        if self.kind == "linear":
            return p[0] * u + p[1]
        if self.kind == "sine":
            return p[0] * np.sin(u) + p[1]
        return np.clip(p[0] * u + p[1], p[2], p[3])

    @property
    def has_derivative(self) -> bool:
        return self.kind != "clamped"

    def derivative(self, u):
        p = self.params
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(u)
        if self.kind == "linear":
            return np.full_like(u, p[0])
        if self.kind == "sine":
            return p[0] * np.cos(u)
        raise ValueError("clamped sigma has no registered derivative")

    @property
    def lipschitz_constant(self) -> float:
        return 0.0 if self.kind == "constant" else abs(self.params[0])

    @property
    def sigma_at_one(self) -> float:
        return float(self(np.array(1.0)))

    @property
    def is_affine(self) -> bool:
        return self.kind in ("constant", "linear")

    def check_lipschitz(self, n: int = 10_000, seed: int = 0, spread: float = 10.0) -> float:
        """Largest observed difference quotient over ``n`` random pairs, relative to the constant."""
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(-spread, spread, (2, n))
        q = np.abs(self(x) - self(y)) / np.abs(x - y)
        L = self.lipschitz_constant
        return float(q.max() / L) if L > 0 else float(q.max())


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SolverConfig:
    alpha: float
    dt: float
    T: float
    grid: GridSpec
    sigma: SigmaSpec
    model: CovarianceModel
    scheme: str = "exponential-euler"
    replicas: int = 1
    seed: int = 0
    output_times: tuple = ()
    batch_elements: int = 1 << 20

    def __post_init__(self):
        if not self.output_times:
            self.output_times = (self.T,)
        self.output_times = tuple(float(t) for t in self.output_times)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def output_steps(self) -> list:
        out = []
        for t in self.output_times:
            k = t / self.dt
            if abs(k - round(k)) > 1e-6 or t < 0 or t > self.T + 1e-12:
                raise ValueError(f"output time {t} is not a step multiple in [0, T]")
            out.append(int(round(k)))
        return out

    @property
    def batch_size(self) -> int:
        return max(1, self.batch_elements // int(np.prod(self.grid.shape)))

    def violations(self) -> list:
        v = list(self.model.violations(self.alpha))
        if self.model.dim != self.grid.dim:
            v.append(f"noise dimension {self.model.dim} differs from grid dimension {self.grid.dim}")
        if not self.dt > 0:
            v.append("dt must be positive")
        if not self.T > 0:
            v.append("T must be positive")
        elif self.dt > self.T:
            v.append("dt must not exceed T")
        elif abs(self.T / self.dt - round(self.T / self.dt)) > 1e-6:
            v.append("T must be an integer multiple of dt")
        if self.scheme not in SCHEMES:
            v.append(f"unknown scheme {self.scheme!r}")
        if self.replicas < 1:
            v.append("replicas must be >= 1")
        if not v:
            ok, msg = verify_dalang(self.model, self.alpha)
            if not ok:
                v.append(f"Dalang condition fails: {msg}")
        return v

    def validate(self):
        v = self.violations()
        if v:
            raise ValueError("; ".join(v))

    def to_dict(self):
        return {"alpha": self.alpha, "dt": self.dt, "T": self.T, "grid": self.grid.to_dict(),
                "sigma": self.sigma.to_dict(), "model": self.model.to_dict(), "scheme": self.scheme,
                "replicas": self.replicas, "seed": self.seed, "output_times": list(self.output_times)}


class SolverBlowUp(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# stepping


class SpectralStepper:
    """Precomputed multipliers for one (grid, alpha, dt, model, scheme)."""

    def __init__(self, cfg: SolverConfig, spectrum: GridSpectrum | None = None):
        g = cfg.grid
        self.grid = g
        self.sigma = cfg.sigma
        self.filter = NoiseFilter(g, cfg.model, cfg.dt, spectrum)
        lam = g.rwave_norm**cfg.alpha
        x = cfg.dt * lam
        self.decay = np.exp(-x)
        if cfg.scheme == "exponential-euler":
            with np.errstate(invalid="ignore", divide="ignore"):
                phi = np.sqrt(-np.expm1(-2 * x) / (2 * x))
            self.weight = np.where(x > 0, phi, 1.0)
        else:
            self.weight = self.decay
        self.axes = tuple(range(-g.dim, 0))

    def rfft(self, f):
        return np.fft.rfftn(f, axes=self.axes)

    def irfft(self, fh):
        return np.fft.irfftn(fh, s=self.grid.shape, axes=self.axes)

    def noise_term(self, u, zeta):
        """Spectrum of sigma(u) dW, with dW built from standard normal ``zeta``."""
        if self.sigma.kind == "constant":
            return self.sigma.params[0] * self.filter.increment_hat(zeta)
        return self.rfft(self.sigma(u) * self.filter.increment(zeta))

    def step(self, u, uh, zeta):
        uh = self.decay * uh + self.weight * self.noise_term(u, zeta)
        return self.irfft(uh), uh

    def step_linear(self, D, Dh, coeff, dW):
        """Step the linearised equation: ``D_hat <- E D_hat + Phi F[coeff D dW]``."""
        Dh = self.decay * Dh + self.weight * self.rfft(coeff * D * dW)
        return self.irfft(Dh), Dh

    def step_increment_sd(self) -> float:
        """Standard deviation of one step's noise contribution at a node, for sigma(u) = sigma(1)."""
        g = self.grid
        w2 = (self.weight**2) * self.filter.spectrum.values
        # rfft layout: double-count the interior of the last axis
        mult = np.full(w2.shape[-1], 2.0)
        mult[0] = 1.0
        if g.points % 2 == 0:
            mult[-1] = 1.0
        total = float(np.sum(w2 * mult)) * self.filter.dt / g.volume
        return abs(self.sigma.sigma_at_one) * math.sqrt(total)


def _blown(u):
    m = np.max(np.abs(u.reshape(u.shape[0], -1)), axis=1)
    return ~np.isfinite(m) | (m > BLOWUP), m


@dataclass
class Trajectory:
    times: tuple
    replica_ids: np.ndarray
    fields: np.ndarray | None          # (replicas, times, *grid.shape)
    failures: list = field(default_factory=list)


def simulate(cfg: SolverConfig, replica_ids: Sequence[int] | None = None,
             noise_factory: Callable | None = None, observers: Sequence = (),
             keep_fields: bool = True, stepper: SpectralStepper | None = None) -> Trajectory:
    """Run the scheme for the given replicas.

    Parameters
    ----------
    noise_factory : callable(ids) -> source with ``draw()``, optional
        Replaces the default per-replica streams (used for coupled runs).
    observers : sequence
        Objects with ``observe(step, t, u, ids)``, called at output times, and
        optionally ``every_step = True`` to be called after every step.
    """
    cfg.validate()
    if replica_ids is None:
        replica_ids = range(cfg.replicas)
    replica_ids = np.asarray(list(replica_ids), dtype=int)
    stepper = stepper or SpectralStepper(cfg)
    out_steps = cfg.output_steps()
    n_out = len(out_steps)
    keep = np.zeros((len(replica_ids), n_out) + cfg.grid.shape) if keep_fields else None
    alive = np.ones(len(replica_ids), dtype=bool)
    failures = []
    bs = cfg.batch_size
    for start in range(0, len(replica_ids), bs):
        ids = replica_ids[start:start + bs]
        idx = np.arange(start, start + len(ids))
        src = noise_factory(ids) if noise_factory else ReplicaNoise(cfg.grid, cfg.seed, ids)
        u = np.ones((len(ids),) + cfg.grid.shape)
        uh = stepper.rfft(u)

        def emit(n, u, ids, idx):
            t = n * cfg.dt
            if n in out_steps:
                for obs in observers:
                    obs.observe(n, t, u, ids)
                if keep is not None:
                    for j, s in enumerate(out_steps):
                        if s == n:
                            keep[idx, j] = u
            else:
                for obs in observers:
                    if getattr(obs, "every_step", False):
                        obs.observe(n, t, u, ids)

        emit(0, u, ids, idx)
        for n in range(1, cfg.n_steps + 1):
            u, uh = stepper.step(u, uh, src.draw())
            bad, m = _blown(u)
            if np.any(bad):
                for b in np.nonzero(bad)[0]:
                    msg = f"replica {ids[b]} blew up at t={n * cfg.dt:.6g}, max|u|={m[b]:.3e}"
                    log.error(msg)
                    failures.append({"replica": int(ids[b]), "t": n * cfg.dt, "max_abs": float(m[b])})
                alive[idx[bad]] = False
                good = ~bad
                u, uh, ids, idx = u[good], uh[good], ids[good], idx[good]
                src = src.subset(good)
                if len(ids) == 0:
                    break
            emit(n, u, ids, idx)
    if keep is not None:
        keep = keep[alive]
    return Trajectory(tuple(cfg.output_times), replica_ids[alive], keep, failures)


# ---------------------------------------------------------------------------
# Picard oracle


@dataclass
class PicardResult:
    iterates: list            # fields at T, u_0 .. u_n
    sup_differences: list     # sup over (t, x) of |u_{k+1} - u_k|
    converged: bool


def picard_iterate(cfg: SolverConfig, n_iterations: int, replica_id: int = 0) -> PicardResult:
    """Picard iterates on one frozen noise path (the same draws ``simulate`` uses)."""
    cfg.validate()
    if not cfg.sigma.is_affine:
        raise ValueError("the Picard oracle supports constant or linear sigma only")
    stepper = SpectralStepper(cfg)
    src = ReplicaNoise(cfg.grid, cfg.seed, [replica_id])
    n = cfg.n_steps
    dW = np.array([stepper.filter.increment(src.draw()[0]) for _ in range(n)])
    path = np.ones((n + 1,) + cfg.grid.shape)
    iterates = [path[-1].copy()]
    diffs = []
    one_h = stepper.rfft(np.ones(cfg.grid.shape))
    for _ in range(n_iterations):
        new = np.empty_like(path)
        new[0] = 1.0
        vh = one_h.copy()
        for j in range(n):
            vh = stepper.decay * vh + stepper.weight * stepper.rfft(cfg.sigma(path[j]) * dW[j])
            new[j + 1] = stepper.irfft(vh)
        diffs.append(float(np.max(np.abs(new - path))))
        path = new
        iterates.append(path[-1].copy())
    tail = diffs[12:] if len(diffs) > 12 else []
    converged = not tail or all(b <= a or b < 1e-13 for a, b in zip(tail[:-1], tail[1:]))
    if not converged:
        log.warning("Picard differences not decaying after 12 iterations: %s", tail)
    return PicardResult(iterates, diffs, converged)


# ---------------------------------------------------------------------------
# h_n series


def time_moments(model: CovarianceModel, alpha: float, taus: np.ndarray):
    """``J(tau) = int_0^tau I`` and ``K(tau) = int_0^tau s I(s) ds`` on an array of taus."""
    from .noise import _tail_params
    from .special import unit_sphere_area
    d = model.dim
    taus = np.asarray(taus, dtype=float)

    def f(k):
        lam = k**alpha
        x = 2 * taus * lam
        jj = -np.expm1(-x) / (2 * lam)
        small = x < 1e-4
        kk = np.where(small, taus**2 * (0.5 - x / 3.0),
                      (-np.expm1(-x) - x * np.exp(-x)) / (4 * lam * lam + 1e-300))
        return np.concatenate([jj, kk]) * model.spectral_radial(k) * k ** (d - 1)

    edges = np.concatenate([[0.0], np.logspace(-4, 5, 46)])
    total = np.zeros(2 * taus.size)
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad_vec(f, a, b, epsrel=1e-10)[0]
    power, c = _tail_params(model, alpha, -alpha)
    if power is not None:
        # the J integrand only reaches its 1/(2|xi|^alpha) envelope once 2 tau |xi|^alpha >> 1
        env = -np.expm1(-2 * taus * edges[-1] ** alpha)
        total[:taus.size] += env * 0.5 * c * edges[-1] ** (power + 1) / (-(power + 1))
    total *= unit_sphere_area(d) / (2 * np.pi) ** d
    return total[:taus.size], total[taus.size:]


@dataclass
class SeriesReport:
    t: np.ndarray
    terms: np.ndarray         # h_n(t), shape (n_max + 1, len(t))
    partial_sums: np.ndarray  # cumulative sums of h_n^{1/p}
    tail_increment: float     # max_t (S_20 - S_12) / S_20
    growth_rate: float        # fitted C with S(t) <= exp(C (1 + t)); finite iff the sums stay bounded
    cauchy: bool


def picard_series_check(model: CovarianceModel, alpha: float, iota: float, p: float, T: float,
                        n_max: int = 20, n_time: int = 400) -> SeriesReport:
    """Terms ``h_n(t) = iota int_0^t h_{n-1}(s) I(t-s) ds`` with ``h_0 = 1``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    t = np.linspace(0.0, T, n_time + 1)
    delta = t[1]
    terms = np.zeros((n_max + 1, t.size))
    terms[0] = 1.0
    if iota != 0.0:
        J, K = time_moments(model, alpha, t)
        A = np.diff(J)
        B = np.diff(K)
        ell = np.arange(n_time)
        w0 = B / delta - ell * A
        w1 = (ell + 1) * A - B / delta
        for n in range(1, n_max + 1):
            terms[n] = iota * kernels.volterra_product(w0, w1, terms[n - 1])
    terms = np.maximum(terms, 0.0)
    S = np.cumsum(terms ** (1.0 / p), axis=0)
    top = S[-1]
    lo = S[min(12, n_max)]
    inc = float(np.max((top - lo) / top))
    rate = float(np.max(np.log(top) / (1.0 + t)))
    if not np.all(np.isfinite(top)):
        log.error("h_n series diverges; check the correlation kernel")
    return SeriesReport(t, terms, S, inc, rate, inc < 1e-6)


# ---------------------------------------------------------------------------
# Malliavin derivative


def malliavin_derivative_path(cfg: SolverConfig, r: float, z_index, times: Sequence[float],
                              replica_ids: Sequence[int]) -> np.ndarray:
    """``D_{r,z} u(t, .)`` at ``times`` (> r), replaying each replica's noise.

    Returns an array of shape (replicas, len(times), *grid.shape).
    """
    cfg.validate()
    if not cfg.sigma.has_derivative:
        raise ValueError("sigma has no registered derivative")
    from .green import evaluate_kernel
    stepper = SpectralStepper(cfg)
    g = cfg.grid
    n_r = int(round(r / cfg.dt))
    if abs(n_r * cfg.dt - r) > 1e-9:
        raise ValueError("r must be a step multiple")
    t_steps = [int(round(tt / cfg.dt)) for tt in times]
    if min(t_steps) <= n_r or max(t_steps) > cfg.n_steps:
        raise ValueError("times must lie in (r, T]")
    z_index = tuple(np.atleast_1d(z_index).tolist())
    if len(z_index) != g.dim:
        raise ValueError("z_index must have one entry per dimension")
    # one-step kernel centred at z
    kern = evaluate_kernel(g, cfg.alpha, cfg.dt).values
    shift = tuple(zi - g.origin_index for zi in z_index)
    kern = np.roll(kern, shift, axis=tuple(range(g.dim)))
    ids = np.asarray(list(replica_ids), dtype=int)
    out = np.zeros((len(ids), len(t_steps)) + g.shape)
    bs = cfg.batch_size
    for start in range(0, len(ids), bs):
        bid = ids[start:start + bs]
        src = ReplicaNoise(g, cfg.seed, bid)
        u = np.ones((len(bid),) + g.shape)
        uh = stepper.rfft(u)
        D = Dh = None
        for n in range(1, max(t_steps) + 1):
            zeta = src.draw()
            dW = stepper.filter.increment(zeta)
            if n == n_r + 1:
                uz = u[(slice(None),) + z_index]
                D = kern[None] * cfg.sigma(uz).reshape((-1,) + (1,) * g.dim)
                Dh = stepper.rfft(D)
            elif n > n_r + 1:
                D, Dh = stepper.step_linear(D, Dh, cfg.sigma.derivative(u), dW)
            uh = stepper.decay * uh + stepper.weight * stepper.rfft(cfg.sigma(u) * dW)
            u = stepper.irfft(uh)
            if D is not None and np.any(_blown(D)[0]):
                raise SolverBlowUp(f"Malliavin derivative blew up at t={n * cfg.dt:.6g}")
            if n in t_steps:
                out[start:start + len(bid), t_steps.index(n)] = D
    return out
