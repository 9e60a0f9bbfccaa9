"""Numerical stress tests of the analytic inequalities behind the limit theorems.

Each check evaluates a left- and right-hand side over a fixed battery and
reports the witness constant ``max LHS / RHS``; an inequality "holds
numerically" when that constant is finite and moves by less than a factor 2
under grid refinement.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, special

from .green import (ball_weights, check_two_q_window, evaluate_kernel, kappa_exponent,
                    radial_kernel_quadrature)
from .grid import GridSpec, spectral_multiply
from .noise import CovarianceModel, grid_spectral_density
from .solver import SolverConfig, malliavin_derivative_path
from .special import stable_tail_coefficients

STABILITY_FACTOR = 2.0


@dataclass
class InequalityReport:
    inequality: str
    rows: list                       # dicts: case descriptor, lhs, rhs, ratio
    witness: float
    witness_refined: float | None = None
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.witness))

    @property
    def refinement_change(self) -> float:
        if self.witness_refined is None:
            return float("nan")
        a, b = self.witness, self.witness_refined
        return max(a, b) / min(a, b) if min(a, b) > 0 else float("inf")

    @property
    def stable(self) -> bool:
        return self.witness_refined is not None and self.refinement_change < STABILITY_FACTOR

    @property
    def passed(self) -> bool:
        checks = self.extra.get("checks", {})
        return self.finite and self.stable and all(checks.values())


def _witness(rows) -> float:
    r = [row["ratio"] for row in rows if np.isfinite(row["ratio"])]
    return float(max(r)) if r else 0.0


def _ratio(lhs, rhs):
    if rhs == 0:
        return 0.0 if lhs == 0 else float("inf")
    return lhs / rhs


# ---------------------------------------------------------------------------
# convolution inequality


@dataclass(frozen=True)
class TestFunction:
    """Nonnegative test function from the registry.

    kinds: ``gaussian`` (scale, shift), ``indicator`` (radius, shift),
    ``kernel_power`` (alpha, t, exponent) for ``G(t, .)^exponent``, ``zero``.
    """

    kind: str
    params: tuple = ()

    def sample(self, grid: GridSpec) -> np.ndarray:
        p = self.params
        if self.kind == "zero":
            return np.zeros(grid.shape)
        if self.kind == "kernel_power":
            alpha, t, e = p
            k = evaluate_kernel(grid, alpha, t, deperiodize=True).as_density()
            return np.clip(k, 0.0, None) ** e
        x = grid.coords()
        shift = np.zeros(grid.dim)
        shift[0] = p[1]
        r = np.sqrt(sum((xi - s) ** 2 for xi, s in zip(x, shift)))
        if self.kind == "gaussian":
            s = p[0]
            return np.exp(-r ** 2 / (2 * s * s)) / (2 * np.pi * s * s) ** (grid.dim / 2)
        if self.kind == "indicator":
            if p[1] == 0:
                return ball_weights(grid, p[0])
            return (r <= p[0]).astype(float)
        raise ValueError(f"unknown test function kind {self.kind!r}")

    def label(self) -> str:
        return f"{self.kind}{tuple(round(v, 4) for v in self.params)}"


def lp_norm(grid: GridSpec, f, p: float) -> float:
    return float((np.sum(np.abs(f) ** p) * grid.cell_volume) ** (1.0 / p))


def convolve_with_covariance(grid: GridSpec, model: CovarianceModel, g) -> np.ndarray:
    """``g * gamma`` on the grid through the shared spectral density."""
    spec = grid_spectral_density(grid, model)
    return spectral_multiply(grid, g, spec.values)


def default_battery(dim: int, alpha: float, two_q: float) -> list:
    """Twenty (f, g) pairs of registry functions."""
    e = 1.0 / two_q
    G = lambda *p: TestFunction("gaussian", p)
    I = lambda *p: TestFunction("indicator", p)
    K = lambda t: TestFunction("kernel_power", (alpha, t, e))
    return [
        (G(1, 0), G(1, 0)), (G(0.5, 0), G(0.5, 0)), (G(2, 0), G(2, 0)), (G(1, 0), G(2, 0)),
        (G(0.5, 0), G(2, 0)), (G(1, 0), G(1, 3)), (G(0.5, 0), G(0.5, 2)), (I(1, 0), I(1, 0)),
        (I(0.5, 0), I(0.5, 0)), (I(2, 0), I(2, 0)), (I(1, 0), I(2, 2)), (I(0.5, 0), G(1, 0)),
        (I(2, 0), G(0.5, 1)), (K(0.5), K(0.5)), (K(2.0), K(2.0)), (K(0.5), K(2.0)),
        (K(1.0), G(1, 0)), (K(1.0), I(1, 0)), (K(0.5), G(2, 2)), (K(2.0), I(0.5, 1)),
    ]


def admissible_two_q(model: CovarianceModel, alpha: float) -> float:
    """The exponent used in the convolution bound for each case.

    beta < d: ``2d/(2d - 2 beta)``; white noise: 2; integrable density: 4/3
    (Young with ``gamma`` in L^2).
    """
    d = model.dim
    if model.variant == "riesz":
        return 2 * d / (2 * d - 2 * model.beta)
    if model.variant == "white":
        return 2.0
    return 4.0 / 3.0


def check_convolution_inequality(model: CovarianceModel, f: TestFunction, g: TestFunction,
                                 q: float, alpha: float, grid: GridSpec) -> dict:
    """One battery entry: LHS ``int f (g * gamma)`` and RHS ``|f|_{2q} |g|_{2q}``."""
    check_two_q_window(model.dim, alpha, 2 * q)
    fv, gv = f.sample(grid), g.sample(grid)
    lhs = float(np.sum(fv * convolve_with_covariance(grid, model, gv)) * grid.cell_volume)
    rhs = lp_norm(grid, fv, 2 * q) * lp_norm(grid, gv, 2 * q)
    return {"f": f.label(), "g": g.label(), "lhs": lhs, "rhs": rhs, "ratio": _ratio(lhs, rhs)}


def convolution_battery(model: CovarianceModel, alpha: float, grid: GridSpec,
                        pairs=None, two_q: float | None = None) -> InequalityReport:
    two_q = admissible_two_q(model, alpha) if two_q is None else two_q
    pairs = default_battery(model.dim, alpha, two_q) if pairs is None else pairs
    fine = grid.refined()
    rows = [check_convolution_inequality(model, f, g, two_q / 2, alpha, grid) for f, g in pairs]
    rows_f = [check_convolution_inequality(model, f, g, two_q / 2, alpha, fine) for f, g in pairs]
    rep = InequalityReport("convolution", rows, _witness(rows), _witness(rows_f),
                           extra={"model": model.to_dict(), "two_q": two_q, "alpha": alpha,
                                  "refined_rows": rows_f})
    return rep


# ---------------------------------------------------------------------------
# Riesz smoothing


def _singular_cell_weights(grid: GridSpec, beta: float, radius_cells: int = 4) -> np.ndarray:
    """Cell integrals of ``|y|^{-beta}`` over the box ``[-L, L)^d``.

    Cells within ``radius_cells`` spacings of the origin are integrated with a
    polar rule (origin cell) or an 8-point tensor Gauss rule; the others use
    the midpoint value.
    """
    h = grid.spacing
    r = grid.radius
    with np.errstate(divide="ignore"):
        w = np.where(r > 0, r ** (-beta), 0.0) * grid.cell_volume
    o = grid.origin_index
    d = grid.dim
    xg, wg = np.polynomial.legendre.leggauss(8)
    m = radius_cells
    if d == 1:
        w[o] = 2 * (h / 2) ** (1 - beta) / (1 - beta)
        for k in range(1, m + 1):
            for s in (-1, 1):
                a = (k - 0.5) * h
                y = a + 0.5 * h * (xg + 1)
                w[o + s * k] = float(np.sum(wg * y ** (-beta)) * 0.5 * h)
        return w
    # origin square: 8 triangles, polar in each
    f = lambda phi: (h / (2 * np.cos(phi))) ** (2 - beta) / (2 - beta)
    w[o, o] = 8 * integrate.quad(f, 0, np.pi / 4)[0]
    for i in range(-m, m + 1):
        for j in range(-m, m + 1):
            if (i, j) == (0, 0) or i * i + j * j > m * m:
                continue
            ys = i * h + 0.5 * h * xg
            zs = j * h + 0.5 * h * xg
            Y, Z = np.meshgrid(ys, zs, indexing="ij")
            w[o + i, o + j] = float(np.sum(np.outer(wg, wg) * (Y * Y + Z * Z) ** (-beta / 2)) * 0.25 * h * h)
    return w


class RadialKernelTable:
    """Spline of ``G(t, r)`` on ``[0, r_max]`` with the large-distance expansion beyond."""

    def __init__(self, alpha: float, t: float, dim: int, r_max: float, n: int = 600):
        self.alpha, self.t, self.dim = alpha, t, dim
        scale = t ** (1 / alpha)
        # dense near the core, geometric outside
        r = np.unique(np.concatenate([np.linspace(0, 4 * scale, n // 2),
                                      np.geomspace(4 * scale, r_max, n // 2)]))
        vals = radial_kernel_quadrature(alpha, t, dim, r)
        self.r_max = r_max
        self._spline = interpolate.CubicSpline(r, vals)
        a = stable_tail_coefficients(alpha, dim, 3)
        self._tail = (a, np.arange(1, a.size + 1))

    def __call__(self, r):
        r = np.asarray(r, float)
        out = self._spline(np.minimum(r, self.r_max))
        far = r > self.r_max
        if np.any(far):
            a, k = self._tail
            rr = r[far][:, None]
            out[far] = np.sum(a * self.t ** k * rr ** (-(self.dim + self.alpha * k)), axis=1)
        return out


def riesz_smoothing_lhs(table: RadialKernelTable, grid: GridSpec, beta: float, x,
                        weights: np.ndarray | None = None) -> float:
    """``int G(t, x - y) |y|^{-beta} dy`` by the weighted grid sum plus a far-field tail."""
    w = _singular_cell_weights(grid, beta) if weights is None else weights
    c = grid.coords()
    x = np.atleast_1d(np.asarray(x, float))
    dist = np.sqrt(sum((ci - xi) ** 2 for ci, xi in zip(c, x)))
    body = float(np.sum(table(dist) * w))
    # beyond the box: G ~ a_1 t |y|^{-d-alpha}; integrate radially past the inscribed ball
    d, alpha, L = grid.dim, table.alpha, grid.half_length
    a1 = stable_tail_coefficients(alpha, d, 1)[0]
    area = 2.0 if d == 1 else 2 * np.pi
    tail = area * a1 * table.t * L ** (-(alpha + beta)) / (alpha + beta)
    return body + tail


def check_riesz_smoothing(alpha: float, beta: float, t_list, x_list, dim: int = 2,
                          half_length: float = 32.0, points: int = 1024,
                          refine: bool = True) -> InequalityReport:
    """Witness constant for ``G(t) * |.|^{-beta} <= C |x|^{-beta}``."""
    if not (0 < beta < alpha < min(2.0, dim)):
        raise ValueError(f"smoothing bound requires 0 < beta < alpha < 2 ^ d "
                         f"(beta={beta}, alpha={alpha}, d={dim})")
    x_max = max(x_list)
    if x_max > half_length / 4:
        raise ValueError(f"|x| = {x_max} exceeds L/4 = {half_length / 4}")

    tables = {t: RadialKernelTable(alpha, t, dim, r_max=2.5 * half_length) for t in t_list}

    def battery(grid):
        w = _singular_cell_weights(grid, beta)
        rows = []
        for t in t_list:
            for xr in x_list:
                x = np.zeros(dim)
                x[0] = xr
                lhs = riesz_smoothing_lhs(tables[t], grid, beta, x, w)
                rhs = xr ** (-beta)
                rows.append({"t": t, "x": xr, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs})
        return rows

    grid = GridSpec(dim, half_length, points)
    rows = battery(grid)
    rows_f = battery(grid.refined()) if refine else None
    wit = _witness(rows)
    per_t = {t: max(r["ratio"] for r in rows if r["t"] == t) for t in t_list}
    t_spread = max(per_t.values()) / min(per_t.values())
    dbl = []
    xs = sorted(x_list)
    for t in t_list:
        by_x = {r["x"]: r["ratio"] for r in rows if r["t"] == t}
        for xr in xs:
            if 2 * xr in by_x:
                dbl.append(by_x[2 * xr] / by_x[xr])
    # far from the origin the ratio tends to 1 (G is a probability density);
    # the largest radius must not overshoot that limit or the small-|x| value
    tail_ok = True
    for t in t_list:
        by_x = {r["x"]: r["ratio"] for r in rows if r["t"] == t}
        tail_ok &= by_x[xs[-1]] <= max(1.0, by_x[xs[0]]) + 1e-3
    checks = {"t_uniform_within_2x": t_spread < 2.0,
              "x_doubling_within_2x": all(0.5 < v < 2.0 for v in dbl),
              "no_tail_blow_up": bool(tail_ok)}
    return InequalityReport("riesz-smoothing", rows, wit, _witness(rows_f) if rows_f else None,
                            extra={"per_t_witness": per_t, "t_spread": t_spread,
                                   "doubling_ratios": dbl, "checks": checks,
                                   "refined_rows": rows_f})


def richardson_order(values, factor: float = 2.0) -> float:
    """Observed convergence order from three successive refinements."""
    a, b, c = values
    if b == c or a == b:
        return float("inf")
    return float(np.log(abs(a - b) / abs(b - c)) / np.log(factor))


# ---------------------------------------------------------------------------
# Gronwall iteration


def gamma_series_coefficients(kappa: float, j_max: int) -> np.ndarray:
    """``c_j = Gamma(1 - kappa)^j / Gamma((j + 1)(1 - kappa))`` via log-gamma."""
    j = np.arange(j_max + 1)
    return np.exp(j * special.gammaln(1 - kappa) - special.gammaln((j + 1) * (1 - kappa)))


def gamma_ratio_sequence(kappa: float, j_max: int) -> np.ndarray:
    """``c_{j+1} / c_j``; tends to zero when the series converges."""
    c = gamma_series_coefficients(kappa, j_max + 1)
    return c[1:] / c[:-1]


@dataclass
class GronwallResult:
    times: np.ndarray
    iterates: list                    # g_n^2 arrays of shape (times, nodes)
    increments: np.ndarray            # sup |g_{n+1}^2 - g_n^2| / sup g_n^2
    bound_constants: np.ndarray       # fitted C for the series bound at each n
    final_constant: float             # c in g <= c t^{-kappa/2} G^{1/(2q)}
    n0_constant: float
    monotone: bool
    kappa: float

    @property
    def converged(self) -> bool:
        return bool(self.increments[-1] < 1e-6)

    @property
    def witness(self) -> float:
        return float(np.max(self.bound_constants))


def gronwall_iteration(model: CovarianceModel, alpha: float, q: float, n_max: int,
                       grid: GridSpec, T: float = 1.0, n_time: int = 40,
                       sub_nodes: int = 16) -> GronwallResult:
    """Iterate ``g_{n+1}^2 = G^2 + int_0^t [G(t - s)^2 * g_n(s)^2] ds`` on a uniform time lattice.

    The spatial recursion is a convolution only for white noise, which is
    the case implemented.  Each time cell ``[t_j, t_{j+1}]`` freezes
    ``g_n`` at ``t_j`` and integrates ``G(r)^2`` exactly over the cell with a
    graded Gauss rule; on the first cell ``g_n(s)^2`` is replaced by ``G(s)^2``.
    """
    if model.variant != "white":
        raise ValueError("gronwall_iteration supports white noise only (convolution form)")
    check_two_q_window(grid.dim, alpha, 2 * q)
    kappa = kappa_exponent(grid.dim, alpha, 2 * q)
    if kappa >= 1:
        raise ValueError(f"kappa = {kappa} >= 1: the series bound is not valid")
    dt = T / n_time
    times = dt * np.arange(1, n_time + 1)
    axes = tuple(range(grid.dim))
    dv = grid.cell_volume
    G = np.stack([evaluate_kernel(grid, alpha, t).values for t in times])
    H = G ** 2
    xg, wg = np.polynomial.legendre.leggauss(sub_nodes)
    u, wu = 0.5 * (xg + 1), 0.5 * wg

    def cell_integral(m):
        # int over r in [(m-1) dt, m dt] of G(r)^2, graded toward r = 0 on the first cell
        if m == 1:
            r = dt * u ** 3
            jac = dt * 3 * u ** 2 * wu
        else:
            r = (m - 1 + u) * dt
            jac = dt * wu
        return sum(j * evaluate_kernel(grid, alpha, ri).values ** 2 for ri, j in zip(r, jac))

    Hbar = [None] + [cell_integral(m) for m in range(1, n_time + 1)]
    Hbar_hat = [None] + [np.fft.rfftn(np.fft.ifftshift(h, axes=axes), axes=axes) for h in Hbar[1:]]
    # cell [0, dt]: int_0^dt G(t_k - s)^2 * G(s)^2 ds, graded Gauss in s
    first = np.zeros_like(H)
    for s, j in zip(dt * u ** 3, dt * 3 * u ** 2 * wu):
        Gs2 = evaluate_kernel(grid, alpha, s).values ** 2
        Gs2_hat = np.fft.rfftn(Gs2, axes=axes)
        for k, t in enumerate(times):
            Gt2 = evaluate_kernel(grid, alpha, t - s).values ** 2
            conv = np.fft.irfftn(np.fft.rfftn(np.fft.ifftshift(Gt2, axes=axes), axes=axes) * Gs2_hat,
                                 s=grid.shape, axes=axes) * dv
            first[k] += j * conv

    iterates = [H.copy()]
    cur = H.copy()
    incs = []
    for _ in range(n_max):
        cur_hat = np.fft.rfftn(cur, axes=tuple(range(1, grid.dim + 1)))
        new = H + first
        for k in range(n_time):
            # s-cells j = 1..k use g_n(t_j) (index j - 1) and Hbar_{k + 1 - j}
            acc = np.zeros_like(cur_hat[0])
            for j in range(1, k + 1):
                acc += Hbar_hat[k + 1 - j] * cur_hat[j - 1]
            if k:
                new[k] += np.fft.irfftn(acc, s=grid.shape, axes=axes) * dv
        incs.append(float(np.max(np.abs(new - cur)) / np.max(np.abs(cur))))
        cur = new
        iterates.append(cur.copy())

    Gpos = np.clip(G, 1e-300, None)
    coeffs = gamma_series_coefficients(kappa, n_max)
    tcol = times.reshape((-1,) + (1,) * grid.dim)
    Cs = []
    for n, g2 in enumerate(iterates):
        j = np.arange(n + 1)
        series = np.sum(coeffs[: n + 1] * tcol[..., None] ** (j * (1 - kappa) - kappa), axis=-1)
        Cs.append(float(np.max(g2 / (series * Gpos ** (1 / q)))))
    final = float(np.max(np.sqrt(iterates[-1]) / (tcol ** (-kappa / 2) * Gpos ** (1 / (2 * q)))))
    n0 = float(np.max(G / (tcol ** (-kappa / 2) * Gpos ** (1 / (2 * q)))))
    mono = all(np.all(b >= a - 1e-12 * np.max(a)) for a, b in zip(iterates[:-1], iterates[1:]))
    return GronwallResult(times, iterates, np.array(incs), np.array(Cs), final, n0, mono, kappa)


def gronwall_report(model: CovarianceModel, alpha: float, q: float, n_max: int,
                    grid: GridSpec, T: float = 1.0, n_time: int = 40) -> InequalityReport:
    base = gronwall_iteration(model, alpha, q, n_max, grid, T, n_time)
    fine = gronwall_iteration(model, alpha, q, n_max, grid.refined(), T, 2 * n_time)
    rows = [{"n": n, "C": c, "ratio": c} for n, c in enumerate(base.bound_constants)]
    checks = {"converged": base.converged and fine.converged, "monotone": base.monotone and fine.monotone,
              "final_bound_stable": max(base.final_constant, fine.final_constant)
              / min(base.final_constant, fine.final_constant) < STABILITY_FACTOR}
    return InequalityReport("gronwall", rows, base.witness, fine.witness,
                            extra={"kappa": base.kappa, "increments": base.increments.tolist(),
                                   "final_constant": base.final_constant,
                                   "final_constant_refined": fine.final_constant,
                                   "n0_constant": base.n0_constant, "checks": checks})


# ---------------------------------------------------------------------------
# Malliavin derivative bound


def check_malliavin_bound(cfg: SolverConfig, r: float, t_list, offsets, q: float = 1.0,
                          replicas: int = 2000, refine: bool = True) -> InequalityReport:
    """Witness constant for ``|D_{r,z} u(t, x)|_2 <= c (t - r)^{-kappa/2} G(t - r, x - z)^{1/(2q)}``.

    ``z`` is the grid centre; ``offsets`` are the distances ``|x - z|`` along
    the first axis (grid multiples).  The refined run halves the spacing and
    the time step.
    """
    if not cfg.sigma.has_derivative:
        raise ValueError(f"sigma kind {cfg.sigma.kind!r} has no derivative; Malliavin bound not applicable")
    d = cfg.grid.dim
    check_two_q_window(d, cfg.alpha, 2 * q)
    kappa = kappa_exponent(d, cfg.alpha, 2 * q)

    def battery(c):
        g = c.grid
        z = (g.origin_index,) * d
        D = malliavin_derivative_path(c, r, z, t_list, range(replicas))
        norm2 = np.sqrt(np.mean(D ** 2, axis=0))
        rows = []
        for k, t in enumerate(t_list):
            kern = np.clip(evaluate_kernel(g, c.alpha, t - r, deperiodize=True).values, 0.0, None)
            for off in offsets:
                m = int(round(off / g.spacing))
                if abs(m * g.spacing - off) > 1e-9:
                    raise ValueError(f"offset {off} is not a multiple of the spacing {g.spacing}")
                idx = (g.origin_index + m,) + (g.origin_index,) * (d - 1)
                lhs = float(norm2[(k,) + idx])
                rhs = float((t - r) ** (-kappa / 2) * kern[idx] ** (1 / (2 * q)))
                rows.append({"t": t, "offset": off, "lhs": lhs, "rhs": rhs, "ratio": _ratio(lhs, rhs)})
        return rows

    rows = battery(cfg)
    rows_f = None
    if refine:
        fine = dataclasses.replace(cfg, grid=cfg.grid.refined(), dt=cfg.dt / 2)
        rows_f = battery(fine)
    return InequalityReport("malliavin", rows, _witness(rows), _witness(rows_f) if rows_f else None,
                            extra={"kappa": kappa, "q": q, "replicas": replicas,
                                   "refined_rows": rows_f})
