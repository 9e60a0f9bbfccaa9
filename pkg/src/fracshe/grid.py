"""Periodic grids on [-L, L)^d and the continuum-calibrated Fourier transform.

Coefficients approximate ``f_hat(xi) = int exp(-i xi.y) f(y) dy`` on the
torus frequencies ``xi_k = pi k / L``; the inverse carries the
``(2 pi)^{-d}`` factor (as ``(2L)^{-d} sum_k``).  Spectral arrays use numpy's
FFT ordering, and :meth:`GridSpec.wave_vectors` returns matching frequencies.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

HERMITIAN_RTOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with nodes ``x_j = -L + j dx``, ``j = 0..N-1``.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    half_length : float
        ``L``; the torus is ``[-L, L)^dim``.
    points : int
        Nodes per axis, a power of two.
    """

    dim: int
    half_length: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not (np.isfinite(self.half_length) and self.half_length > 0):
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        n = int(self.points)
        if n != self.points or n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"points must be a power of two >= 2, got {self.points}")
        object.__setattr__(self, "half_length", float(self.half_length))
        object.__setattr__(self, "points", n)

    # -- geometry ---------------------------------------------------------
    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return (2.0 * self.half_length) ** self.dim

    @property
    def origin_index(self) -> int:
        """Index along each axis of the node x = 0."""
        return self.points // 2

    @cached_property
    def nodes(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.points)

    def coords(self):
        """Tuple of ``dim`` coordinate arrays with shape ``self.shape``."""
        return np.meshgrid(*([self.nodes] * self.dim), indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        """``|x|`` at every node."""
        if self.dim == 1:
            return np.abs(self.nodes)
        X, Y = self.coords()
        return np.hypot(X, Y)

    # -- frequencies ------------------------------------------------------
    @cached_property
    def axis_frequencies(self) -> np.ndarray:
        """Angular frequencies ``pi k / L`` along one axis, FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    @property
    def frequency_spacing(self) -> float:
        return np.pi / self.half_length

    def wave_vectors(self):
        return np.meshgrid(*([self.axis_frequencies] * self.dim), indexing="ij")

    @cached_property
    def wave_norm(self) -> np.ndarray:
        """``|xi|`` on the full FFT layout."""
        if self.dim == 1:
            return np.abs(self.axis_frequencies)
        K0, K1 = self.wave_vectors()
        return np.hypot(K0, K1)

    @cached_property
    def rwave_norm(self) -> np.ndarray:
        """``|xi|`` on the ``rfftn`` half-spectrum layout."""
        half = np.abs(2.0 * np.pi * np.fft.rfftfreq(self.points, d=self.spacing))
        if self.dim == 1:
            return half
        K0, K1 = np.meshgrid(self.axis_frequencies, half, indexing="ij")
        return np.hypot(K0, K1)

    @cached_property
    def _phase(self) -> np.ndarray:
        k = np.fft.fftfreq(self.points, d=1.0 / self.points).astype(int)
        sign = np.where(k % 2 == 0, 1.0, -1.0)
        if self.dim == 1:
            return sign
        return np.multiply.outer(sign, sign)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "half_length": self.half_length, "points": self.points}

    def refined(self) -> "GridSpec":
        """Same torus, half the spacing."""
        return GridSpec(self.dim, self.half_length, 2 * self.points)

    def doubled(self) -> "GridSpec":
        """Twice the torus side at the same spacing."""
        return GridSpec(self.dim, 2.0 * self.half_length, 2 * self.points)


def _check_field(grid: GridSpec, f) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not end with grid shape {grid.shape}")
    if np.iscomplexobj(f):
        raise ValueError("field must be real")
    if not np.all(np.isfinite(f)):
        bad = int(np.count_nonzero(~np.isfinite(f)))
        raise ValueError(f"field has {bad} non-finite values")
    return f.astype(float, copy=False)


def _axes(grid: GridSpec):
    return tuple(range(-grid.dim, 0))


def forward_transform(grid: GridSpec, f) -> np.ndarray:
    """Trapezoid-rule Fourier transform of a real field (leading batch axes allowed)."""
    f = _check_field(grid, f)
    return grid.cell_volume * grid._phase * np.fft.fftn(f, axes=_axes(grid))


def inverse_transform(grid: GridSpec, coeffs) -> np.ndarray:
    """Inverse of :func:`forward_transform`; rejects non-Hermitian input."""
    c = np.asarray(coeffs, dtype=complex)
    if c.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"coefficient shape {c.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficients contain non-finite values")
    z = np.fft.ifftn(c * grid._phase, axes=_axes(grid)) / grid.cell_volume
    scale = np.max(np.abs(z.real)) if z.size else 0.0
    resid = np.max(np.abs(z.imag)) if z.size else 0.0
    if resid > HERMITIAN_RTOL * max(scale, np.finfo(float).tiny):
        raise ValueError(
            f"coefficients are not Hermitian: imaginary residue {resid:.3e} "
            f"vs scale {scale:.3e}"
        )
    return z.real.copy()


def parseval_check(grid: GridSpec, f) -> float:
    """Relative gap between the physical and spectral L2 norms."""
    f = _check_field(grid, f)
    phys = float(np.sum(f * f)) * grid.cell_volume
    if phys == 0.0:
        return 0.0
    c = forward_transform(grid, f)
    spec = float(np.sum(np.abs(c) ** 2)) * grid.frequency_spacing**grid.dim / (2 * np.pi) ** grid.dim
    return abs(phys - spec) / phys


def spectral_multiply(grid: GridSpec, f, multiplier_r) -> np.ndarray:
    """Apply a real even Fourier multiplier given on the ``rfftn`` layout.

    Equivalent to convolving with the kernel whose transform is the multiplier.
    """
    axes = _axes(grid)
    return np.fft.irfftn(multiplier_r * np.fft.rfftn(f, axes=axes), s=grid.shape, axes=axes)


def circular_convolve(grid: GridSpec, f, g) -> np.ndarray:
    """Grid convolution ``sum_y f(x - y) g(y) dx^d`` on the torus (both centred at x=0)."""
    axes = _axes(grid)
    # shift so that index 0 is x = 0 before the cyclic product
    g0 = np.fft.ifftshift(g, axes=axes)
    out = np.fft.irfftn(np.fft.rfftn(f, axes=axes) * np.fft.rfftn(g0, axes=axes), s=grid.shape, axes=axes)
    return out * grid.cell_volume


def power_of_two_at_least(n: float) -> int:
    return int(2 ** int(np.ceil(np.log2(max(n, 2.0)))))
