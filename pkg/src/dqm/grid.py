"""Uniform periodic grids with spectral calculus and rectangle-rule quadrature.

Fields are plain numpy arrays of shape ``grid.shape`` in row-major (C) order,
axis 0 first.  Every derivative is taken in Fourier space, so integration by
parts holds to roundoff on the discrete grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

MIN_POINTS = 8
MAX_RANK = 3


@dataclass(frozen=True)
class Grid:
    """Periodic box ``[-L_a/2, L_a/2)`` per axis, one particle mass per axis."""

    extents: tuple[float, ...]
    points: tuple[int, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.extents) == len(self.points) == len(self.masses)):
            raise ValueError("extents, points and masses must have the same length")
        if not 1 <= len(self.points) <= MAX_RANK:
            raise ValueError(f"rank must be between 1 and {MAX_RANK}, got {len(self.points)}")
        for a, (L, n, m) in enumerate(zip(self.extents, self.points, self.masses)):
            if not np.isfinite(L) or L <= 0:
                raise ValueError(f"axis {a}: extent must be positive, got {L}")
            if n < MIN_POINTS or n % 2:
                raise ValueError(f"axis {a}: points must be even and >= {MIN_POINTS}, got {n}")
            if not np.isfinite(m) or m <= 0:
                raise ValueError(f"axis {a}: mass must be positive, got {m}")

    @property
    def rank(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """1D lattice coordinates ``x_a[j] = -L_a/2 + j * dx_a``."""
        return tuple(-L / 2 + dx * np.arange(n)
                     for L, n, dx in zip(self.extents, self.points, self.spacing))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        return tuple(self._along(a, x) for a, x in enumerate(self.axes))

    def mesh(self) -> list[np.ndarray]:
        """Full-shape coordinate arrays (``indexing='ij'``)."""
        return [np.broadcast_to(c, self.shape) for c in self.coords]

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(2 * np.pi * np.fft.fftfreq(n, d=dx)
                     for n, dx in zip(self.points, self.spacing))

    @cached_property
    def _odd_wavenumbers(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode of the first derivative is dropped (odd-derivative convention).
        out = []
        for n, k in zip(self.points, self.wavenumbers):
            k = k.copy()
            k[n // 2] = 0.0
            out.append(k)
        return tuple(out)

    def _along(self, axis: int, v: np.ndarray) -> np.ndarray:
        shape = [1] * self.rank
        shape[axis] = -1
        return v.reshape(shape)

    # ------------------------------------------------------------------
    # field validation
    # ------------------------------------------------------------------

    def check_field(self, values, name: str = "field") -> np.ndarray:
        """Return ``values`` as an array on this grid, rejecting bad shapes and non-finite samples."""
        arr = np.asarray(values)
        if arr.shape != self.shape:
            raise ValueError(f"{name}: shape {arr.shape} does not match grid {self.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name}: contains NaN or Inf")
        return arr

    def zeros(self, dtype=float) -> np.ndarray:
        return np.zeros(self.shape, dtype=dtype)

    # ------------------------------------------------------------------
    # spectral calculus
    # ------------------------------------------------------------------

    def derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        """First partial derivative along ``axis``; real input gives real output."""
        k = self._along(axis, self._odd_wavenumbers[axis])
        df = np.fft.ifft(1j * k * np.fft.fft(f, axis=axis), axis=axis)
        return df.real if np.isrealobj(f) else df

    def gradient(self, f: np.ndarray) -> list[np.ndarray]:
        return [self.derivative(f, a) for a in range(self.rank)]

    def second_derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        k = self._along(axis, self.wavenumbers[axis])
        d2f = np.fft.ifft(-(k ** 2) * np.fft.fft(f, axis=axis), axis=axis)
        return d2f.real if np.isrealobj(f) else d2f

    def laplacian(self, f: np.ndarray, weights: Sequence[float] | None = None) -> np.ndarray:
        """Sum of second partials, optionally weighted per axis."""
        if weights is None:
            weights = (1.0,) * self.rank
        symbol = self._quadratic_symbol(weights)
        out = np.fft.ifftn(-symbol * np.fft.fftn(f))
        return out.real if np.isrealobj(f) else out

    def divergence(self, components: Sequence[np.ndarray]) -> np.ndarray:
        return sum(self.derivative(c, a) for a, c in enumerate(components))

    def _quadratic_symbol(self, weights: Sequence[float]) -> np.ndarray:
        return sum(w * self._along(a, k) ** 2
                   for a, (w, k) in enumerate(zip(weights, self.wavenumbers)))

    def kinetic_symbol(self, hbar: float) -> np.ndarray:
        """Fourier symbol of ``-sum_a hbar^2/(2 m_a) d_a^2``."""
        return self._quadratic_symbol([hbar ** 2 / (2 * m) for m in self.masses])

    def kinetic(self, f: np.ndarray, hbar: float) -> np.ndarray:
        """Apply the standard kinetic operator spectrally."""
        return np.fft.ifftn(self.kinetic_symbol(hbar) * np.fft.fftn(f))

    def truncation_symbol(self, cutoff: float = 2 / 3) -> np.ndarray:
        """Sharp cut: keep modes with ``|k| < cutoff * k_N`` on every axis."""
        out = np.ones(self.shape)
        for a, (k, dx) in enumerate(zip(self.wavenumbers, self.spacing)):
            out = out * self._along(a, (np.abs(k) * dx / np.pi < cutoff).astype(float))
        return out

    def spectral_filter(self, f: np.ndarray, symbol: np.ndarray | None = None) -> np.ndarray:
        """Multiply the spectrum by ``symbol`` (default: the 2/3 truncation)."""
        symbol = self.truncation_symbol() if symbol is None else symbol
        return np.fft.ifftn(symbol * np.fft.fftn(f))

    def integrate(self, f: np.ndarray):
        """Rectangle rule, which is the trapezoid rule on a periodic lattice."""
        return np.sum(f) * self.cell_volume

    def norm(self, f: np.ndarray, where: np.ndarray | None = None) -> float:
        """Discrete L2 norm, optionally restricted to a boolean selection."""
        sq = np.abs(f) ** 2
        if where is not None:
            sq = np.where(where, sq, 0.0)
        return float(np.sqrt(np.sum(sq) * self.cell_volume))

    def interpolate(self, f: np.ndarray, positions: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Trigonometric (spectral) interpolation of a periodic field at off-grid points.

        ``positions`` has shape ``(M, rank)``.  The Nyquist coefficient is split
        symmetrically so real fields interpolate to real values.
        """
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        coeffs = np.fft.fftn(f) / self.size
        for a, n in enumerate(self.points):
            # halve the Nyquist plane; its conjugate partner is supplied through cos()
            idx = [slice(None)] * self.rank
            idx[a] = n // 2
            coeffs[tuple(idx)] *= 0.5
        out = np.empty(len(positions), dtype=complex)
        for start in range(0, len(positions), chunk):
            block = positions[start:start + chunk]
            out[start:start + chunk] = self._eval_series(coeffs, block)
        return out.real if np.isrealobj(f) else out

    def _eval_series(self, coeffs: np.ndarray, block: np.ndarray) -> np.ndarray:
        factors = []
        for a, (k, x0) in enumerate(zip(self.wavenumbers, (ax[0] for ax in self.axes))):
            n = self.points[a]
            shift = block[:, a:a + 1] - x0
            e = np.exp(1j * k[None, :] * shift)
            # Nyquist term contributes 2*cos(k_N x) * (c/2) in total
            e[:, n // 2] = 2 * np.cos(k[n // 2] * shift[:, 0])
            factors.append(e)
        letters = "ijk"[: self.rank]
        spec = ",".join(f"m{c}" for c in letters)
        return np.einsum(f"{letters},{spec}->m", coeffs, *factors, optimize=True)


def make_grid(extents, points, masses=None) -> Grid:
    """Build a :class:`Grid`; masses default to 1 on every axis."""
    extents = tuple(float(L) for L in np.atleast_1d(extents))
    points = tuple(int(n) for n in np.atleast_1d(points))
    if masses is None:
        masses = (1.0,) * len(points)
    masses = tuple(float(m) for m in np.atleast_1d(masses))
    return Grid(extents, points, masses)


def gradient(grid: Grid, f: np.ndarray) -> list[np.ndarray]:
    return grid.gradient(f)


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.laplacian(f)


def integrate(grid: Grid, f: np.ndarray):
    return grid.integrate(f)
