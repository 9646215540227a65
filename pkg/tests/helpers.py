"""Shared state builders for the test-suite."""

from __future__ import annotations

import numpy as np

from dqm.grid import Grid, make_grid
from dqm.wavefield import PhysicalParams, WaveField, normalize

# frozen oracle values
WIDTH_RATIO_FREE = 1.118033988749895      # sqrt(1 + (t / (2 sigma^2))^2) at t = sigma = 1
XI_AT_ZERO = 0.125                         # hbar^2 / (8 m)


def per_axis(v, rank):
    return list(np.broadcast_to(np.asarray(v, dtype=float), (rank,)))


def gaussian(grid: Grid, x0=0.0, p0=0.0, sigma=1.0, hbar=1.0, potential=None) -> WaveField:
    """Normalized ``prod exp(-(x-x0)^2/(4 sigma^2) + i p0 x / hbar)``; ``sigma`` is the density width."""
    psi = np.ones(grid.shape, dtype=complex)
    for x, c, p, s in zip(grid.coords, per_axis(x0, grid.rank), per_axis(p0, grid.rank), per_axis(sigma, grid.rank)):
        psi = psi * np.exp(-((x - c) ** 2) / (4 * s * s) + 1j * p * x / hbar)
    return normalize(WaveField(grid, psi, PhysicalParams(hbar=hbar, potential=potential)))


def plane_wave(grid: Grid, p0, hbar=1.0) -> WaveField:
    psi = np.ones(grid.shape, dtype=complex)
    for x, p in zip(grid.coords, per_axis(p0, grid.rank)):
        psi = psi * np.exp(1j * p * x / hbar)
    return normalize(WaveField(grid, psi, PhysicalParams(hbar=hbar)))


def acceptance_grid() -> Grid:
    """1D box [-20, 20) with 512 points."""
    return make_grid([40.0], [512])


def random_grids():
    """One 1D and one 2D grid (unequal masses) for the random-state properties."""
    return make_grid([10.0], [64]), make_grid([8.0, 10.0], [64, 64], [1.0, 2.5])
