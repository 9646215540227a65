"""Analytic external potentials, usable both on the grid and at particle positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid


@dataclass(frozen=True)
class Potential:
    """Separable quadratic well ``V = sum_a stiffness_a/2 (x_a - center_a)^2``.

    Zero stiffness everywhere is free motion.
    """

    stiffness: tuple[float, ...]
    center: tuple[float, ...]

    @classmethod
    def free(cls, rank: int) -> "Potential":
        return cls((0.0,) * rank, (0.0,) * rank)

    @classmethod
    def harmonic(cls, grid: Grid, omega: float, center=None) -> "Potential":
        center = (0.0,) * grid.rank if center is None else tuple(float(c) for c in center)
        return cls(tuple(m * omega ** 2 for m in grid.masses), center)

    @property
    def is_free(self) -> bool:
        return not any(self.stiffness)

    def on_grid(self, grid: Grid) -> np.ndarray:
        V = grid.zeros()
        for k, c, x in zip(self.stiffness, self.center, grid.coords):
            V = V + 0.5 * k * (x - c) ** 2
        return V

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(positions)
        k = np.asarray(self.stiffness)
        return 0.5 * np.sum(k * (x - np.asarray(self.center)) ** 2, axis=1)

    def force(self, positions: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(positions)
        return -np.asarray(self.stiffness) * (x - np.asarray(self.center))
