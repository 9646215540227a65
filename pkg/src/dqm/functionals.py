"""Fisher information, the Weizsacker term, action functionals and Hamilton-Jacobi residuals.

``fisher_information`` is an instantaneous quantity, an integral over configuration
space at one time.  Time integrals are done by :func:`action_density`, which
applies the trapezoid rule over trajectory stamps.

Symbol note: ``xi`` is the coefficient of the Fisher term in the deformed action.
Some of the minimum-Fisher-information literature writes the same coefficient
as ``lambda/m``.  That ``lambda`` is unrelated to the deformation parameter used here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evolution import Trajectory
from .grid import Grid
from .operators import MASK_LIMIT, DeformedMomentum, classical_momentum_field, log_derivatives
from .wavefield import WaveField, check_mask, node_mask

__all__ = [
    "fisher_information",
    "fisher_per_axis",
    "weizsacker",
    "xi_of_lambda",
    "ActionBreakdown",
    "action_density",
    "modified_hj_residual",
    "KineticDecomposition",
    "kinetic_decomposition",
]


def fisher_per_axis(grid: Grid, rho: np.ndarray) -> np.ndarray:
    """``integrate((d_a rho)^2 / rho)`` for each axis, masked points excluded."""
    rho = grid.check_field(np.asarray(rho, dtype=float), "rho")
    if np.any(rho < 0):
        raise ValueError("density must be non-negative")
    mask = node_mask(rho)
    check_mask(mask, MASK_LIMIT, "Fisher information undefined")
    out = []
    for d in grid.gradient(rho):
        integrand = np.divide(d * d, rho, out=np.zeros_like(rho), where=~mask)
        out.append(grid.integrate(integrand))
    return np.array(out)


def fisher_information(grid: Grid, rho: np.ndarray) -> float:
    """``I_F = integrate(|grad rho|^2 / rho)`` over the grid."""
    return float(fisher_per_axis(grid, rho).sum())


def weizsacker(grid: Grid, rho: np.ndarray, hbar: float = 1.0) -> float:
    """``W = sum_a hbar^2/(8 m_a) integrate((d_a rho)^2 / rho)``."""
    per_axis = fisher_per_axis(grid, rho)
    return float(sum(hbar ** 2 / (8 * m) * f for m, f in zip(grid.masses, per_axis)))


def xi_of_lambda(lam: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    """Fisher-term coefficient ``hbar^2 (1 - lam)^2 / (8 m)``."""
    return hbar ** 2 * (1.0 - lam) ** 2 / (8.0 * mass)


# ----------------------------------------------------------------------
# action
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ActionBreakdown:
    """Time-integrated pieces of the deformed action.

    ``total = time_derivative_part - kinetic_part - potential_part - fisher_part``.
    In the complex-field form the Fisher contribution sits inside ``kinetic_part``
    and ``fisher_part`` is zero. The polar form separates it out.
    """

    total: float
    kinetic_part: float
    potential_part: float
    time_derivative_part: float
    fisher_part: float
    xi: float | tuple[float, ...]
    lam: float = 0.0
    form: str = "complex"

    @property
    def fisher_integral(self) -> float:
        """``fisher_part / xi`` for a uniform-mass grid (the time integral of I_F)."""
        if isinstance(self.xi, tuple):
            raise ValueError("per-axis xi: the Fisher integral is not a single ratio")
        return self.fisher_part / self.xi


def _xi_for_grid(grid: Grid, lam: float, hbar: float):
    per_axis = tuple(xi_of_lambda(lam, hbar, m) for m in grid.masses)
    return per_axis[0] if len(set(per_axis)) == 1 else per_axis


def _time_derivative(traj: Trajectory) -> np.ndarray:
    # second-order central differences inside, second-order one-sided at the ends
    return np.gradient(traj.states, traj.times, axis=0, edge_order=2)


def _slice_terms(w: WaveField, psi_t: np.ndarray, lam: float, form: str) -> tuple[float, float, float, float]:
    grid, hb = w.grid, w.hbar
    mask = w.node_mask()
    rho = np.where(mask, 0.0, w.rho)
    potential = grid.integrate(w.potential * rho)
    # -hbar Im(conj(psi) psi_t) = i hbar/2 (psi* psi_t - c.c.) = -rho dS/dt
    time_part = grid.integrate(np.where(mask, 0.0, -hb * np.imag(np.conj(w.psi) * psi_t)))
    if form == "complex":
        P = DeformedMomentum.from_wavefield(w, lam)
        kinetic = sum(grid.integrate(np.abs(c) ** 2) / (2 * m) for c, m in zip(P.apply(), grid.masses))
        fisher = 0.0
    elif form == "polar":
        grad_S = classical_momentum_field(w)
        kinetic = sum(grid.integrate(rho * g * g) / (2 * m) for g, m in zip(grad_S, grid.masses))
        per_axis = fisher_per_axis(grid, w.rho)
        fisher = sum(xi_of_lambda(lam, hb, m) * f for m, f in zip(grid.masses, per_axis))
    else:
        raise ValueError(f"unknown action form {form!r}; use 'complex' or 'polar'")
    return time_part, kinetic, potential, fisher


def action_density(traj: Trajectory, lam: float, form: str = "complex") -> ActionBreakdown:
    """Evaluate the deformed action along a stored trajectory.

    ``form="complex"`` integrates ``i hbar/2 (psi* psi_t - c.c.) - |P_lam psi|^2/2m - V|psi|^2``.
    ``form="polar"`` integrates ``-rho (S_t + (grad S)^2/2m + V) - xi (grad rho)^2/rho``.
    Both use the same time derivative ``psi_t``, taken by finite differences
    across stamps.  The time integral uses the trapezoid rule over stamps.
    """
    if len(traj) < 3:
        raise ValueError(f"action needs at least 3 stamps, trajectory has {len(traj)}")
    psi_t = _time_derivative(traj)
    rows = np.array([_slice_terms(traj.snapshot(i), psi_t[i], lam, form) for i in range(len(traj))])
    time_part, kinetic, potential, fisher = (float(np.trapezoid(rows[:, k], traj.times)) for k in range(4))
    total = time_part - kinetic - potential - fisher
    return ActionBreakdown(total, kinetic, potential, time_part, fisher,
                           _xi_for_grid(traj.grid, lam, traj.params.hbar), float(lam), form)


# ----------------------------------------------------------------------
# modified Hamilton-Jacobi equation
# ----------------------------------------------------------------------

def modified_hj_residual(traj: Trajectory, stamp_index: int, xi: float | Sequence[float]) -> float:
    """Relative size of ``S_t + |grad S|^2/2m + V + xi(-4 lap sqrt(rho)/sqrt(rho))`` at one stamp.

    ``S_t`` is the central difference of the phase between the neighbouring
    stamps, taken from ``arg(psi_+ conj(psi_-))`` so no unwrapping in time is
    needed.  The result is the rho-weighted RMS of the left-hand side divided by
    the square root of the sum of the rho-weighted mean squares of its terms.
    ``xi`` is a scalar or one value per axis.
    """
    if not 0 < stamp_index < len(traj) - 1:
        raise ValueError(f"stamp {stamp_index} has no neighbours on both sides (trajectory has {len(traj)} stamps)")
    grid, hb = traj.grid, traj.params.hbar
    xi_axes = np.broadcast_to(np.asarray(xi, dtype=float), (grid.rank,))
    i = stamp_index
    w = traj.snapshot(i)
    mask = w.node_mask()
    check_mask(mask, MASK_LIMIT, "modified Hamilton-Jacobi residual undefined")
    rho = np.where(mask, 0.0, w.rho)

    before, after = traj.states[i - 1], traj.states[i + 1]
    S_t = hb * np.angle(after * np.conj(before)) / (2 * traj.stamp_spacing)
    grad_S = classical_momentum_field(w)
    kinetic = sum(g * g / (2 * m) for g, m in zip(grad_S, grid.masses))
    V = w.potential
    amp = np.sqrt(w.rho)
    fisher_term = grid.zeros()
    for a in range(grid.rank):
        if xi_axes[a] != 0.0:
            d2 = grid.second_derivative(amp, a)
            fisher_term = fisher_term - 4 * xi_axes[a] * np.divide(d2, amp, out=np.zeros_like(amp), where=~mask)

    terms = [S_t, kinetic, V, fisher_term]
    lhs = sum(terms)
    num = grid.integrate(rho * lhs ** 2)
    scale = sum(grid.integrate(rho * t ** 2) for t in terms)
    if scale == 0:
        return float(np.sqrt(num))
    return float(np.sqrt(num / scale))


# ----------------------------------------------------------------------
# kinetic energy split
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class KineticDecomposition:
    K_mean: float
    Kprime_mean: float
    weizsacker_term: float

    @property
    def defect(self) -> float:
        return self.K_mean - self.Kprime_mean - self.weizsacker_term


def kinetic_decomposition(w: WaveField) -> KineticDecomposition:
    """Split ``<K>`` into ``<K'>`` plus the Weizsacker term.

    ``K' = K - sum_a hbar^2/(8 m_a) (d_a rho / rho)^2`` pointwise, with the log-density
    gradient taken from ``2 Re(conj(psi) d_a psi)/rho``.  The Weizsacker term is
    computed independently from the spectral gradient of ``rho``.
    """
    grid, hb = w.grid, w.hbar
    norm2 = grid.integrate(w.rho)
    mask = w.node_mask()
    check_mask(mask, MASK_LIMIT, "kinetic decomposition undefined")
    K_mean = grid.integrate(np.conj(w.psi) * grid.kinetic(w.psi, hb)).real / norm2
    rho = np.where(mask, 0.0, w.rho)
    correction = sum(hb ** 2 / (8 * m) * grid.integrate(rho * (2 * A.real) ** 2)
                     for m, A in zip(grid.masses, log_derivatives(w)))
    Kprime_mean = K_mean - correction / norm2
    W = weizsacker(grid, w.rho, hb) / norm2
    return KineticDecomposition(float(K_mean), float(Kprime_mean), float(W))
