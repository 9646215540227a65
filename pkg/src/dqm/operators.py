"""Quantum potential, classical and deformed momentum/kinetic operators.

All density-dependent operators take the density of the *system* state, never
of the function they act on.  A :class:`DeformedMomentum` is therefore built
from a :class:`~dqm.wavefield.WaveField` and keeps that state's density.

Numerical note: ratios such as ``grad(psi)/psi`` are garbage where the state is
exponentially small, but the products ``(grad(psi)/psi) * psi`` stay accurate
to roundoff everywhere.  Whenever an operator acts on the system state itself
it is evaluated in that product form; masked points are zeroed only in the
returned fields, never before a further derivative is taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Grid
from .wavefield import NodeError, PolarField, WaveField, check_mask, node_mask

__all__ = [
    "NodeError",
    "DeformedMomentum",
    "quantum_potential",
    "classical_momentum_field",
    "apply_deformed_momentum",
    "apply_deformed_kinetic",
    "factorization_residual",
    "witten_deformed_gradient",
    "momentum_expectation",
]

MASK_LIMIT = 0.5


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def log_derivatives(w: WaveField) -> list[np.ndarray]:
    """``conj(psi) d_a psi / |psi|^2`` per axis, unmasked.

    The real part is half the log-density gradient, the imaginary part is
    ``d_a S / hbar``.
    """
    rho = w.rho
    return [np.divide(np.conj(w.psi) * d, rho, out=np.zeros(rho.shape, complex), where=rho > 0)
            for d in w.grid.gradient(w.psi)]


def quantum_potential(p: PolarField) -> np.ndarray:
    """``Q = -sum_a hbar^2/(2 m_a) d_a^2 sqrt(rho) / sqrt(rho)``; zero on the node mask."""
    check_mask(p.node_mask, MASK_LIMIT, "quantum potential undefined")
    grid = p.grid
    amp = np.sqrt(p.rho)
    lap = grid.laplacian(amp, weights=[-p.hbar ** 2 / (2 * m) for m in grid.masses])
    return np.where(p.node_mask, 0.0, _safe_ratio(lap, amp))


def classical_momentum_field(w: WaveField) -> list[np.ndarray]:
    """``hbar * Im(d_a psi / psi)`` per axis, i.e. the gradient of the phase."""
    mask = w.node_mask()
    check_mask(mask, MASK_LIMIT, "classical momentum undefined")
    return [np.where(mask, 0.0, w.hbar * A.imag) for A in log_derivatives(w)]


@dataclass(frozen=True, eq=False)
class DeformedMomentum:
    """``P_lam = -i hbar grad + i lam (hbar/2) grad(rho)/rho``; ``dagger`` flips the sign of the density term.

    Build with :meth:`from_wavefield` so that ``rho`` is always the system density.
    """

    lam: float
    rho: np.ndarray
    dagger: bool = False
    state: WaveField = field(repr=False, default=None)
    mask: np.ndarray = field(repr=False, default=None)
    _logder: tuple = field(repr=False, default=())

    @classmethod
    def from_wavefield(cls, w: WaveField, lam: float, dagger: bool = False) -> "DeformedMomentum":
        mask = w.node_mask()
        check_mask(mask, MASK_LIMIT, "deformed momentum undefined")
        return cls(float(lam), w.rho, dagger, w, mask, tuple(log_derivatives(w)))

    def adjoint(self) -> "DeformedMomentum":
        return replace(self, dagger=not self.dagger)

    @property
    def grid(self) -> Grid:
        return self.state.grid

    @property
    def hbar(self) -> float:
        return self.state.hbar

    @property
    def sign(self) -> float:
        return -1.0 if self.dagger else 1.0

    def density_log_gradient(self) -> list[np.ndarray]:
        """``grad(rho)/rho`` per axis, zero on the node mask."""
        return [np.where(self.mask, 0.0, 2 * A.real) for A in self._logder]

    def _on_state(self) -> list[np.ndarray]:
        # P_lam psi = [hbar Im A -/+ i hbar (1 -/+ lam) Re A] psi, finite everywhere
        hb, psi, s = self.hbar, self.state.psi, self.sign
        return [(hb * A.imag - 1j * hb * (1 - s * self.lam) * A.real) * psi for A in self._logder]

    def component(self, operand: np.ndarray, axis: int) -> np.ndarray:
        """Unmasked axis component of ``P_lam`` acting on an arbitrary operand."""
        term = -1j * self.hbar * self.grid.derivative(operand, axis)
        if self.lam != 0:
            g = np.where(self.mask, 0.0, 2 * self._logder[axis].real)
            term = term + self.sign * 1j * self.lam * (self.hbar / 2) * g * operand
        return term

    def _on_operand(self, operand: np.ndarray) -> list[np.ndarray]:
        return [self.component(operand, a) for a in range(self.grid.rank)]

    def apply(self, operand: np.ndarray | None = None, masked: bool = True) -> list[np.ndarray]:
        """Per-axis components of ``P_lam operand``.

        ``operand=None`` (or the state's own array) acts on the system state,
        the nonlinear case.  With ``masked`` the node-mask points are zeroed.
        """
        if operand is None or operand is self.state.psi:
            comps = self._on_state() if self.lam != 0 else self._on_operand(self.state.psi)
        else:
            operand = self.grid.check_field(operand, "operand")
            comps = self._on_operand(operand)
        if masked:
            comps = [np.where(self.mask, 0.0, c) for c in comps]
        return comps


def apply_deformed_momentum(spec: DeformedMomentum, operand: np.ndarray | None = None) -> list[np.ndarray]:
    return spec.apply(operand)


def apply_deformed_kinetic(w: WaveField, lam: float) -> np.ndarray:
    """``K_lam psi = sum_a (1/2m_a) (P_lam^dag)_a (P_lam)_a psi`` for the system state."""
    P = DeformedMomentum.from_wavefield(w, lam)
    Pd = P.adjoint()
    inner = P.apply(masked=False)
    out = np.zeros(w.grid.shape, dtype=complex)
    for a, (m, comp) in enumerate(zip(w.grid.masses, inner)):
        out += Pd.component(comp, a) / (2 * m)
    return np.where(P.mask, 0.0, out)


def factorization_residual(w: WaveField) -> float:
    """Relative L2 mismatch between ``(K - Q) psi`` and ``sum (1/2m)(P - i alpha)(P + i alpha) psi``.

    ``alpha_a = hbar d_a sqrt(rho)/sqrt(rho)``; the norm runs over unmasked points.
    """
    grid, hb = w.grid, w.hbar
    mask = w.node_mask()
    check_mask(mask, MASK_LIMIT, "factorization undefined")
    polar = PolarField(grid, w.rho, grid.zeros(), mask, hb)
    lhs = grid.kinetic(w.psi, hb) - quantum_potential(polar) * w.psi
    rhs = np.zeros(grid.shape, dtype=complex)
    for a, (m, A) in enumerate(zip(grid.masses, log_derivatives(w))):
        alpha = hb * A.real
        # (P + i alpha) psi, product form
        inner = (-1j * hb * A + 1j * alpha) * w.psi
        alpha_masked = np.where(mask, 0.0, alpha)
        outer = -1j * hb * grid.derivative(inner, a) - 1j * alpha_masked * inner
        rhs += outer / (2 * m)
    return grid.norm(lhs - rhs, where=~mask) / grid.norm(w.psi)


def witten_deformed_gradient(grid: Grid, operand: np.ndarray, rho: np.ndarray, lam: float) -> list[np.ndarray]:
    """``exp(-lam f) grad(exp(lam f) operand)`` with ``f = -ln(rho)/2``, evaluated literally.

    Node-mask points are zeroed in the result.
    """
    rho = grid.check_field(rho, "rho")
    operand = grid.check_field(operand, "operand")
    mask = node_mask(rho)
    check_mask(mask, MASK_LIMIT, "Witten derivative undefined")
    safe = np.maximum(rho, np.finfo(float).tiny)
    up = safe ** (-lam / 2)      # exp(lam f)
    down = safe ** (lam / 2)     # exp(-lam f)
    lifted = up * operand
    return [np.where(mask, 0.0, down * d) for d in grid.gradient(lifted)]


def momentum_expectation(w: WaveField, lam: float = 0.0) -> np.ndarray:
    """Per-axis ``<P_lam>_psi``; complex, the imaginary part should vanish."""
    P = DeformedMomentum.from_wavefield(w, lam)
    return np.array([w.grid.integrate(np.conj(w.psi) * c) for c in P.apply()])
