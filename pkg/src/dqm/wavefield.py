"""Wavefunction containers, the polar (Madelung) split and expectation values."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import Grid

#: relative density threshold below which phase-derived quantities are undefined
NODE_EPS = 1e-12


class NodeError(ValueError):
    """Raised when too much of the density sits below the node threshold."""


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    hbar: float = 1.0
    potential: np.ndarray | None = None
    lam: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.hbar) or self.hbar <= 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not np.isfinite(self.lam):
            raise ValueError(f"lambda must be finite, got {self.lam}")

    @property
    def lambda_in_canonical_range(self) -> bool:
        return 0.0 <= self.lam <= 1.0


@dataclass(frozen=True, eq=False)
class WaveField:
    grid: Grid
    psi: np.ndarray
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def __post_init__(self):
        psi = np.array(self.grid.check_field(self.psi, "psi"), dtype=complex)
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        if self.params.potential is not None:
            self.grid.check_field(self.params.potential, "potential")
        n2 = self.grid.integrate(np.abs(psi) ** 2)
        if not (np.isfinite(n2) and n2 > 0):
            raise ValueError("wavefunction has zero or non-finite norm")

    @property
    def hbar(self) -> float:
        return self.params.hbar

    @property
    def rho(self) -> np.ndarray:
        return self.psi.real ** 2 + self.psi.imag ** 2

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.grid.integrate(self.rho)))

    @property
    def potential(self) -> np.ndarray:
        if self.params.potential is None:
            return self.grid.zeros()
        return np.asarray(self.params.potential, dtype=float)

    def with_psi(self, psi: np.ndarray) -> "WaveField":
        return WaveField(self.grid, psi, self.params)

    def node_mask(self) -> np.ndarray:
        return node_mask(self.rho)


@dataclass(frozen=True, eq=False)
class PolarField:
    """Density, unwrapped phase ``S`` (action units) and the node mask."""

    grid: Grid
    rho: np.ndarray
    phase: np.ndarray
    node_mask: np.ndarray
    hbar: float = 1.0

    @property
    def mask_fraction(self) -> float:
        return float(np.mean(self.node_mask))


def node_mask(rho: np.ndarray) -> np.ndarray:
    """True where ``rho <= NODE_EPS * max(rho)``."""
    rho = np.asarray(rho)
    return rho <= NODE_EPS * np.max(rho)


def enclosed_mask_fraction(mask: np.ndarray) -> float:
    """Fraction of points that are masked but not part of the outer low-density tail.

    The tail is taken to be the largest connected masked region, with
    connectivity wrapping around the periodic box.  What remains are holes
    in the support, i.e. nodes, which is what the failure rules look for.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0.0
    labels, n = ndimage.label(mask)
    if n > 1:
        parent = np.arange(n + 1)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for axis in range(mask.ndim):
            lo = np.take(labels, 0, axis=axis)
            hi = np.take(labels, -1, axis=axis)
            for a, b in zip(lo.ravel(), hi.ravel()):
                if a and b:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[rb] = ra
        roots = np.array([find(i) for i in range(n + 1)])
        labels = roots[labels]
    sizes = np.bincount(labels[mask].ravel())
    return float((mask.sum() - sizes.max()) / mask.size)


def check_mask(mask: np.ndarray, limit: float, message: str) -> None:
    frac = enclosed_mask_fraction(mask)
    if frac > limit:
        raise NodeError(f"{message}: {frac:.1%} of points are enclosed nodes (limit {limit:.0%})")


def normalize(w: WaveField) -> WaveField:
    n = w.norm
    if n == 0:
        raise ValueError("cannot normalize a zero wavefunction")
    return w.with_psi(w.psi / n)


def _unwrap_line(phase: np.ndarray, mask: np.ndarray, start: int) -> np.ndarray:
    """Unwrap a 1D phase line outward from ``start``, stepping over masked points."""
    out = phase.copy()
    idx = np.flatnonzero(~mask)
    if idx.size == 0:
        return out
    pos = np.searchsorted(idx, start)
    pos = min(pos, idx.size - 1)
    fwd = idx[pos:]
    out[fwd] = np.unwrap(phase[fwd])
    back = idx[: pos + 1][::-1]
    out[back] = np.unwrap(phase[back])
    return out


def unwrap_phase(angle: np.ndarray, mask: np.ndarray, anchor: tuple[int, ...]) -> np.ndarray:
    """Sequential 1D unwrapping, axis 0 first, through lines passing the anchor point."""
    out = np.array(angle, dtype=float)
    ndim = out.ndim
    for axis in range(ndim):
        # lines along `axis` whose later-axis indices sit on the anchor
        index = [slice(None)] * ndim
        for b in range(axis + 1, ndim):
            index[b] = anchor[b]
        sub = out[tuple(index)]
        sub_mask = mask[tuple(index)]
        moved = np.moveaxis(sub, axis, -1)
        moved_mask = np.moveaxis(sub_mask, axis, -1)
        flat = moved.reshape(-1, moved.shape[-1])
        flat_mask = moved_mask.reshape(-1, moved.shape[-1])
        for i in range(flat.shape[0]):
            flat[i] = _unwrap_line(flat[i], flat_mask[i], anchor[axis])
        out[tuple(index)] = np.moveaxis(flat.reshape(moved.shape), -1, axis)
    return out


def to_polar(w: WaveField) -> PolarField:
    rho = w.rho
    mask = node_mask(rho)
    check_mask(mask, 0.5, "phase undefined")
    anchor = np.unravel_index(np.argmax(rho), rho.shape)
    angle = np.angle(w.psi)
    phase = unwrap_phase(angle, mask, anchor)
    S = np.where(mask, 0.0, w.hbar * phase)
    return PolarField(w.grid, rho, S, mask, w.hbar)


def from_polar(p: PolarField, params: PhysicalParams | None = None) -> WaveField:
    if np.any(p.rho < 0):
        raise ValueError("negative density")
    params = params or PhysicalParams(hbar=p.hbar)
    S = np.where(p.node_mask, 0.0, p.phase)
    psi = np.sqrt(p.rho) * np.exp(1j * S / params.hbar)
    return WaveField(p.grid, psi, params)


def expectation(observable: np.ndarray, w: WaveField) -> complex:
    """``integrate(conj(psi) * observable)`` where ``observable`` is ``A psi`` on the grid."""
    observable = np.asarray(observable)
    if observable.shape != w.grid.shape:
        raise ValueError(f"observable shape {observable.shape} does not match grid {w.grid.shape}")
    return complex(w.grid.integrate(np.conj(w.psi) * observable))


def position_moments(w: WaveField) -> tuple[np.ndarray, np.ndarray]:
    """Mean position and standard deviation per axis, from the normalized density."""
    rho = w.rho
    total = w.grid.integrate(rho)
    means, widths = [], []
    for x in w.grid.coords:
        mu = w.grid.integrate(x * rho) / total
        var = w.grid.integrate((x - mu) ** 2 * rho) / total
        means.append(mu)
        widths.append(np.sqrt(var))
    return np.array(means), np.array(widths)
