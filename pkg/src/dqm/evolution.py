"""Time propagation: linear Schrodinger, the nonlinear classical-wavefunction equation,
and a Hamilton-Jacobi characteristics ensemble used as an independent oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import Grid
from .operators import log_derivatives
from .potentials import Potential
from .wavefield import (NODE_EPS, PhysicalParams, PolarField, WaveField,
                        enclosed_mask_fraction, node_mask, position_moments)

log = logging.getLogger(__name__)

#: dt <= STABILITY_FACTOR * m (min dx)^2 / hbar for the explicit classical integrator
STABILITY_FACTOR = 0.2
CLASSICAL_MASK_LIMIT = 0.10
#: The nonlinear term multiplies |psi| by a phase factor, which pushes amplitude
#: modes past Nyquist where they alias back with the wrong sign and break the
#: kinetic/quantum-potential cancellation; the error then grows like
#: exp(dt k^2 ...) at the top of the spectrum.  The right-hand side is truncated
#: to |k| < 2/3 k_N at every Runge-Kutta stage (Orszag's rule), so the scheme
#: evolves a consistent Galerkin projection; resolved modes are untouched.
#: Truncating only after each full step is not enough once the phase gradient
#: varies in space (e.g. in a harmonic trap).
DEALIAS_CUTOFF = 2 / 3

OBSERVABLE_NAMES = ("norm", "energy", "x_mean", "p_mean", "pcl_mean", "width", "q_mean", "fisher")


class NumericalAbort(RuntimeError):
    """Propagation hit NaN/Inf or lost its node-free support."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(eq=False)
class Trajectory:
    grid: Grid
    params: PhysicalParams
    mode: str
    dt: float
    stride: int
    times: np.ndarray
    states: np.ndarray                      # (n_stamps, *grid.shape), complex
    observables: dict = field(default_factory=dict)
    norm_tolerance: float = 1e-10

    def __len__(self) -> int:
        return len(self.times)

    @property
    def stamp_spacing(self) -> float:
        return self.dt * self.stride

    @property
    def norm_drift(self) -> float:
        n = self.observables["norm"]
        return float(np.max(np.abs(n - n[0])))

    def snapshot(self, i: int) -> WaveField:
        return WaveField(self.grid, self.states[i], self.params)


@dataclass(eq=False)
class EnsembleState:
    positions: np.ndarray     # (M, D)
    momenta: np.ndarray       # (M, D)
    weights: np.ndarray       # (M,)
    time: float = 0.0

    def __post_init__(self):
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0, atol=1e-12):
            raise ValueError("ensemble weights must be non-negative and sum to 1")

    def mean_position(self) -> np.ndarray:
        return self.weights @ self.positions


# ----------------------------------------------------------------------
# observables
# ----------------------------------------------------------------------

def _quantum_potential_raw(grid: Grid, rho: np.ndarray, mask: np.ndarray, hbar: float) -> np.ndarray:
    amp = np.sqrt(rho)
    lap = grid.laplacian(amp, weights=[-hbar ** 2 / (2 * m) for m in grid.masses])
    return np.where(mask, 0.0, np.divide(lap, amp, out=np.zeros_like(amp), where=amp > 0))


def measure(w: WaveField, lam: float) -> dict:
    """Per-stamp observables; ``energy`` is ``<K_lam + V>`` with lam 0 or 1."""
    grid, hb = w.grid, w.hbar
    rho = w.rho
    mask = node_mask(rho)
    norm2 = grid.integrate(rho)
    kin = grid.integrate(np.conj(w.psi) * grid.kinetic(w.psi, hb)).real
    pot = grid.integrate(w.potential * rho)
    Q = _quantum_potential_raw(grid, rho, mask, hb)
    q_mean = grid.integrate(rho * Q)
    logder = log_derivatives(w)
    p_mean = [grid.integrate(np.conj(w.psi) * (-1j * hb) * d).real for d in grid.gradient(w.psi)]
    pcl_mean = [grid.integrate(np.where(mask, 0.0, rho * hb * A.imag)) for A in logder]
    drho = grid.gradient(rho)
    fisher = sum(grid.integrate(np.where(mask, 0.0, np.divide(d ** 2, rho, out=np.zeros_like(rho), where=rho > 0)))
                 for d in drho)
    means, widths = position_moments(w)
    energy = kin + pot - lam * q_mean
    return {
        "norm": float(np.sqrt(norm2)),
        "energy": float(energy),
        "x_mean": means,
        "p_mean": np.array(p_mean),
        "pcl_mean": np.array(pcl_mean),
        "width": widths,
        "q_mean": float(q_mean),
        "fisher": float(fisher),
    }


def _stack_observables(records: list[dict]) -> dict:
    return {k: np.array([r[k] for r in records]) for k in OBSERVABLE_NAMES}


# ----------------------------------------------------------------------
# propagators
# ----------------------------------------------------------------------

def _check_run(dt: float, steps: int, stride: int) -> None:
    if not (dt > 0 and np.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt}")
    if steps < 1 or stride < 1:
        raise ValueError("steps and stride must be positive")


def evolve_linear(w0: WaveField, dt: float, steps: int, stride: int = 10) -> Trajectory:
    """Strang split-step: half potential, full kinetic in Fourier space, half potential."""
    _check_run(dt, steps, stride)
    grid, hb = w0.grid, w0.hbar
    V = w0.potential
    if not np.all(np.isfinite(V)):
        raise ValueError("potential must be bounded on the grid")
    half_v = np.exp(-0.5j * dt * V / hb)
    kin = np.exp(-1j * dt * grid.kinetic_symbol(hb) / hb)
    psi = np.array(w0.psi)
    times, states, records = [0.0], [psi.copy()], [measure(w0, 0.0)]
    for n in range(1, steps + 1):
        psi = half_v * np.fft.ifftn(kin * np.fft.fftn(half_v * psi))
        if not np.all(np.isfinite(psi)):
            raise NumericalAbort("non-finite wavefunction in linear evolution", n)
        if n % stride == 0:
            times.append(n * dt)
            states.append(psi.copy())
            records.append(measure(w0.with_psi(psi), 0.0))
    return Trajectory(grid, w0.params, "linear", dt, stride, np.array(times), np.array(states),
                      _stack_observables(records), norm_tolerance=1e-10)


def classical_dt_bound(grid: Grid, hbar: float) -> float:
    return STABILITY_FACTOR * min(grid.masses) * min(grid.spacing) ** 2 / hbar


def _classical_rhs(grid: Grid, psi: np.ndarray, V: np.ndarray, hb: float, step: int,
                   keep: np.ndarray | None = None) -> np.ndarray:
    if not np.all(np.isfinite(psi)):
        raise NumericalAbort("non-finite wavefunction in classical evolution", step)
    rho = psi.real ** 2 + psi.imag ** 2
    mask = rho <= NODE_EPS * rho.max()
    if mask.mean() > CLASSICAL_MASK_LIMIT:
        frac = enclosed_mask_fraction(mask)
        if frac > CLASSICAL_MASK_LIMIT:
            raise NumericalAbort(f"density developing nodes or caustics ({frac:.1%} enclosed mask)", step)
    rhs = (-1j / hb) * (grid.kinetic(psi, hb) + V * psi - quantum_potential_times(grid, psi, hb))
    return rhs if keep is None else grid.spectral_filter(rhs, keep)


def quantum_potential_times(grid: Grid, psi: np.ndarray, hbar: float) -> np.ndarray:
    """``Q psi`` as ``-sum hbar^2/(2m) d^2|psi| * psi/|psi|``.

    The product never divides a small derivative by a small amplitude, so it
    stays bounded where the state is exponentially small.
    """
    amp = np.abs(psi)
    lap = grid.laplacian(amp, weights=[-hbar ** 2 / (2 * m) for m in grid.masses])
    unit = np.divide(psi, amp, out=np.zeros_like(psi), where=amp > 0)
    return lap * unit


def evolve_classical(w0: WaveField, dt: float, steps: int, stride: int = 10) -> Trajectory:
    """Method of lines with classical RK4 for ``i hbar psi_t = (K + V - Q[|psi|^2]) psi``."""
    _check_run(dt, steps, stride)
    grid, hb = w0.grid, w0.hbar
    bound = classical_dt_bound(grid, hb)
    if dt > bound:
        raise ValueError(f"dt={dt} exceeds the classical stability bound {bound:.3g}")
    V = w0.potential
    keep = grid.truncation_symbol(DEALIAS_CUTOFF)
    psi = np.array(w0.psi)
    times, states, records = [0.0], [psi.copy()], [measure(w0, 1.0)]
    for n in range(1, steps + 1):
        k1 = _classical_rhs(grid, psi, V, hb, n, keep)
        k2 = _classical_rhs(grid, psi + 0.5 * dt * k1, V, hb, n, keep)
        k3 = _classical_rhs(grid, psi + 0.5 * dt * k2, V, hb, n, keep)
        k4 = _classical_rhs(grid, psi + dt * k3, V, hb, n, keep)
        psi = psi + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        psi = grid.spectral_filter(psi, keep)
        if not np.all(np.isfinite(psi)):
            raise NumericalAbort("non-finite wavefunction in classical evolution", n)
        if n % stride == 0:
            times.append(n * dt)
            states.append(psi.copy())
            records.append(measure(w0.with_psi(psi), 1.0))
    traj = Trajectory(grid, w0.params, "classical", dt, stride, np.array(times), np.array(states),
                      _stack_observables(records), norm_tolerance=1e-6)
    log.info("classical evolution: norm drift %.3g", traj.norm_drift)
    return traj


# ----------------------------------------------------------------------
# characteristics oracle
# ----------------------------------------------------------------------

def sample_density(grid: Grid, rho: np.ndarray, M: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of lattice cells, then a uniform offset inside the cell."""
    cdf = np.cumsum(rho.ravel())
    cdf /= cdf[-1]
    cells = np.searchsorted(cdf, rng.random(M), side="right")
    cells = np.minimum(cells, grid.size - 1)
    idx = np.unravel_index(cells, grid.shape)
    jitter = rng.random((M, grid.rank)) - 0.5
    return np.stack([grid.axes[a][idx[a]] + jitter[:, a] * grid.spacing[a]
                     for a in range(grid.rank)], axis=1)


def _force_from_field(grid: Grid, V: np.ndarray):
    dV = np.gradient(V, *grid.spacing, axis=tuple(range(grid.rank)))
    dV = [dV] if grid.rank == 1 else list(dV)

    def force(x):
        coords = [(x[:, a] - grid.axes[a][0]) / grid.spacing[a] for a in range(grid.rank)]
        return -np.stack([ndimage.map_coordinates(d, coords, order=1, mode="grid-wrap") for d in dV], axis=1)
    return force


def _state_for_current(initial: PolarField | WaveField) -> tuple[np.ndarray, np.ndarray, float]:
    """Return ``(psi, rho, hbar)`` for building the initial velocity field.

    A :class:`PolarField` stores ``S = 0`` on the node mask, which would put a
    phase jump into the rebuilt ``psi`` at the mask edge and ring through the
    spectral derivative.  The phase is therefore extended into the mask from the
    nearest unmasked point first.  Passing the :class:`WaveField` avoids the
    reconstruction altogether.
    """
    if isinstance(initial, WaveField):
        return initial.psi, initial.rho, initial.hbar
    S = initial.phase
    if initial.node_mask.any() and not initial.node_mask.all():
        nearest = ndimage.distance_transform_edt(initial.node_mask, return_distances=False, return_indices=True)
        S = S[tuple(nearest)]
    psi = np.sqrt(initial.rho) * np.exp(1j * S / initial.hbar)
    return psi, initial.rho, initial.hbar


def hj_characteristics(initial: PolarField | WaveField, potential: Potential | np.ndarray, M: int, dt: float,
                       steps: int, seed: int, stride: int | None = None) -> list[EnsembleState]:
    """Sample ``M`` particles from ``rho``, give them momentum ``grad S`` and run velocity Verlet.

    Returns the ensemble at step 0 and every ``stride`` steps (default: only the
    first and last states).
    """
    _check_run(dt, steps, stride or steps)
    if M < 1:
        raise ValueError("M must be positive")
    grid = initial.grid
    rng = np.random.default_rng(seed)
    psi, rho, hbar = _state_for_current(initial)
    x = sample_density(grid, rho, M, rng)
    # interpolate the current and the density separately; both are smooth and periodic
    current = [hbar * np.imag(np.conj(psi) * d) for d in grid.gradient(psi)]
    rho_at = grid.interpolate(rho, x)
    p = np.stack([grid.interpolate(j, x) for j in current], axis=1) / rho_at[:, None]
    masses = np.asarray(grid.masses)
    force = potential.force if isinstance(potential, Potential) else _force_from_field(grid, np.asarray(potential))
    weights = np.full(M, 1.0 / M)
    stride = stride or steps
    out = [EnsembleState(x.copy(), p.copy(), weights, 0.0)]
    f = force(x)
    for n in range(1, steps + 1):
        p_half = p + 0.5 * dt * f
        x = x + dt * p_half / masses
        f = force(x)
        p = p_half + 0.5 * dt * f
        if n % stride == 0:
            out.append(EnsembleState(x.copy(), p.copy(), weights, n * dt))
    return out


def ensemble_density(state: EnsembleState, grid: Grid, bandwidth=None, chunk: int = 20000) -> np.ndarray:
    """Periodic Gaussian kernel density estimate on the grid (default bandwidth ``2 dx`` per axis)."""
    h = [2 * dx for dx in grid.spacing] if bandwidth is None else list(np.broadcast_to(bandwidth, grid.rank))
    letters = "ijk"[: grid.rank]
    dens = grid.zeros()
    for start in range(0, len(state.weights), chunk):
        xs = state.positions[start:start + chunk]
        ws = state.weights[start:start + chunk]
        kernels = []
        for a in range(grid.rank):
            L = grid.extents[a]
            d = grid.axes[a][None, :] - xs[:, a:a + 1]
            d -= L * np.round(d / L)
            kernels.append(np.exp(-0.5 * (d / h[a]) ** 2) / (np.sqrt(2 * np.pi) * h[a]))
        spec = ",".join(f"m{c}" for c in letters)
        dens += np.einsum(f"m,{spec}->{letters}", ws, *kernels, optimize=True)
    return dens


def l1_distance(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    return float(grid.integrate(np.abs(f - g)))


# ----------------------------------------------------------------------
# continuity
# ----------------------------------------------------------------------

def probability_current(w: WaveField) -> list[np.ndarray]:
    """``hbar Im(conj(psi) d_a psi) / m_a`` per axis; finite everywhere."""
    return [w.hbar * np.imag(np.conj(w.psi) * d) / m for d, m in zip(w.grid.gradient(w.psi), w.grid.masses)]


def _interior(traj: Trajectory, i: int) -> None:
    if not 0 < i < len(traj) - 1:
        raise ValueError(f"stamp {i} has no neighbours on both sides (trajectory has {len(traj)} stamps)")


def continuity_residual(traj: Trajectory, stamp_index: int) -> float:
    """``||d rho/dt + div(rho grad S / m)|| / ||rho||`` with a central time difference."""
    _interior(traj, stamp_index)
    grid = traj.grid
    i = stamp_index
    rho = lambda k: np.abs(traj.states[k]) ** 2
    drho = (rho(i + 1) - rho(i - 1)) / (2 * traj.stamp_spacing)
    div = grid.divergence(probability_current(traj.snapshot(i)))
    return grid.norm(drho + div) / grid.norm(rho(i))


def continuity_series(traj: Trajectory) -> np.ndarray:
    out = np.full(len(traj), np.nan)
    for i in range(1, len(traj) - 1):
        out[i] = continuity_residual(traj, i)
    return out
