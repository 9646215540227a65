"""Scenario presets and the JSON run configuration."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .evolution import classical_dt_bound
from .grid import Grid, make_grid
from .io import load_field, read_field_csv
from .potentials import Potential
from .wavefield import PhysicalParams, WaveField, normalize

log = logging.getLogger(__name__)

SCENARIOS = (
    "plane_wave",
    "gaussian_packet",
    "harmonic_ground",
    "harmonic_coherent",
    "two_particle_product",
    "two_particle_entangled",
    "from_file",
)
MODES = ("linear", "classical")
POTENTIALS = ("free", "harmonic")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# ----------------------------------------------------------------------
# configuration records
# ----------------------------------------------------------------------

@dataclass
class GridSpec:
    extents: list = field(default_factory=lambda: [40.0])
    points: list = field(default_factory=lambda: [512])


@dataclass
class PhysicsSpec:
    hbar: float = 1.0
    masses: list | None = None
    lam: float = 0.0


@dataclass
class ScenarioParams:
    x0: list | None = None
    p0: list | None = None
    sigma: list | None = None
    omega: float = 1.0
    mixing_angle: float = math.pi / 4
    potential: str | None = None
    file: str | None = None


@dataclass
class IntegratorSpec:
    mode: str = "linear"
    dt: float = 1e-3
    steps: int = 1000
    stride: int = 10
    seed: int = 0
    ensemble_size: int = 10000


@dataclass
class OutputSpec:
    dir: str = "dqm-out"
    snapshots: bool = True


@dataclass
class SweepSpec:
    lambdas: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])


# JSON keys that differ from the attribute names
_RENAMES = {"physics": {"lambda": "lam"}}


def _load_section(cls, data, section: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"'{section}' must be an object")
    renames = _RENAMES.get(section, {})
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        attr = renames.get(key, key)
        if attr not in names:
            raise ConfigError(f"unknown key '{section}.{key}'")
        kwargs[attr] = value
    return cls(**kwargs)


def _dump_section(obj, section: str) -> dict:
    back = {v: k for k, v in _RENAMES.get(section, {}).items()}
    return {back.get(k, k): v for k, v in asdict(obj).items()}


@dataclass
class ScenarioConfig:
    scenario: str = "gaussian_packet"
    grid: GridSpec = field(default_factory=GridSpec)
    physics: PhysicsSpec = field(default_factory=PhysicsSpec)
    params: ScenarioParams = field(default_factory=ScenarioParams)
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    _SECTIONS = {"grid": GridSpec, "physics": PhysicsSpec, "params": ScenarioParams,
                 "integrator": IntegratorSpec, "output": OutputSpec, "sweep": SweepSpec}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(data) - set(cls._SECTIONS) - {"scenario"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        try:
            sections = {name: _load_section(kind, data.get(name), name) for name, kind in cls._SECTIONS.items()}
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cls(scenario=data.get("scenario", "gaussian_packet"), **sections).resolved()

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {"scenario": self.scenario}
        for name in self._SECTIONS:
            out[name] = _dump_section(getattr(self, name), name)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @property
    def rank(self) -> int:
        return len(self.grid.extents)

    def resolved(self) -> "ScenarioConfig":
        """Validate, coerce types and fill every default so the archived copy is self-describing."""
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario '{self.scenario}'; choose one of {list(SCENARIOS)}")
        g = self.grid
        if not isinstance(g.extents, list) or not isinstance(g.points, list) or len(g.extents) != len(g.points):
            raise ConfigError("grid.extents and grid.points must be lists of equal length")
        rank = len(g.extents)
        g.extents = [float(v) for v in g.extents]
        g.points = [_as_int(v, "grid.points") for v in g.points]
        ph = self.physics
        ph.hbar = float(ph.hbar)
        ph.lam = float(ph.lam)
        ph.masses = [1.0] * rank if ph.masses is None else [float(m) for m in _axis_list(ph.masses, rank, "physics.masses")]
        pr = self.params
        default_x0 = [-2.0, 2.0] + [0.0] * (rank - 2) if self.scenario == "two_particle_entangled" else [0.0] * rank
        pr.x0 = default_x0 if pr.x0 is None else [float(v) for v in _axis_list(pr.x0, rank, "params.x0")]
        pr.p0 = [0.0] * rank if pr.p0 is None else [float(v) for v in _axis_list(pr.p0, rank, "params.p0")]
        pr.sigma = [1.0] * rank if pr.sigma is None else [float(v) for v in _axis_list(pr.sigma, rank, "params.sigma")]
        pr.omega = float(pr.omega)
        pr.mixing_angle = float(pr.mixing_angle)
        if pr.potential is None:
            pr.potential = "harmonic" if self.scenario.startswith("harmonic") else "free"
        if pr.potential not in POTENTIALS:
            raise ConfigError(f"params.potential must be one of {list(POTENTIALS)}")
        it = self.integrator
        if it.mode not in MODES:
            raise ConfigError(f"integrator.mode must be one of {list(MODES)}")
        it.dt = float(it.dt)
        it.steps = _as_int(it.steps, "integrator.steps")
        it.stride = _as_int(it.stride, "integrator.stride")
        it.seed = _as_int(it.seed, "integrator.seed")
        it.ensemble_size = _as_int(it.ensemble_size, "integrator.ensemble_size")
        self.output.dir = str(self.output.dir)
        self.output.snapshots = bool(self.output.snapshots)
        self.sweep.lambdas = [float(v) for v in self.sweep.lambdas]
        self.validate()
        return self

    def make_grid(self) -> Grid:
        try:
            return make_grid(self.grid.extents, self.grid.points, self.physics.masses)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def validate(self) -> None:
        grid = self.make_grid()
        ph, pr, it = self.physics, self.params, self.integrator
        if not (math.isfinite(ph.hbar) and ph.hbar > 0):
            raise ConfigError("physics.hbar must be positive")
        if not math.isfinite(ph.lam):
            raise ConfigError("physics.lambda must be finite")
        if not (it.dt > 0 and math.isfinite(it.dt)):
            raise ConfigError("integrator.dt must be positive")
        if it.steps < 1 or it.stride < 1:
            raise ConfigError("integrator.steps and integrator.stride must be at least 1")
        if it.seed < 0:
            raise ConfigError("integrator.seed must be non-negative")
        if it.ensemble_size < 0:
            raise ConfigError("integrator.ensemble_size must be non-negative")
        if pr.omega <= 0 and (pr.potential == "harmonic" or self.scenario.startswith("harmonic")):
            raise ConfigError("params.omega must be positive for harmonic scenarios")
        if self.scenario.startswith("two_particle") and grid.rank < 2:
            raise ConfigError(f"{self.scenario} needs a grid with at least 2 axes")
        if self.scenario == "from_file" and not pr.file:
            raise ConfigError("from_file scenario needs params.file")
        if it.mode == "classical":
            bound = classical_dt_bound(grid, ph.hbar)
            if it.dt > bound:
                raise ConfigError(f"integrator.dt={it.dt} exceeds the classical stability bound "
                                  f"0.2*m*dx^2/hbar = {bound:.6g}")
        check_resolution(self, grid)


def _as_int(v, name: str) -> int:
    if isinstance(v, bool) or not float(v).is_integer():
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(v)


def _axis_list(v, rank: int, name: str) -> list:
    if isinstance(v, (int, float)):
        return [v] * rank
    if not isinstance(v, list) or len(v) != rank:
        raise ConfigError(f"{name} must be a number or a list with one entry per axis ({rank})")
    return v


def packet_widths(cfg: ScenarioConfig) -> list[float] | None:
    """Density standard deviation per axis for the Gaussian-type scenarios."""
    pr, ph = cfg.params, cfg.physics
    if cfg.scenario in ("harmonic_ground", "harmonic_coherent"):
        return [math.sqrt(ph.hbar / (2 * m * pr.omega)) for m in ph.masses]
    if cfg.scenario in ("gaussian_packet", "two_particle_product", "two_particle_entangled"):
        return list(pr.sigma)
    return None


def check_resolution(cfg: ScenarioConfig, grid: Grid) -> None:
    """Packet width at least 4 dx and momentum below half the Nyquist momentum, per axis."""
    hbar = cfg.physics.hbar
    widths = packet_widths(cfg)
    for a, dx in enumerate(grid.spacing):
        if widths is not None:
            if widths[a] <= 0:
                raise ConfigError(f"axis {a}: packet width must be positive")
            if widths[a] < 4 * dx:
                raise ConfigError(f"axis {a}: packet width {widths[a]:.6g} violates sigma >= 4*dx = {4 * dx:.6g}")
        if cfg.scenario != "harmonic_ground" and cfg.scenario != "from_file":
            limit = 0.5 * math.pi * hbar / dx
            if abs(cfg.params.p0[a]) >= limit:
                raise ConfigError(f"axis {a}: |p0| = {abs(cfg.params.p0[a]):.6g} violates p0 < 0.5*pi*hbar/dx = {limit:.6g}")
    if cfg.scenario == "plane_wave":
        for a, (L, p) in enumerate(zip(grid.extents, cfg.params.p0)):
            turns = p * L / (2 * math.pi * hbar)
            if abs(turns - round(turns)) > 1e-9:
                raise ConfigError(f"axis {a}: plane wave with p0={p} is not periodic on L={L} "
                                  f"(p0*L/(2*pi*hbar) = {turns:.6g} must be an integer)")


# ----------------------------------------------------------------------
# state construction
# ----------------------------------------------------------------------

def scenario_potential(cfg: ScenarioConfig, grid: Grid) -> Potential:
    if cfg.params.potential == "harmonic":
        return Potential.harmonic(grid, cfg.params.omega)
    return Potential.free(grid.rank)


def _gaussian(grid: Grid, centers, momenta, widths, hbar: float) -> np.ndarray:
    psi = np.ones(grid.shape, dtype=complex)
    for x, c, p, s in zip(grid.coords, centers, momenta, widths):
        psi = psi * np.exp(-((x - c) ** 2) / (4 * s * s) + 1j * p * x / hbar)
    return psi


def _from_file(cfg: ScenarioConfig, grid: Grid) -> np.ndarray:
    path = Path(cfg.params.file)
    if not path.exists():
        raise ConfigError(f"params.file {path} does not exist")
    if path.suffix.lower() == ".csv":
        try:
            return read_field_csv(path, grid)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        extents, points, values = load_field(path)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if tuple(points) != grid.points or not np.allclose(extents, grid.extents, rtol=0, atol=1e-12):
        raise ConfigError(f"{path}: field grid {points}/{extents} does not match config grid "
                          f"{grid.points}/{grid.extents}")
    return values.astype(complex)


def build_scenario(cfg: ScenarioConfig) -> WaveField:
    """Normalized initial state for ``cfg`` with the scenario potential attached."""
    grid = cfg.make_grid()
    check_resolution(cfg, grid)
    pr, hb = cfg.params, cfg.physics.hbar
    kind = cfg.scenario
    if kind == "plane_wave":
        psi = np.ones(grid.shape, dtype=complex)
        for x, p in zip(grid.coords, pr.p0):
            psi = psi * np.exp(1j * p * x / hb)
    elif kind in ("gaussian_packet", "two_particle_product"):
        psi = _gaussian(grid, pr.x0, pr.p0, pr.sigma, hb)
    elif kind == "harmonic_ground":
        psi = _gaussian(grid, [0.0] * grid.rank, [0.0] * grid.rank, packet_widths(cfg), hb)
    elif kind == "harmonic_coherent":
        psi = _gaussian(grid, pr.x0, pr.p0, packet_widths(cfg), hb)
    elif kind == "two_particle_entangled":
        swapped = list(pr.x0)
        swapped[0], swapped[1] = pr.x0[1], pr.x0[0]
        moms = list(pr.p0)
        moms[0], moms[1] = pr.p0[1], pr.p0[0]
        psi = (math.cos(pr.mixing_angle) * _gaussian(grid, pr.x0, pr.p0, pr.sigma, hb)
               + math.sin(pr.mixing_angle) * _gaussian(grid, swapped, moms, pr.sigma, hb))
    elif kind == "from_file":
        psi = _from_file(cfg, grid)
    else:  # pragma: no cover - guarded by validation
        raise ConfigError(f"unknown scenario {kind}")
    params = PhysicalParams(hbar=hb, potential=scenario_potential(cfg, grid).on_grid(grid), lam=cfg.physics.lam)
    try:
        w = normalize(WaveField(grid, psi, params))
    except ValueError as exc:
        raise ConfigError(f"initial state: {exc}") from None
    _warn_on_leakage(w)
    return w


def boundary_amplitude(w: WaveField) -> float:
    """Largest ``|psi|`` on the box faces relative to ``max |psi|``."""
    amp = np.abs(w.psi)
    faces = [np.take(amp, idx, axis=a) for a in range(w.grid.rank) for idx in (0, -1)]
    return float(max(f.max() for f in faces) / amp.max())


def _warn_on_leakage(w: WaveField) -> None:
    # a localized state that does not decay to roundoff at the faces is not
    # periodic, and spectral derivatives pick up Gibbs errors of that size
    edge = boundary_amplitude(w)
    if 1e-10 < edge < 0.5:
        log.warning("state reaches the box boundary (|psi| = %.1e of its maximum); enlarge the box", edge)


def random_node_free_state(grid: Grid, seed: int, modes: int = 3, amplitude: float = 0.3,
                           params: PhysicalParams | None = None) -> WaveField:
    """``exp(f)`` for a random complex trigonometric polynomial ``f`` of low degree.

    Such a state never vanishes and its spectrum decays faster than
    exponentially, so it is effectively band-limited on any reasonable grid.
    """
    rng = np.random.default_rng(seed)
    f = np.zeros(grid.shape, dtype=complex)
    ks = range(-modes, modes + 1)
    for combo in np.ndindex(*([2 * modes + 1] * grid.rank)):
        kvec = [list(ks)[c] for c in combo]
        if not any(kvec):
            continue
        coeff = amplitude * (rng.normal() + 1j * rng.normal()) / (1 + sum(k * k for k in kvec))
        phase = sum(2 * np.pi * k * (x + L / 2) / L for k, x, L in zip(kvec, grid.coords, grid.extents))
        f = f + coeff * np.exp(1j * phase)
    # real part of f shapes the amplitude, imaginary part the phase
    return normalize(WaveField(grid, np.exp(f), params or PhysicalParams()))
