import json
import logging
import math

import numpy as np
import pytest

from dqm.checks import q_separability_error
from dqm.grid import make_grid
from dqm.io import dump_field, write_field_csv
from dqm.operators import DeformedMomentum, classical_momentum_field, quantum_potential
from dqm.scenarios import (ConfigError, ScenarioConfig, boundary_amplitude, build_scenario, packet_widths,
                           random_node_free_state)
from dqm.wavefield import expectation, to_polar


def config(**sections):
    return ScenarioConfig.from_dict(sections)


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

def test_defaults_are_materialized():
    cfg = config()
    d = cfg.to_dict()
    assert d["scenario"] == "gaussian_packet"
    assert d["physics"] == {"hbar": 1.0, "masses": [1.0], "lambda": 0.0}
    assert d["params"]["x0"] == [0.0] and d["params"]["sigma"] == [1.0]
    assert d["params"]["potential"] == "free"
    assert d["sweep"]["lambdas"] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_round_trip_through_json(tmp_path):
    cfg = config(scenario="two_particle_entangled",
                 grid={"extents": [20, 20], "points": [96, 96]},
                 physics={"masses": [1, 2], "lambda": 0.3},
                 integrator={"mode": "classical", "dt": 1e-3, "steps": 4, "stride": 2})
    path = tmp_path / "c.json"
    path.write_text(cfg.dumps())
    again = ScenarioConfig.load(path)
    assert again.to_dict() == cfg.to_dict()
    assert again.params.x0 == [-2.0, 2.0]
    assert again.physics.lam == 0.3


def test_scalar_axis_values_broadcast():
    cfg = config(grid={"extents": [20, 20], "points": [96, 96]}, params={"sigma": 1.5, "p0": 0.5})
    assert cfg.params.sigma == [1.5, 1.5] and cfg.params.p0 == [0.5, 0.5]


def test_harmonic_widths_follow_omega():
    cfg = config(scenario="harmonic_ground", params={"omega": 2.0}, physics={"hbar": 1.0, "masses": [0.5]})
    assert packet_widths(cfg) == [math.sqrt(1 / (2 * 0.5 * 2.0))]
    assert cfg.params.potential == "harmonic"


@pytest.mark.parametrize("data, match", [
    ({"scenario": "vortex"}, "unknown scenario"),
    ({"colour": 1}, "unknown top-level"),
    ({"grid": {"extent": [1]}}, "unknown key 'grid.extent'"),
    ({"grid": {"extents": [40], "points": [511]}}, "grid"),
    ({"grid": {"extents": [40, 40], "points": [512]}}, "equal length"),
    ({"grid": {"points": [512.5]}}, "integer"),
    ({"physics": {"hbar": 0}}, "hbar"),
    ({"physics": {"masses": [1, 2]}}, "one entry per axis"),
    ({"integrator": {"mode": "quantum"}}, "mode"),
    ({"integrator": {"dt": -1}}, "dt"),
    ({"integrator": {"steps": 0}}, "steps"),
    ({"integrator": {"mode": "classical", "dt": 0.01}}, "stability bound"),
    ({"params": {"sigma": 0.2}}, "sigma >= 4\\*dx"),
    ({"params": {"p0": 200.0}}, "p0 < 0.5\\*pi"),
    ({"scenario": "plane_wave", "params": {"p0": 1.0}}, "not periodic"),
    ({"scenario": "two_particle_product"}, "at least 2 axes"),
    ({"scenario": "from_file"}, "params.file"),
    ({"scenario": "harmonic_ground", "params": {"omega": 0}}, "omega"),
    ({"params": {"potential": "coulomb"}}, "potential"),
    ([1, 2], "JSON object"),
])
def test_invalid_configs(data, match):
    with pytest.raises(ConfigError, match=match):
        ScenarioConfig.from_dict(data)


def test_load_reports_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        ScenarioConfig.load(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        ScenarioConfig.load(tmp_path / "missing.json")


# ----------------------------------------------------------------------
# state construction
# ----------------------------------------------------------------------

def test_plane_wave_eigenvalues():
    L = 2 * math.pi * 5
    w = build_scenario(config(scenario="plane_wave", grid={"extents": [L], "points": [128]}, params={"p0": 2.0}))
    (Ppsi,) = DeformedMomentum.from_wavefield(w, 0.0).apply()
    assert abs(expectation(Ppsi, w) - 2.0) < 1e-12
    (pcl,) = classical_momentum_field(w)
    assert abs(w.grid.integrate(w.rho * pcl) - 2.0) < 1e-12


def test_gaussian_packet_moments():
    w = build_scenario(config(params={"x0": 0.0, "p0": 2.0, "sigma": 1.0}))
    x = w.grid.coords[0]
    assert abs(expectation(x * w.psi, w)) < 1e-8
    (Ppsi,) = DeformedMomentum.from_wavefield(w, 0.0).apply()
    assert abs(expectation(Ppsi, w) - 2.0) < 1e-8
    assert abs(w.grid.integrate(w.rho) - 1) < 1e-12


def test_harmonic_ground_is_eigenstate():
    w = build_scenario(config(scenario="harmonic_ground", grid={"extents": [20], "points": [128]}))
    Hpsi = w.grid.kinetic(w.psi, w.hbar) + w.potential * w.psi
    assert np.max(np.abs(Hpsi - 0.5 * w.psi)) < 1e-10


def test_two_particle_product_q_is_additive():
    cfg = config(scenario="two_particle_product", grid={"extents": [30, 30], "points": [128, 128]},
                 physics={"masses": [1.0, 2.0]}, params={"x0": [-1.0, 1.5], "p0": [0.5, -1.0], "sigma": [1.0, 1.5]})
    w = build_scenario(cfg)
    assert q_separability_error(w) < 1e-8
    # each factor's Q is that of a single Gaussian: hbar^2/(2m) (1/(2 s^2) - (x-x0)^2/(4 s^4))
    x, y = np.broadcast_arrays(*w.grid.coords)
    exact = (0.5 / 1.0) * (1 / 2 - (x + 1) ** 2 / 4) + (0.5 / 2.0) * (1 / (2 * 1.5 ** 2) - (y - 1.5) ** 2 / (4 * 1.5 ** 4))
    Q = quantum_potential(to_polar(w))
    core = (np.abs(x + 1) < 3) & (np.abs(y - 1.5) < 4)
    assert np.max(np.abs(Q - exact)[core]) < 1e-8


def test_entangled_state_is_symmetric_and_normalized():
    cfg = config(scenario="two_particle_entangled", grid={"extents": [20, 20], "points": [96, 96]})
    w = build_scenario(cfg)
    assert abs(w.grid.integrate(w.rho) - 1) < 1e-12
    # equal mixing swaps the two particles; the grid is symmetric under x <-> y
    assert np.max(np.abs(w.psi - w.psi.T)) < 1e-12
    x, y = np.broadcast_arrays(*w.grid.coords)
    assert w.grid.integrate(w.rho * x * y) < -3


def test_mixing_angle_zero_is_a_product():
    cfg = config(scenario="two_particle_entangled", grid={"extents": [20, 20], "points": [96, 96]},
                 params={"mixing_angle": 0.0})
    assert q_separability_error(build_scenario(cfg)) < 1e-8


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_from_file(tmp_path, suffix):
    g = make_grid([10.0], [64])
    ref = random_node_free_state(g, 7)
    path = tmp_path / f"state{suffix}"
    (write_field_csv if suffix == ".csv" else dump_field)(path, g, ref.psi * 3)
    w = build_scenario(config(scenario="from_file", grid={"extents": [10.0], "points": [64]},
                              params={"file": str(path)}))
    assert np.max(np.abs(w.psi - ref.psi)) < 1e-14


def test_from_file_grid_mismatch(tmp_path):
    g = make_grid([10.0], [32])
    dump_field(tmp_path / "s.bin", g, np.ones(32, complex))
    with pytest.raises(ConfigError, match="does not match"):
        build_scenario(config(scenario="from_file", grid={"extents": [10.0], "points": [64]},
                              params={"file": str(tmp_path / "s.bin")}))


def test_build_is_deterministic():
    cfg = config(scenario="two_particle_entangled", grid={"extents": [20, 20], "points": [96, 96]})
    assert np.array_equal(build_scenario(cfg).psi, build_scenario(cfg).psi)


def test_leakage_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="dqm.scenarios"):
        w = build_scenario(config(grid={"extents": [10.0], "points": [128]}, params={"sigma": 1.5}))
    assert boundary_amplitude(w) > 1e-10
    assert "box boundary" in caplog.text
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="dqm.scenarios"):
        build_scenario(config())
    assert caplog.text == ""


def test_archived_config_is_plain_json():
    cfg = config(scenario="harmonic_coherent", params={"x0": 2.0})
    data = json.loads(cfg.dumps())
    assert ScenarioConfig.from_dict(data).to_dict() == data
