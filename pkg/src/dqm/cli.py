"""Command-line runner: ``dqm <analyze|evolve|sweep-lambda|check> --config FILE``.

Exit status: 0 success, 1 invariant failure, 2 configuration error, 3 numerical abort.
On any failure a JSON error record goes to stderr, and files this run
created are removed, except that a complete report of failed invariants is kept.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import kinetic_expectation, run_suite
from .evolution import (NumericalAbort, continuity_series, ensemble_density, evolve_classical,
                        evolve_linear, hj_characteristics, l1_distance)
from .functionals import action_density, xi_of_lambda
from .io import dump_field, write_polar_csv
from .operators import classical_momentum_field, factorization_residual, quantum_potential
from .scenarios import ConfigError, ScenarioConfig, build_scenario, random_node_free_state, scenario_potential
from .wavefield import NodeError, to_polar

log = logging.getLogger("dqm")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("analyze", "evolve", "sweep-lambda", "check")


class InvariantFailure(RuntimeError):
    """A run finished but one of its invariants is violated; outputs are kept."""


class OutputDir:
    """Tracks what a run writes so a failed run can be rolled back."""

    def __init__(self, path: Path):
        self.path = path
        self.created_dir = False
        self.written: list[Path] = []
        self.dirs: list[Path] = []

    def __enter__(self) -> "OutputDir":
        if self.path.exists() and not self.path.is_dir():
            raise ConfigError(f"output path {self.path} exists and is not a directory")
        if not self.path.exists():
            self.path.mkdir(parents=True)
            self.created_dir = True
        return self

    def file(self, name: str) -> Path:
        p = self.path / name
        if not p.parent.exists():
            p.parent.mkdir(parents=True)
            self.dirs.append(p.parent)
        self.written.append(p)
        return p

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)
        for d in reversed(self.dirs):
            if d.exists() and not any(d.iterdir()):
                d.rmdir()
        if self.created_dir and self.path.exists() and not any(self.path.iterdir()):
            self.path.rmdir()

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and not issubclass(exc_type, InvariantFailure):
            self.rollback()
        return False


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n")


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_analyze(cfg: ScenarioConfig, out: OutputDir) -> int:
    w = build_scenario(cfg)
    lam = cfg.physics.lam
    polar = to_polar(w)
    Q = quantum_potential(polar)
    keep = ~polar.node_mask
    pcl = [w.grid.integrate(np.where(keep, w.rho, 0.0) * g) for g in classical_momentum_field(w)]
    report = {
        "lambda": lam,
        "kinetic_expectation": kinetic_expectation(w, lam).real,
        "classical_momentum_mean": pcl,
        "factorization_residual": factorization_residual(w),
        "q_min": float(Q[keep].min()),
        "q_max": float(Q[keep].max()),
        "mask_fraction": polar.mask_fraction,
        "lambda_in_canonical_range": w.params.lambda_in_canonical_range,
    }
    write_polar_csv(out.file("polar.csv"), polar)
    _write_json(out.file("report.json"), report)
    return EXIT_OK


def _run_trajectory(cfg: ScenarioConfig, w):
    it = cfg.integrator
    evolve = evolve_classical if it.mode == "classical" else evolve_linear
    return evolve(w, it.dt, it.steps, it.stride)


def _series_header(rank: int) -> list[str]:
    cols = ["t", "norm", "energy"]
    for name in ("x_mean", "p_mean", "pcl_mean", "width"):
        cols += [f"{name}_{a}" for a in range(rank)]
    return cols + ["q_mean", "fisher", "continuity_residual"]


def cmd_evolve(cfg: ScenarioConfig, out: OutputDir) -> int:
    w = build_scenario(cfg)
    traj = _run_trajectory(cfg, w)
    obs = traj.observables
    cont = continuity_series(traj)
    with open(out.file("series.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_series_header(w.grid.rank))
        for i, t in enumerate(traj.times):
            row = [t, obs["norm"][i], obs["energy"][i]]
            for name in ("x_mean", "p_mean", "pcl_mean", "width"):
                row += list(obs[name][i])
            row += [obs["q_mean"][i], obs["fisher"][i], cont[i]]
            writer.writerow([_fmt(v) for v in row])
    if cfg.output.snapshots:
        for i, t in enumerate(traj.times):
            step = i * traj.stride
            dump_field(out.file(f"snaps/snap_{step}.bin"), w.grid, traj.states[i])
    report = {
        "mode": traj.mode,
        "dt": traj.dt,
        "steps": cfg.integrator.steps,
        "stride": traj.stride,
        "final_time": float(traj.times[-1]),
        "norm_drift": traj.norm_drift,
        "norm_tolerance": traj.norm_tolerance,
        "energy_drift": float(np.max(np.abs(obs["energy"] - obs["energy"][0]))),
        "final_x_mean": obs["x_mean"][-1],
        "final_width": obs["width"][-1],
        "max_continuity_residual": float(np.nanmax(cont)) if len(traj) > 2 else None,
    }
    M = cfg.integrator.ensemble_size
    if traj.mode == "classical" and M > 0:
        steps = cfg.integrator.steps
        ens = hj_characteristics(w, scenario_potential(cfg, w.grid), M, traj.dt, steps,
                                 cfg.integrator.seed)
        dens = ensemble_density(ens[-1], w.grid)
        report["ensemble"] = {
            "size": M,
            "seed": cfg.integrator.seed,
            "kde_bandwidth": [2 * dx for dx in w.grid.spacing],
            "l1_distance": l1_distance(w.grid, dens, np.abs(traj.states[-1]) ** 2),
            "mean_position": ens[-1].mean_position(),
        }
    ok = report["norm_drift"] <= traj.norm_tolerance
    report["passed"] = ok
    _write_json(out.file("report.json"), report)
    if not ok:
        raise InvariantFailure(f"norm drift {traj.norm_drift:.3g} exceeds {traj.norm_tolerance:g}")
    return EXIT_OK


def cmd_sweep(cfg: ScenarioConfig, out: OutputDir) -> int:
    w = build_scenario(cfg)
    traj = _run_trajectory(cfg, w)
    if len(traj) < 3:
        raise ConfigError("sweep-lambda needs at least 3 recorded stamps (steps / stride >= 2)")
    masses = w.grid.masses
    rows = []
    for lam in cfg.sweep.lambdas:
        polar_form = action_density(traj, lam, form="polar")
        if len(set(masses)) == 1:
            xi = _fmt(xi_of_lambda(lam, w.hbar, masses[0]))
        else:
            xi = ";".join(_fmt(xi_of_lambda(lam, w.hbar, m)) for m in masses)
        rows.append([_fmt(lam), xi, _fmt(kinetic_expectation(w, lam).real),
                     _fmt(polar_form.fisher_part), _fmt(polar_form.total)])
    with open(out.file("sweep.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "xi", "kinetic_expectation", "fisher_part", "action_total"])
        writer.writerows(rows)
    _write_json(out.file("report.json"), {
        "mode": traj.mode,
        "stamps": len(traj),
        "final_time": float(traj.times[-1]),
        "lambdas": cfg.sweep.lambdas,
    })
    return EXIT_OK


def cmd_check(cfg: ScenarioConfig, out: OutputDir) -> int:
    w = build_scenario(cfg)
    aux = random_node_free_state(w.grid, cfg.integrator.seed, params=w.params)
    results = run_suite(w, witten_operand=aux, dt=min(cfg.integrator.dt, 1e-3),
                        product_state=cfg.scenario == "two_particle_product")
    passed = all(r.passed for r in results)
    _write_json(out.file("report.json"), {
        "scenario": cfg.scenario,
        "passed": passed,
        "checks": [r.to_dict() for r in results],
    })
    for r in results:
        log.info("%-36s %-4s measured %.3e  tolerance %.1e", r.name, "ok" if r.passed else "FAIL",
                 r.measured, r.tolerance)
    if not passed:
        failed = [r.name for r in results if not r.passed]
        raise InvariantFailure(f"invariants failed: {', '.join(failed)}")
    return EXIT_OK


HANDLERS = {"analyze": cmd_analyze, "evolve": cmd_evolve, "sweep-lambda": cmd_sweep, "check": cmd_check}


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, help="random seed (overrides integrator.seed)")
    parser.add_argument("--lambda", dest="lam", type=float, help="deformation parameter (overrides physics.lambda)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config)
    data = cfg.to_dict()
    if args.out is not None:
        data["output"]["dir"] = args.out
    if args.seed is not None:
        data["integrator"]["seed"] = args.seed
    if args.lam is not None:
        data["physics"]["lambda"] = args.lam
    return ScenarioConfig.from_dict(data)


def _fail(code: int, kind: str, message: str, **extra) -> int:
    record = {"error": kind, "message": message, "exit_code": code, **extra}
    print(json.dumps(record, default=_json_default), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    out_path = Path(cfg.output.dir)
    try:
        with OutputDir(out_path) as out:
            out.file("config.json").write_text(cfg.dumps())
            code = HANDLERS[args.command](cfg, out)
    except InvariantFailure as exc:
        return _fail(EXIT_INVARIANT, "invariant", str(exc), report=str(out_path / "report.json"))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except NumericalAbort as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc), step=exc.step)
    except (NodeError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except OSError as exc:
        return _fail(EXIT_CONFIG, "io", str(exc))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
