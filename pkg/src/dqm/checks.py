"""Invariant suite run by ``dqm check``: each entry records what was measured and the bound it must meet."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .evolution import continuity_series, evolve_linear
from .functionals import kinetic_decomposition, weizsacker
from .operators import (DeformedMomentum, apply_deformed_kinetic, classical_momentum_field,
                        factorization_residual, momentum_expectation, quantum_potential,
                        witten_deformed_gradient)
from .wavefield import WaveField, from_polar, to_polar

LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name: str, measured: float, tol: float, note: str = "") -> CheckResult:
    measured = float(measured)
    return CheckResult(name, measured, tol, bool(np.isfinite(measured) and measured <= tol), note)


def _rel(a: np.ndarray, b: np.ndarray, where: np.ndarray, scale: float) -> float:
    diff = np.abs(a - b)[where]
    return float(diff.max() / scale) if diff.size else 0.0


# ----------------------------------------------------------------------
# individual measurements (also used directly by the test-suite)
# ----------------------------------------------------------------------

def polar_round_trip_error(w: WaveField) -> float:
    """Relative max error of ``from_polar(to_polar(psi))`` off the node mask, global phase removed."""
    p = to_polar(w)
    back = from_polar(p, w.params).psi
    keep = ~p.node_mask
    overlap = np.sum(np.conj(back[keep]) * w.psi[keep])
    back = back * np.exp(1j * np.angle(overlap))
    return _rel(back, w.psi, keep, np.abs(w.psi).max())


def momentum_identity_error(w: WaveField) -> float:
    """``max_a |<P>_a - <P_cl>_a|``."""
    return float(np.max(np.abs(momentum_expectation(w, 0.0) - momentum_expectation(w, 1.0))))


def lambda_independence_error(w: WaveField, lambdas=LAMBDA_GRID) -> float:
    ref = momentum_expectation(w, 0.0)
    return float(max(np.max(np.abs(momentum_expectation(w, lam) - ref)) for lam in lambdas))


def kinetic_expectation(w: WaveField, lam: float) -> complex:
    return complex(w.grid.integrate(np.conj(w.psi) * apply_deformed_kinetic(w, lam)))


def classical_kinetic_integral(w: WaveField) -> float:
    """``T_cl = sum_a integrate(rho (d_a S)^2) / (2 m_a)``."""
    grid = w.grid
    mask = w.node_mask()
    rho = np.where(mask, 0.0, w.rho)
    return float(sum(grid.integrate(rho * g * g) / (2 * m)
                     for g, m in zip(classical_momentum_field(w), grid.masses)))


@dataclass(frozen=True)
class LambdaFit:
    lambdas: tuple
    values: tuple
    coefficients: tuple          # (c0, c1, c2) of c0 + c1 (1-lam) + c2 (1-lam)^2
    fit_residual: float
    t_classical: float
    weizsacker: float
    max_imag: float

    @property
    def model_error(self) -> float:
        """Distance of the fit from ``T_cl + (1-lam)^2 W``."""
        c0, c1, c2 = self.coefficients
        return max(abs(c0 - self.t_classical), abs(c1), abs(c2 - self.weizsacker))


def lambda_quadratic_fit(w: WaveField, lambdas=LAMBDA_GRID) -> LambdaFit:
    vals = [kinetic_expectation(w, lam) for lam in lambdas]
    real = np.array([v.real for v in vals])
    u = 1.0 - np.asarray(lambdas)
    basis = np.stack([np.ones_like(u), u, u * u], axis=1)
    coef, *_ = np.linalg.lstsq(basis, real, rcond=None)
    resid = float(np.max(np.abs(basis @ coef - real)))
    return LambdaFit(tuple(lambdas), tuple(real), tuple(float(c) for c in coef), resid,
                     classical_kinetic_integral(w), weizsacker(w.grid, w.rho, w.hbar),
                     float(max(abs(v.imag) for v in vals)))


def kinetic_endpoint_errors(w: WaveField) -> tuple[float, float]:
    """Relative deviation of ``K_0 psi`` from ``K psi`` and of ``K_1 psi`` from ``(K - Q) psi``."""
    grid, hb = w.grid, w.hbar
    keep = ~w.node_mask()
    K_psi = grid.kinetic(w.psi, hb)
    scale = max(np.abs(K_psi[keep]).max(), np.finfo(float).tiny)
    e0 = _rel(apply_deformed_kinetic(w, 0.0), K_psi, keep, scale)
    Q = quantum_potential(to_polar(w))
    e1 = _rel(apply_deformed_kinetic(w, 1.0), K_psi - Q * w.psi, keep, scale)
    return e0, e1


def witten_error(w: WaveField, operand: np.ndarray, lambdas=(0.0, 0.5, 1.0)) -> float:
    """Largest relative gap between ``-i hbar d_lam`` and ``P_lam`` on ``operand``."""
    worst = 0.0
    for lam in lambdas:
        P = DeformedMomentum.from_wavefield(w, lam)
        direct = P.apply(operand)
        witten = witten_deformed_gradient(w.grid, operand, w.rho, lam)
        keep = ~P.mask
        for d, wt in zip(direct, witten):
            scale = max(np.abs(d[keep]).max(), np.finfo(float).tiny)
            worst = max(worst, _rel(-1j * w.hbar * wt, d, keep, scale))
    return worst


def q_weizsacker_gap(w: WaveField) -> float:
    p = to_polar(w)
    Q = quantum_potential(p)
    norm2 = w.grid.integrate(w.rho)
    return abs(w.grid.integrate(w.rho * Q) - weizsacker(w.grid, w.rho, w.hbar)) / norm2


def q_separability_error(w: WaveField) -> float:
    """For a product density, ``Q(x1, x2, ..)`` is a sum of single-axis functions; return the mixed-difference defect."""
    Q = quantum_potential(to_polar(w))
    mask = w.node_mask()
    anchor = np.unravel_index(np.argmax(w.rho), w.rho.shape)
    model = np.full(Q.shape, -(w.grid.rank - 1) * Q[anchor])
    for a in range(w.grid.rank):
        index = list(anchor)
        index[a] = slice(None)
        line = Q[tuple(index)]
        shape = [1] * w.grid.rank
        shape[a] = -1
        model = model + line.reshape(shape)
    scale = max(np.abs(Q[~mask]).max(), 1.0)
    return _rel(Q, model, ~mask, scale)


# ----------------------------------------------------------------------
# the suite
# ----------------------------------------------------------------------

def run_suite(w: WaveField, *, witten_operand: WaveField | None = None, dt: float = 1e-3,
              steps: int = 20, product_state: bool = False) -> list[CheckResult]:
    """Check every static identity on ``w`` plus a short linear propagation.

    The literal Witten derivative multiplies by ``rho^(-lam/2)``, which is only
    well conditioned when the density varies over a moderate range; it is
    checked on ``witten_operand`` (a node-free state on the same grid) when
    given, otherwise on ``w``.
    """
    out: list[CheckResult] = []
    out.append(_result("normalization", abs(w.norm - 1.0), 1e-12))
    out.append(_result("polar_round_trip", polar_round_trip_error(w), 1e-8))
    out.append(_result("momentum_expectation_identity", momentum_identity_error(w), 1e-10))
    out.append(_result("momentum_lambda_independence", lambda_independence_error(w), 1e-10))
    out.append(_result("factorization_residual", factorization_residual(w), 1e-7))
    e0, e1 = kinetic_endpoint_errors(w)
    out.append(_result("kinetic_lambda0_matches_K", e0, 1e-8))
    out.append(_result("kinetic_lambda1_matches_K_minus_Q", e1, 1e-8))
    fit = lambda_quadratic_fit(w)
    out.append(_result("kinetic_lambda_quadratic_fit", fit.fit_residual, 1e-9))
    out.append(_result("kinetic_lambda_model", fit.model_error, 1e-8, "T_cl + (1-lam)^2 W"))
    out.append(_result("kinetic_lambda_real", fit.max_imag, 1e-10))
    out.append(_result("q_mean_equals_weizsacker", q_weizsacker_gap(w), 1e-8))
    out.append(_result("kinetic_decomposition", abs(kinetic_decomposition(w).defect), 1e-8))
    wt = witten_operand or w
    out.append(_result("witten_matches_deformed_momentum", witten_error(wt, wt.psi), 1e-8,
                       "system state" if witten_operand is None else "auxiliary node-free state"))
    if product_state:
        out.append(_result("q_separable", q_separability_error(w), 1e-8))
    traj = evolve_linear(w, dt, steps, 1)
    out.append(_result("linear_norm_drift", traj.norm_drift, 1e-10))
    out.append(_result("continuity_residual", float(np.nanmax(continuity_series(traj))), 1e-4))
    return out
