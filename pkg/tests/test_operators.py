import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dqm.checks import (kinetic_endpoint_errors, lambda_independence_error, lambda_quadratic_fit,
                        momentum_identity_error, witten_error)
from dqm.grid import make_grid
from dqm.operators import (DeformedMomentum, apply_deformed_kinetic, apply_deformed_momentum,
                           classical_momentum_field, factorization_residual, momentum_expectation,
                           quantum_potential, witten_deformed_gradient)
from dqm.scenarios import random_node_free_state
from dqm.wavefield import NodeError, PolarField, WaveField, normalize, to_polar

from helpers import gaussian, plane_wave, random_grids


def off_mask_max(field, w):
    keep = ~w.node_mask()
    return float(np.max(np.abs(field[keep])))


def harmonic_ground_state(grid, omega=1.0, mass=1.0, hbar=1.0):
    x = grid.coords[0]
    return normalize(WaveField(grid, np.exp(-mass * omega * x * x / (2 * hbar)) + 0j))


# ----------------------------------------------------------------------
# quantum potential
# ----------------------------------------------------------------------

def test_q_uniform_density_is_zero():
    g = make_grid([10.0], [64])
    p = to_polar(plane_wave(g, 2 * np.pi * 3 / 10))
    assert np.max(np.abs(quantum_potential(p))) < 1e-12


def test_q_gaussian_oracle():
    g = make_grid([40.0], [512])
    w = gaussian(g, 0.0, 0.0, 1.0)            # rho ~ exp(-x^2/2)
    Q = quantum_potential(to_polar(w))
    x = np.broadcast_to(g.coords[0], g.shape)
    centre = np.argmin(np.abs(x))
    assert abs(Q[centre] - 0.25) < 1e-10
    exact = 0.25 * (1 - x * x / 2)
    # relative to |Q|: near the mask edge Q is large and sqrt(rho) ~ 1e-6 amplifies roundoff
    assert off_mask_max((Q - exact) / (1 + np.abs(exact)), w) < 1e-8


def test_q_harmonic_ground_state_is_stationary():
    g = make_grid([20.0], [128])
    w = harmonic_ground_state(g)
    Q = quantum_potential(to_polar(w))
    x = g.coords[0]
    assert off_mask_max(Q + 0.5 * x * x - 0.5, w) < 1e-8


def test_q_scales_with_mass_and_hbar():
    g = make_grid([40.0], [512], [2.0])
    w = gaussian(g, 0.0, 0.0, 1.0, hbar=0.5)
    Q = quantum_potential(to_polar(w))
    x = g.coords[0]
    expected = 0.5 ** 2 / (2 * 2.0) * 0.5 * (1 - x * x / 2)      # hbar^2/(2m) * (1/2 - x^2/4)
    assert off_mask_max((Q - expected) / (1 + np.abs(expected)), w) < 1e-8


def test_q_zero_on_mask():
    g = make_grid([40.0], [512])
    w = gaussian(g, 0.0, 0.0, 0.5)
    p = to_polar(w)
    assert p.node_mask.any()
    assert np.all(quantum_potential(p)[p.node_mask] == 0.0)


def test_q_rejects_mostly_nodes():
    g = make_grid([10.0], [64])
    rho = np.zeros(g.shape)
    rho[::4] = 1.0
    mask = rho == 0
    with pytest.raises(NodeError):
        quantum_potential(PolarField(g, rho, g.zeros(), mask))


# ----------------------------------------------------------------------
# classical momentum field
# ----------------------------------------------------------------------

def test_pcl_plane_wave_constant():
    g = make_grid([2 * np.pi * 2], [64])
    (f,) = classical_momentum_field(plane_wave(g, 1.5))
    assert np.max(np.abs(f - 1.5)) < 1e-12


def test_pcl_real_state_zero():
    g = make_grid([20.0], [128])
    w = harmonic_ground_state(g)
    (f,) = classical_momentum_field(w)
    # only spectral roundoff remains, divided by psi in the tail
    assert off_mask_max(f, w) < 1e-8
    centre = np.abs(g.coords[0]) < 3
    assert np.max(np.abs(f[centre])) < 1e-13


def test_pcl_gaussian_packet():
    g = make_grid([40.0], [512])
    w = gaussian(g, 0.5, 2.0, 1.0)
    (f,) = classical_momentum_field(w)
    assert off_mask_max(f - 2.0, w) < 1e-8


def test_pcl_matches_phase_gradient():
    g = random_grids()[1]
    w = random_node_free_state(g, 11)
    S = to_polar(w).phase
    for f, dS in zip(classical_momentum_field(w), g.gradient(S)):
        assert np.max(np.abs(f - dS)) < 1e-8 * max(1.0, np.max(np.abs(f)))


# ----------------------------------------------------------------------
# deformed momentum
# ----------------------------------------------------------------------

def test_lambda_zero_is_plain_momentum():
    g = random_grids()[1]
    w = random_node_free_state(g, 2)
    other = random_node_free_state(g, 3).psi
    P0 = DeformedMomentum.from_wavefield(w, 0.0)
    for operand in (w.psi, other):
        for c, d in zip(apply_deformed_momentum(P0, operand), g.gradient(operand)):
            assert np.array_equal(c, -1j * w.hbar * d)


def test_lambda_one_plane_wave():
    g = make_grid([2 * np.pi * 3], [96])
    w = plane_wave(g, 2.0)
    (c,) = DeformedMomentum.from_wavefield(w, 1.0).apply()
    assert np.max(np.abs(c - 2.0 * w.psi)) < 1e-12


def test_lambda_one_gaussian_on_system_state():
    g = make_grid([40.0], [512])
    w = gaussian(g, 0.0, 2.0, 1.0)
    (c,) = DeformedMomentum.from_wavefield(w, 1.0).apply()
    assert off_mask_max(c - 2.0 * w.psi, w) < 1e-8


def test_density_is_bound_to_system_state():
    """Acting on another function still uses the system density."""
    g = make_grid([40.0], [512])
    w = gaussian(g, 0.0, 0.0, 1.0)
    P = DeformedMomentum.from_wavefield(w, 1.0)
    x = g.coords[0]
    operand = np.exp(1j * 2 * np.pi * 5 * x / 40)        # uniform-density operand
    (c,) = P.apply(operand)
    k = 2 * np.pi * 5 / 40
    expected = (k + 1j * 0.5 * (-x)) * operand            # grad(rho)/rho = -x for this rho
    assert off_mask_max(c - expected, w) < 1e-8


def test_dagger_flips_density_term():
    g = make_grid([40.0], [512])
    w = gaussian(g, 0.0, 1.0, 1.0)
    P = DeformedMomentum.from_wavefield(w, 0.7)
    Pd = P.adjoint()
    assert Pd.dagger and not P.dagger
    (a,) = P.apply(masked=False)
    (b,) = Pd.apply(masked=False)
    (p,) = DeformedMomentum.from_wavefield(w, 0.0).apply(masked=False)
    # P_lam + P_lam^dag = 2 P
    assert off_mask_max(a + b - 2 * p, w) < 1e-10


def test_operand_grid_mismatch():
    g = make_grid([10.0], [64])
    P = DeformedMomentum.from_wavefield(plane_wave(g, 0.0), 0.5)
    with pytest.raises(ValueError):
        P.apply(np.ones(32))


def test_system_state_product_form_matches_generic_path():
    g = random_grids()[0]
    w = random_node_free_state(g, 4)
    P = DeformedMomentum.from_wavefield(w, 0.6)
    fast = P.apply()
    generic = P.apply(w.psi.copy())
    for a, b in zip(fast, generic):
        assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(a))


# ----------------------------------------------------------------------
# deformed kinetic
# ----------------------------------------------------------------------

def test_kinetic_lambda_zero_is_standard():
    g = random_grids()[1]
    w = random_node_free_state(g, 5)
    K = g.kinetic(w.psi, w.hbar)
    assert np.max(np.abs(apply_deformed_kinetic(w, 0.0) - K)) < 1e-10 * np.max(np.abs(K))


def test_kinetic_lambda_one_plane_wave():
    g = make_grid([2 * np.pi * 3], [96], [2.0])
    w = plane_wave(g, 2.0)
    assert np.max(np.abs(apply_deformed_kinetic(w, 1.0) - (4.0 / 4.0) * w.psi)) < 1e-12


def test_kinetic_lambda_one_real_ground_state_vanishes():
    g = make_grid([20.0], [128])
    w = harmonic_ground_state(g)
    out = apply_deformed_kinetic(w, 1.0)
    assert off_mask_max(out, w) < 1e-7 * np.max(np.abs(w.psi))


# ----------------------------------------------------------------------
# factorization
# ----------------------------------------------------------------------

def test_factorization_plane_wave():
    assert factorization_residual(plane_wave(make_grid([12 * np.pi], [256]), 2.0)) < 1e-12


def test_factorization_gaussian():
    assert factorization_residual(gaussian(make_grid([40.0], [512]), 0.0, 2.0, 1.0)) < 1e-8


def test_factorization_random_two_particle():
    g = random_grids()[1]
    assert factorization_residual(random_node_free_state(g, 8)) < 1e-7


# ----------------------------------------------------------------------
# Witten-deformed gradient
# ----------------------------------------------------------------------

def test_witten_uniform_density_is_plain_gradient():
    g = make_grid([10.0], [64])
    rho = np.full(g.shape, 0.1)
    f = random_node_free_state(g, 1).psi
    for lam in (0.0, 0.5, 1.0, 2.0):
        (d,) = witten_deformed_gradient(g, f, rho, lam)
        assert np.max(np.abs(d - g.derivative(f, 0))) < 1e-12 * np.max(np.abs(d))


def test_witten_lambda_one_gaussian_system_state():
    g = make_grid([20.0], [256])
    w = gaussian(g, 0.0, 2 * np.pi * 6 / 20, 1.0)      # periodic phase, negligible edge amplitude
    (d,) = witten_deformed_gradient(g, w.psi, w.rho, 1.0)
    (pcl,) = classical_momentum_field(w)
    # -i hbar d_1 psi = P_cl psi = (grad S) psi
    assert off_mask_max(-1j * d - pcl * w.psi, w) < 1e-8


def test_witten_matches_deformed_momentum_random():
    for g in random_grids():
        w = random_node_free_state(g, 21)
        assert witten_error(w, random_node_free_state(g, 22).psi, lambdas=(0.0, 0.3, 0.5, 1.0)) < 1e-8


# ----------------------------------------------------------------------
# properties over random node-free states
# ----------------------------------------------------------------------

GRIDS = random_grids()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), which=st.integers(0, 1))
def test_momentum_expectation_identity(seed, which):
    w = random_node_free_state(GRIDS[which], seed)
    assert momentum_identity_error(w) < 1e-10
    assert lambda_independence_error(w, lambdas=(0.0, 0.5, 1.0, 1.7)) < 1e-10
    assert np.max(np.abs(momentum_expectation(w, 0.3).imag)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), which=st.integers(0, 1))
def test_kinetic_interpolation_endpoints(seed, which):
    w = random_node_free_state(GRIDS[which], seed)
    e0, e1 = kinetic_endpoint_errors(w)
    assert e0 < 1e-8 and e1 < 1e-8


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), which=st.integers(0, 1))
def test_kinetic_quadratic_in_lambda_and_real(seed, which):
    w = random_node_free_state(GRIDS[which], seed)
    fit = lambda_quadratic_fit(w, lambdas=(0.0, 0.5, 1.0))
    assert fit.model_error < 1e-9
    assert fit.max_imag < 1e-10
    wide = lambda_quadratic_fit(w, lambdas=(-0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5))
    assert wide.fit_residual < 1e-9
