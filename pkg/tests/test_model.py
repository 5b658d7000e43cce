import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rhoelastica.discretization import DiscreteState, Grid, residual
from rhoelastica.model import (
    BetaFloor,
    ModelParams,
    beta,
    beta_double_prime,
    beta_prime,
    symmetry_transform,
    trivial_multipliers,
    trivial_state,
)

reals = st.floats(-3.0, 3.0, allow_nan=False)


def test_beta_values():
    assert beta(1.0, ModelParams(1, 1)) == 1.0
    assert beta(2.0, ModelParams(1, 1)) == 2.5
    assert beta_prime(1.0, ModelParams(0, -1)) == 0.0
    assert beta_double_prime(0.3, ModelParams(0.7, -1.5)) == -1.5


def test_beta_accepts_arrays():
    out = beta(np.array([1.0, 2.0]), ModelParams(1, 1))
    np.testing.assert_array_equal(out, [1.0, 2.5])


@given(m=reals, h=reals, rho=st.floats(-3.0, 5.0))
def test_beta_prime_is_derivative(m, h, rho):
    p = ModelParams(m, h)
    eps = 1e-5
    fd = (beta(rho + eps, p) - beta(rho - eps, p)) / (2 * eps)
    assert abs(fd - beta_prime(rho, p)) <= 1e-6
    fd2 = (beta_prime(rho + eps, p) - beta_prime(rho - eps, p)) / (2 * eps)
    assert abs(fd2 - beta_double_prime(rho, p)) <= 1e-6


@pytest.mark.parametrize("m, h, lam", [(1, 1, [-0.5, 0, 0]), (0, -1, [0, 0, 0]), (1, -2, [-0.5, 0, 0])])
def test_trivial_multipliers(m, h, lam):
    np.testing.assert_array_equal(trivial_multipliers(ModelParams(m, h)), lam)


def test_trivial_state_solves_continuous_equations():
    p = ModelParams(0.8, -0.4, 0.3)
    rho_fn, theta_fn, lam = trivial_state(p)
    s = np.linspace(0, 2 * math.pi, 50)
    np.testing.assert_array_equal(rho_fn(s), 1.0)
    np.testing.assert_array_equal(theta_fn(s), s)
    # rho-equation with rho'' = 0, theta' = 1
    assert -0.5 * beta_prime(1.0, p) - lam[0] == 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1, 1, mu=-0.1)
    with pytest.raises(ValueError):
        ModelParams(float("nan"), 1)
    with pytest.raises(ValueError):
        ModelParams(1, 1, L=1.0)
    with pytest.raises(ValueError):
        BetaFloor(0.0)
    assert ModelParams(1, 1).with_mu(0.2).mu == 0.2


def test_symmetry_of_trivial_state():
    grid = Grid(16)
    p = ModelParams(1, 1, 0.4)
    state, q = symmetry_transform(DiscreteState.trivial(grid, p), p)
    assert (q.m, q.h, q.mu) == (-1, 1, 0.4)
    np.testing.assert_array_equal(state.rho, 1.0)
    assert state.lam[0] == 0.5


@given(seed=st.integers(0, 10_000), m=reals, h=reals)
def test_symmetry_is_an_involution_and_preserves_residual(seed, m, h):
    rng = np.random.default_rng(seed)
    grid = Grid(32)
    s = grid.s
    rho = 1 + 0.2 * rng.uniform(-1, 1) * np.cos(2 * s)
    theta = s + 0.1 * rng.uniform(-1, 1) * np.sin(s)
    state = DiscreteState(rho, theta, rng.uniform(-1, 1, 3))
    p = ModelParams(m, h, 0.5)
    once, q = symmetry_transform(state, p)
    twice, r = symmetry_transform(once, q)
    np.testing.assert_allclose(twice.rho, state.rho, atol=1e-15)
    np.testing.assert_array_equal(twice.theta, state.theta)
    np.testing.assert_array_equal(twice.lam, state.lam)
    assert r == p
    # density rows and the mass row change sign, angle rows do not
    before = residual(state, p)
    after = residual(once, q)
    np.testing.assert_allclose(np.abs(after), np.abs(before), atol=1e-9)
