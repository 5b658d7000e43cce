import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from rhoelastica.bifurcation import amplitude_squared, classify, first_bifurcating_case
from rhoelastica.config import PRESETS
from rhoelastica.discretization import DiscreteState, Grid, constraint_violation, discrete_energy, jacobian
from rhoelastica.model import ModelParams
from rhoelastica.perturbation import predictor
from rhoelastica.solver import (
    Factorization,
    JacobianMismatchError,
    NewtonOptions,
    SingularSystemError,
    SolveResult,
    det_sign,
    newton_solve,
    phase_condition_from,
)
from rhoelastica.verify import faulty_jacobian


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 10))
def test_trivial_start_is_a_root(m, h, mu):
    p = ModelParams(m, h, mu)
    trivial = DiscreteState.trivial(Grid(32), p)
    res = newton_solve(trivial, p)
    assert res.converged and res.iters <= 1
    assert np.abs(res.state.pack() - trivial.pack()).max() <= 1e-12


def test_predictor_start_reaches_nontrivial_state():
    info = classify(1.0, 1.0, 2)
    p = ModelParams(1.0, 1.0, 1.0)
    guess, _ = predictor(info, p, 0.05, 1, Grid(256))
    p = p.with_mu(0.1225)
    res = newton_solve(guess, p, phase=phase_condition_from(guess.rho))
    assert res.converged
    assert np.ptp(res.state.rho) > 0.1
    assert discrete_energy(res.state, p) < math.pi


def test_large_mu_returns_to_circle():
    rng = np.random.default_rng(11)
    p = ModelParams(1.0, 1.0, 10.0)
    grid = Grid(128)
    base = DiscreteState.trivial(grid, p).pack()
    res = newton_solve(DiscreteState.unpack(base + rng.uniform(-0.1, 0.1, base.size), grid.n), p)
    assert res.converged
    assert np.abs(res.state.rho - 1).max() <= 1e-9
    assert np.abs(res.state.theta - grid.s).max() <= 1e-9


def test_quadratic_convergence_stable_under_refinement():
    info = classify(1.0, 1.0, 2)
    constants = []
    for n in (128, 256):
        p = ModelParams(1.0, 1.0, 1.0)
        guess, mu = predictor(info, p, 0.05, 2, Grid(n))
        res = newton_solve(guess, p.with_mu(mu), NewtonOptions(tol_residual=1e-11),
                           phase=phase_condition_from(guess.rho))
        assert res.converged
        hist = [r for r in res.residual_history[:-1] if r <= 1e-3]
        # steps that land below ~1e-10 are dominated by roundoff
        tail = [hist[k + 1] / hist[k] ** 2 for k in range(len(hist) - 1) if hist[k + 1] > 1e-10]
        assert tail, hist
        constants.append(tail[-1])
    assert max(constants) / min(constants) < 10.0


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_full_steps_converge_from_small_predictor(name):
    m, h = PRESETS[name]
    info = first_bifurcating_case(m, h)
    _, amp_sq = amplitude_squared(info, m, h)
    A = 0.05 * math.sqrt(amp_sq)
    p = ModelParams(m, h, 1.0)
    guess, mu = predictor(info, p, A, 2, Grid(256))
    opts = NewtonOptions(max_iters=10, force_full_step=True)
    res = newton_solve(guess, p.with_mu(mu), opts, phase=phase_condition_from(guess.rho))
    assert res.converged, res.residual_history
    assert np.abs(constraint_violation(res.state, p.with_mu(mu))).max() <= opts.tol_residual


def test_fd_check_catches_wrong_jacobian():
    p = ModelParams(1.0, 1.0, 0.5)
    guess = DiscreteState.trivial(Grid(16), p)
    guess.rho += 0.01 * np.cos(2 * guess.grid.s)
    opts = NewtonOptions(fd_check=True)
    with pytest.raises(JacobianMismatchError):
        newton_solve(guess, p, opts, jacobian_fn=faulty_jacobian(3, 3, 0.5))
    assert newton_solve(guess, p, opts).converged


def test_singular_matrix_is_flagged():
    with pytest.raises(SingularSystemError):
        Factorization(sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]])))
    with pytest.raises(SingularSystemError):
        Factorization(sp.csc_matrix((3, 3)))


@given(st.integers(0, 1000))
def test_det_sign_matches_dense_determinant(seed):
    a = np.random.default_rng(seed).normal(size=(7, 7))
    assert Factorization(sp.csc_matrix(a)).det_sign == int(np.sign(np.linalg.det(a)))


def test_trivial_det_sign_flips_once_at_critical_value():
    p = ModelParams(1.0, 1.0, 1.0)
    grid = Grid(256)
    state = DiscreteState.trivial(grid, p)
    phase = phase_condition_from(np.ones(grid.n), direction=np.sin(2 * grid.s))
    mus = np.linspace(0.116, 0.136, 9)
    signs = [det_sign(state, p.with_mu(mu), phase) for mu in mus]
    flips = [k for k in range(len(signs) - 1) if signs[k] != signs[k + 1]]
    assert len(flips) == 1 and mus[flips[0]] < 0.125 < mus[flips[0] + 1]


def test_jacobian_size():
    assert jacobian(DiscreteState.trivial(Grid(8), ModelParams(1, 1, 1)), ModelParams(1, 1, 1)).shape == (18, 18)


@pytest.mark.parametrize("kwargs", [
    {"tol_residual": 0.0}, {"min_eta": 0.0}, {"min_eta": 2.0},
    {"backtrack_factor": 1.0}, {"max_iters": -1},
])
def test_options_are_validated(kwargs):
    with pytest.raises(ValueError):
        NewtonOptions(**kwargs)


def test_result_record_is_json_ready():
    p = ModelParams(1.0, 1.0, 1.0)
    res = newton_solve(DiscreteState.trivial(Grid(8), p), p)
    assert isinstance(res, SolveResult)
    assert '"converged": true' in res.to_json()
