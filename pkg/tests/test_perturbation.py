import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rhoelastica.bifurcation import Case, classify
from rhoelastica.discretization import DiscreteState, Grid
from rhoelastica.model import ModelParams
from rhoelastica.perturbation import (
    ResonantDenominatorError,
    SolvabilityError,
    expansion,
    expansion_residual,
    predictor,
    second_order,
    solvability_condition,
    third_order,
)
from rhoelastica.trig import TrigSeries

AMPS = np.array([0.02, 0.04, 0.08, 0.16])


def _order_slope(exp) -> float:
    res = [expansion_residual(exp, A) for A in AMPS]
    return float(np.polyfit(np.log(AMPS), np.log(res), 1)[0])


def test_second_order_examples():
    _, theta2, _ = second_order(Case.CASE1_0, 0, -1, 1, 1.0)
    s = np.linspace(0, 2 * np.pi, 17)
    np.testing.assert_allclose(theta2(s), np.sin(2 * s) / 8, atol=1e-15)
    _, _, lam2 = second_order(Case.CASE0, 1, 1, 2, 1.0)
    assert lam2[0] == pytest.approx(0.25)
    rho2, theta2, lam2 = second_order(Case.CASE0, 1, 1, 2, 0.0, 0.0)
    assert rho2.max_abs_coefficient() == 0 and theta2.max_abs_coefficient() == 0
    assert not lam2.any()


def test_solvability_examples():
    assert solvability_condition(Case.CASE1_0, 0, -1, 1, math.sqrt(8), -1) == pytest.approx(0, abs=1e-12)
    assert solvability_condition(Case.CASE0, 1, 1, 2, math.sqrt(6.4), 1) == pytest.approx(0, abs=1e-12)
    with pytest.raises(SolvabilityError):
        third_order(Case.CASE0, 1, 1, 2, 1.0, sigma=1)
    rho3, theta3, lam3 = third_order(Case.CASE0, 1, 1, 2, 0.0, sigma=1)
    assert rho3.max_abs_coefficient() == 0 and theta3.max_abs_coefficient() == 0 and not lam3.any()


def test_case0_third_harmonic_coefficient():
    a1 = math.sqrt(6.4)
    rho3, _, _ = third_order(Case.CASE0, 1, 1, 2, a1, sigma=1)
    # (a1^3 / 4) (14 - 28 + 14 - 1) / (8 (2 - 1)^2) with the leading minus sign
    assert rho3.coefficient(6)[0] == pytest.approx(a1**3 / 32)


def test_case11_resonance_raises():
    # 4 h + m^2 = 0 is a pole of the third-order angle coefficient; it lies on
    # the j = 3 degenerate parabola, so only the direct call reaches it
    m, h = 2.0, -1.0
    assert classify(m, h, 1).case is Case.CASE2
    with pytest.raises(ResonantDenominatorError):
        third_order(Case.CASE1_1, m, h, 1, math.sqrt(40 / 3), sigma=1)


def test_predictor_examples():
    grid = Grid(64)
    info = classify(1, 1, 2)
    state, mu = predictor(info, ModelParams(1, 1), 0.0, 2, grid)
    np.testing.assert_array_equal(state.rho, 1.0)
    assert mu == 0.125
    state, mu = predictor(info, ModelParams(1, 1), 0.05, 1, grid)
    np.testing.assert_allclose(state.rho, 1 - 0.05 * math.sqrt(6.4) * np.cos(2 * grid.s), atol=1e-15)
    assert mu == pytest.approx(0.125 - 0.0025)
    _, mu = predictor(classify(1, -2, 1), ModelParams(1, -2), 0.1, 2, grid)
    assert mu == pytest.approx(1.01)
    assert isinstance(state, DiscreteState)


def test_large_amplitude_warns():
    with pytest.warns(UserWarning):
        predictor(classify(1, 1, 2), ModelParams(1, 1), 0.5, 2, Grid(16))


@pytest.mark.parametrize("m, h, j", [(1, 1, 2), (1, 1.85, 2), (1, 0.25, 3), (0, -1, 1), (0, -1, 2), (1, -2, 1), (1, -0.5, 1)])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_expansion_residual_order(m, h, j, order):
    exp = expansion(classify(m, h, j), m, h, order=order)
    assert _order_slope(exp) >= order + 0.7


@given(phase=st.floats(-3.0, 3.0), a2=st.floats(-1.0, 1.0), a3=st.floats(-1.0, 1.0))
def test_third_order_holds_at_any_phase_and_free_amplitude(phase, a2, a3):
    for m, h, j in [(1, 1, 2), (0, -1, 1), (1, -2, 1)]:
        exp = expansion(classify(m, h, j), m, h, order=3, a2=a2, a3=a3, phases=(phase, 0.3 * phase, -phase))
        assert _order_slope(exp) >= 3.7


@pytest.mark.parametrize("m, h, j", [(1, 1, 2), (0, -1, 1), (1, -2, 1), (1, -0.5, 1)])
def test_constraint_consistency_per_order(m, h, j):
    exp = expansion(classify(m, h, j), m, h, order=3, phases=(0.4, 0.1, -0.2))
    s = np.arange(1024) * (2 * np.pi / 1024)
    w = 2 * np.pi / 1024
    for rho_l, theta_l in zip(exp.rho, exp.theta):
        assert abs(rho_l.mean()) <= 1e-12
        assert abs(theta_l(np.array([0.0]))[0]) <= 1e-12
        assert abs(w * np.dot(theta_l(s), np.cos(s))) <= 1e-12
        assert abs(w * np.dot(theta_l(s), np.sin(s))) <= 1e-12
