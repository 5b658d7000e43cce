import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from rhoelastica.trig import TrigSeries

coef = st.floats(-2.0, 2.0, allow_nan=False)


@given(k=st.integers(1, 6), amp=coef, phase=st.floats(-3.2, 3.2))
def test_phase_constructors_match_closed_forms(k, amp, phase):
    s = np.linspace(0, 2 * np.pi, 37)
    np.testing.assert_allclose(TrigSeries.cos_phase(k, amp, phase)(s), amp * np.cos(k * s - phase), atol=1e-12)
    np.testing.assert_allclose(TrigSeries.sin_phase(k, amp, phase)(s), amp * np.sin(k * s - phase), atol=1e-12)
    pinned = TrigSeries.pinned_sin(k, amp, phase)
    assert abs(pinned(np.array([0.0]))[0]) <= 1e-12


@given(k=st.integers(0, 5), c=coef, d=coef)
def test_derivatives_are_exact(k, c, d):
    f = TrigSeries(((k, c, d),))
    s = np.linspace(0, 2 * np.pi, 11)
    np.testing.assert_allclose(f(s, 1), -k * c * np.sin(k * s) + k * d * np.cos(k * s), atol=1e-12)
    np.testing.assert_allclose(f(s, 2), -k * k * f(s), atol=1e-11)


def test_arithmetic_and_coefficients():
    a = TrigSeries.cos_phase(2, 1.0) + TrigSeries.constant(0.5)
    b = a * 2.0 - TrigSeries.constant(1.0)
    assert b.coefficient(2) == (2.0, 0.0)
    assert b.mean() == 0.0
    assert (3.0 * a).max_abs_coefficient() == 3.0
    assert TrigSeries.zero().coefficient(4) == (0.0, 0.0)
