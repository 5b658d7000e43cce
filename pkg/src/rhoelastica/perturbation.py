"""Second- and third-order corrections along a bifurcating branch.

Along a branch the solution is expanded as
``u(A) = u0 + A u1 + A^2 u2 + A^3 u3`` with ``mu(A) = mu0 - sigma A^2``.
Higher free amplitudes (``a2``, ``a3`` or ``b2``, ``b3``) and all phases
default to zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bifurcation import BifurcationInfo, Case, DegenerateModeError, Z, amplitude_squared, first_order_series
from .discretization import DiscreteState, Grid
from .model import ModelParams, beta, beta_prime, trivial_multipliers
from .trig import TrigSeries

SOLVABILITY_TOL = 1e-10


class ResonantDenominatorError(ZeroDivisionError):
    """A correction coefficient has a vanishing denominator."""


class SolvabilityError(ValueError):
    """The third-order system has no solution for the given amplitude and sigma."""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"third-order solvability violated: condition = {condition:.3e}")


def _nonzero(value: float, what: str) -> float:
    if value == 0.0:
        raise ResonantDenominatorError(f"resonant denominator: {what} = 0")
    return value


def _cos(k, amp, phase=0.0):
    return TrigSeries.cos_phase(k, amp, phase)


def _psin(k, amp, phase=0.0):
    return TrigSeries.pinned_sin(k, amp, phase)


def second_order(case: Case, m: float, h: float, j: int, a1: float, a2: float = 0.0,
                 s1: float = 0.0, s2: float = 0.0):
    """Order-2 fields ``(rho2, theta2, (lambda_M2, lambda_x2, lambda_y2))``.

    For Case 1.1 the amplitudes and phases are the mode-1 ones (``b1``, ``b2``).
    """
    if case is Case.CASE0:
        d = _nonzero(2 * m * m - h, "2 m^2 - h")
        rho2 = _cos(j, -a2, s2) + _cos(2 * j, -a1 * a1 * m * (m * m - h) / (2 * d), 2 * s1)
        theta2 = _psin(j, m * a2 / j, s2) + _psin(
            2 * j, a1 * a1 * (6 * m**4 - 6 * m * m * h + h * h) / (8 * j * d), 2 * s1
        )
        lam2 = np.array([-a1 * a1 * m * (m * m - 2 * h) / 4.0, 0.0, 0.0])
        return rho2, theta2, lam2
    if case is Case.CASE1_0:
        rho2 = _cos(j, -a2, s2)
        theta2 = _psin(2 * j, -a1 * a1 * h / (8 * j), 2 * s1)
        return rho2, theta2, np.zeros(3)
    if case is Case.CASE1_1:
        d = _nonzero(2 * m * m + 3 * h, "2 m^2 + 3 h")
        rho2 = _cos(1, -a2, s2) + _cos(2, -a1 * a1 * m * h / (2 * d), 2 * s1)
        theta2 = _psin(2, -3 * a1 * a1 * h * h / (8 * d), 2 * s1)
        lam2 = np.array([0.0, -a2 * m * math.cos(s2), -a2 * m * math.sin(s2)])
        return rho2, theta2, lam2
    raise DegenerateModeError(f"no second-order correction for case {case.value}")


def solvability_condition(case: Case, m: float, h: float, j: int, a1: float, sigma: int) -> float:
    """Left-hand side of the third-order solvability condition."""
    if case is Case.CASE0:
        d = _nonzero(2 * m * m - h, "2 m^2 - h")
        return a1 * (j * j * sigma - a1 * a1 * Z(m, h) / (8 * d))
    if case is Case.CASE1_0:
        return a1 * (j * j * sigma + a1 * a1 * h * h / 8.0)
    if case is Case.CASE1_1:
        d = _nonzero(2 * m * m + 3 * h, "2 m^2 + 3 h")
        return a1 * (sigma + a1 * a1 * 3 * h**3 / (8 * d))
    raise DegenerateModeError(f"no third-order correction for case {case.value}")


def third_order(case: Case, m: float, h: float, j: int, a1: float, a2: float = 0.0, a3: float = 0.0,
                s1: float = 0.0, s2: float = 0.0, s3: float = 0.0, sigma: int = 1):
    """Order-3 fields ``(rho3, theta3, lambdas3)``; checks solvability first."""
    if a1 != 0.0:
        cond = solvability_condition(case, m, h, j, a1, sigma)
        # tolerance applies to the bracketed factor, not to a1 itself
        if abs(cond / a1) > SOLVABILITY_TOL:
            raise SolvabilityError(cond)
    if case is Case.CASE0:
        d = _nonzero(2 * m * m - h, "2 m^2 - h")
        m2 = m * m
        rho3 = (
            _cos(j, -a3, s3)
            + _cos(2 * j, -a1 * a2 * m * (m2 - h) / d, s1 + s2)
            + _cos(3 * j, -(a1**3 / 4.0) * (14 * m2**3 - 28 * m2 * m2 * h + 14 * m2 * h * h - h**3) / (8 * d * d), 3 * s1)
        )
        theta3 = (
            _psin(j, m * a3 / j, s3)
            + _psin(j, a1**3 * m * (2 * m2 - 3 * h) / (4 * j), s1)
            + _psin(2 * j, a1 * a2 * (6 * m2 * (m2 - h) + h * h) / (4 * j * d), s1 + s2)
            + _psin(
                3 * j,
                a1**3 * m * (78 * m2**3 - 156 * m2 * m2 * h + 94 * m2 * h * h - 17 * h**3) / (96 * j * d * d),
                3 * s1,
            )
        )
        lam3 = np.array([-a1 * a2 * m * (m2 - 2 * h) * math.cos(s1 - s2) / 2.0, 0.0, 0.0])
        return rho3, theta3, lam3
    if case is Case.CASE1_0:
        rho3 = _cos(j, -a3, s3) + _cos(3 * j, a1**3 * h / 32.0, 3 * s1)
        theta3 = _psin(2 * j, -a1 * a2 * h / (4 * j), s1 + s2)
        return rho3, theta3, np.zeros(3)
    if case is Case.CASE1_1:
        d = _nonzero(2 * m * m + 3 * h, "2 m^2 + 3 h")
        q = _nonzero(4 * h + m * m, "4 h + m^2")
        c1 = -a1**3 * h * h / (16 * d)
        rho3 = (
            _cos(1, -a3, s3)
            + _cos(1, 7 * c1, s1)
            # phase-dependent part of the first harmonic; with this sign the
            # multipliers carry no a1^3 term at any phase s1
            + TrigSeries.sin_phase(1, 6 * c1 * math.sin(2 * s1), s1)
            + _cos(2, -a1 * a2 * m * h / d, s1 + s2)
            + _cos(3, -3 * a1**3 * h * h * (3 * m * m - 2 * h) / (16 * d * q), 3 * s1)
        )
        theta3 = _psin(2, -3 * a1 * a2 * h * h / (4 * d), s1 + s2) + _psin(
            3, -7 * a1**3 * h**3 * m / (8 * d * q), 3 * s1
        )
        lam3 = np.array([0.0, -a3 * m * math.cos(s3), -a3 * m * math.sin(s3)])
        return rho3, theta3, lam3
    raise DegenerateModeError(f"no third-order correction for case {case.value}")


@dataclass
class PerturbativeExpansion:
    """Coefficient fields of the branch expansion up to ``order``.

    ``rho[l - 1]`` and ``theta[l - 1]`` hold the order-``l`` corrections as
    trigonometric series (``theta`` is the deviation from the circle angle
    ``s``); ``lam[l - 1]`` the multiplier corrections.
    """

    info: BifurcationInfo
    m: float
    h: float
    order: int
    sigma: int
    amplitudes: tuple
    phases: tuple
    rho: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    lam: list = field(default_factory=list)

    def mu(self, A: float) -> float:
        return self.info.mu0 - self.sigma * A * A

    def density_series(self, A: float) -> TrigSeries:
        out = TrigSeries.constant(1.0)
        for l, r in enumerate(self.rho, start=1):
            out = out + r * A**l
        return out

    def angle_series(self, A: float) -> TrigSeries:
        """Deviation ``theta(s) - s`` at amplitude ``A``."""
        out = TrigSeries.zero()
        for l, t in enumerate(self.theta, start=1):
            out = out + t * A**l
        return out

    def multipliers(self, A: float) -> np.ndarray:
        lam = trivial_multipliers(ModelParams(self.m, self.h, max(self.mu(A), 0.0)))
        for l, dl in enumerate(self.lam, start=1):
            lam = lam + dl * A**l
        return lam


def expansion(info: BifurcationInfo, m: float, h: float, order: int = 2, a1: float | None = None,
              a2: float = 0.0, a3: float = 0.0, phases=(0.0, 0.0, 0.0), sigma: int | None = None
              ) -> PerturbativeExpansion:
    """Assemble the order-``order`` expansion for a non-degenerate case."""
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    if info.case not in (Case.CASE0, Case.CASE1_0, Case.CASE1_1):
        raise DegenerateModeError(f"cannot expand case {info.case.value}")
    sig, amp_sq = amplitude_squared(info, m, h)
    if sigma is None:
        sigma = sig
    if a1 is None:
        a1 = math.sqrt(amp_sq)
    s1, s2, s3 = phases
    j = info.j
    rho1, theta1, lam1 = first_order_series(info, m, a1, s1)
    rhos, thetas, lams = [rho1], [theta1], [lam1]
    if order >= 2:
        r, t, l = second_order(info.case, m, h, j, a1, a2, s1, s2)
        rhos.append(r)
        thetas.append(t)
        lams.append(l)
    if order >= 3:
        r, t, l = third_order(info.case, m, h, j, a1, a2, a3, s1, s2, s3, sigma)
        rhos.append(r)
        thetas.append(t)
        lams.append(l)
    return PerturbativeExpansion(info, m, h, order, int(sigma), (a1, a2, a3)[:order], tuple(phases)[:order],
                                 rhos, thetas, lams)


def predictor(info: BifurcationInfo, params: ModelParams, A: float, order: int, grid: Grid,
              **kwargs) -> tuple[DiscreteState, float]:
    """Sample ``u0 + sum A^l u_l`` on ``grid`` and return it with ``mu0 - sigma A^2``."""
    exp = expansion(info, params.m, params.h, order=order, **kwargs)
    if abs(A) * exp.amplitudes[0] > 0.5:
        warnings.warn(
            f"predictor amplitude A = {A} gives a density deviation {abs(A) * exp.amplitudes[0]:.2f}; "
            "the expansion is only local",
            stacklevel=2,
        )
    return sample_expansion(exp, A, grid), exp.mu(A)


def sample_expansion(exp: PerturbativeExpansion, A: float, grid: Grid) -> DiscreteState:
    s = grid.s
    rho = exp.density_series(A)(s)
    theta = s + exp.angle_series(A)(s)
    theta[0] = 0.0
    return DiscreteState(rho, theta, exp.multipliers(A))


def continuous_residual(rho: TrigSeries, phi: TrigSeries, lam, params: ModelParams, n_quad: int = 1024):
    """Pointwise Euler-Lagrange residuals of a smooth candidate.

    ``rho`` is the density and ``phi`` the angle deviation (``theta = s + phi``),
    both as exact trigonometric series. Returns ``(r_rho, r_theta, constraints)``
    on ``n_quad`` equispaced points; integrals use the periodic trapezoid rule,
    which is spectrally accurate here.
    """
    s = np.arange(n_quad) * (2 * np.pi / n_quad)
    lam_m, lam_x, lam_y = lam
    r = rho(s)
    dr = rho(s, 1)
    ddr = rho(s, 2)
    th = s + phi(s)
    dth = 1.0 + phi(s, 1)
    ddth = phi(s, 2)
    r_rho = params.mu * ddr - 0.5 * beta_prime(r, params) * dth**2 - lam_m
    r_theta = beta_prime(r, params) * dr * dth + beta(r, params) * ddth + lam_x * np.sin(th) - lam_y * np.cos(th)
    w = 2 * np.pi / n_quad
    cons = np.array([w * r.sum() - 2 * np.pi, w * np.cos(th).sum(), w * np.sin(th).sum()])
    return r_rho, r_theta, cons


def expansion_residual(exp: PerturbativeExpansion, A: float, n_quad: int = 1024) -> float:
    """Max-norm of the continuous residual of the truncated expansion at ``A``."""
    params = ModelParams(exp.m, exp.h, max(exp.mu(A), 0.0))
    r1, r2, c = continuous_residual(exp.density_series(A), exp.angle_series(A), exp.multipliers(A), params, n_quad)
    return float(max(np.abs(r1).max(), np.abs(r2).max(), np.abs(c).max()))
