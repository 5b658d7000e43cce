"""Closed-form catalogue of bifurcations from the uniform circle.

For the quadratic stiffness the linearization at the circle has a nonzero
kernel only in four regimes, labelled here by :class:`Case`:

* ``CASE0``   shape/density coupled mode ``j >= 2`` (``m != 0``, ``h < 2 m^2``)
* ``CASE1_0`` pure density mode on the circle (``m == 0``, ``h < 0``)
* ``CASE1_1`` density mode 1 balanced by the closedness multipliers (``m != 0``, ``h < 0``)
* ``CASE2``   degenerate coincidence of the two previous families

Mode indices are canonicalized to ``j >= 1``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .discretization import Grid
from .model import ModelParams
from .trig import TrigSeries

# relative tolerance used to decide that a point sits on a Case 2 parabola
CASE2_RTOL = 1e-12


class Case(str, enum.Enum):
    CASE0 = "Case0"
    CASE1_0 = "Case1_0"
    CASE1_1 = "Case1_1"
    CASE2 = "Case2"
    NONE = "None"


class DegenerateModeError(ValueError):
    """The requested first-order mode has no well-defined amplitude."""


@dataclass(frozen=True)
class BifurcationInfo:
    case: Case
    j: int
    mu0: float = math.nan
    sigma: int = 0
    amp_sq: float = math.nan
    e4: float = math.nan

    @property
    def supercritical(self) -> bool:
        return self.sigma == 1

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["case"] = self.case.value
        for key in ("mu0", "amp_sq", "e4"):
            if not math.isfinite(rec[key]):
                rec[key] = None
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec: dict) -> "BifurcationInfo":
        def num(v):
            return math.nan if v is None else float(v)

        return cls(Case(rec["case"]), int(rec["j"]), num(rec["mu0"]), int(rec["sigma"]), num(rec["amp_sq"]), num(rec["e4"]))


def Z(m: float, h: float) -> float:
    """Sextic deciding the criticality of the coupled (Case 0) pitchfork."""
    m2 = m * m
    return -14.0 * m2**3 + 36.0 * m2 * m2 * h - 18.0 * m2 * h * h + h**3


def _criticality_cubic(z: float) -> float:
    return z**3 - 18.0 * z**2 + 36.0 * z - 14.0


@lru_cache(maxsize=None)
def criticality_roots() -> tuple[float, float]:
    """Roots ``z1 < z2`` in ``(0, 2)`` of ``z^3 - 18 z^2 + 36 z - 14``.

    ``Z(m, z m^2) = m^6 (z^3 - 18 z^2 + 36 z - 14)``, so the coupled pitchfork
    is supercritical exactly for ``z1 m^2 < h < z2 m^2``.
    """
    z1 = brentq(_criticality_cubic, 0.4, 0.6, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    z2 = brentq(_criticality_cubic, 1.6, 1.8, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return z1, z2


def on_case2_parabola(m: float, h: float, j: int) -> bool:
    if m == 0 or j < 2:
        return False
    target = -2.0 * m * m / (j * j - 1)
    return abs(h - target) <= CASE2_RTOL * max(1.0, abs(target))


def _case2_partner(m: float, h: float, j_max: int = 4096) -> int | None:
    """Mode ``k >= 2`` whose coupled critical value coincides with ``-h/2``."""
    if m == 0 or h >= 0:
        return None
    # h = -2 m^2 / (k^2 - 1)  <=>  k^2 = 1 - 2 m^2 / h
    k = int(round(math.sqrt(1.0 - 2.0 * m * m / h)))
    for cand in (k - 1, k, k + 1):
        if 2 <= cand <= j_max and on_case2_parabola(m, h, cand):
            return cand
    return None


def _complete(info: BifurcationInfo, m: float, h: float) -> BifurcationInfo:
    if info.case in (Case.NONE, Case.CASE2):
        return info
    try:
        sigma, amp_sq = amplitude_squared(info, m, h)
        e4_val = e4(info, m, h)
    except DegenerateModeError:
        return info
    return BifurcationInfo(info.case, info.j, info.mu0, sigma, amp_sq, e4_val)


def classify(m: float, h: float, j: int) -> BifurcationInfo:
    """Linearization case at mode ``j`` with its critical ``mu0``.

    The returned record also carries criticality, squared amplitude and the
    fourth-order energy coefficient whenever those are defined.
    """
    j = int(j)
    if j == 0:
        raise ValueError("mode index j must be nonzero")
    j = abs(j)
    m, h = float(m), float(h)

    if m == 0.0:
        if h < 0:
            return _complete(BifurcationInfo(Case.CASE1_0, j, -h / (2.0 * j * j)), m, h)
        return BifurcationInfo(Case.NONE, j)

    if j == 1:
        if h >= 0:
            return BifurcationInfo(Case.NONE, 1)
        partner = _case2_partner(m, h)
        if partner is not None:
            return BifurcationInfo(Case.CASE2, partner, -h / 2.0)
        return _complete(BifurcationInfo(Case.CASE1_1, 1, -h / 2.0), m, h)

    if h >= 2.0 * m * m:
        return BifurcationInfo(Case.NONE, j)
    if h < 0 and on_case2_parabola(m, h, j):
        return BifurcationInfo(Case.CASE2, j, -h / 2.0)
    return _complete(BifurcationInfo(Case.CASE0, j, (m * m - 0.5 * h) / (j * j)), m, h)


def first_bifurcating_case(m: float, h: float) -> BifurcationInfo:
    """Case with the largest critical value, i.e. the first one met when
    ``mu`` decreases from infinity along the trivial branch."""
    candidates = [classify(m, h, 1), classify(m, h, 2)]
    live = [c for c in candidates if c.case is not Case.NONE]
    if not live:
        return BifurcationInfo(Case.NONE, 0)
    best = max(live, key=lambda c: c.mu0)
    # a tie between the coupled and the mode-1 family is the degenerate case
    ties = [c for c in live if math.isclose(c.mu0, best.mu0, rel_tol=CASE2_RTOL)]
    if len(ties) > 1:
        return BifurcationInfo(Case.CASE2, max(c.j for c in ties), best.mu0)
    return best


def amplitude_squared(info: BifurcationInfo, m: float, h: float) -> tuple[int, float]:
    """Criticality ``sigma`` and the squared first-order amplitude."""
    j = info.j
    if info.case is Case.CASE0:
        z = Z(m, h)
        if z == 0.0:
            raise DegenerateModeError("Z(m, h) = 0: criticality undetermined at third order")
        sigma = 1 if z > 0 else -1
        return sigma, 8.0 * j * j * sigma * (2.0 * m * m - h) / z
    if info.case is Case.CASE1_0:
        return -1, 8.0 * j * j / (h * h)
    if info.case is Case.CASE1_1:
        d = 2.0 * m * m + 3.0 * h
        if d == 0.0:
            raise DegenerateModeError("2 m^2 + 3 h = 0: resonant mode-1 amplitude")
        sigma = 1 if d / h**3 < 0 else -1
        return sigma, -8.0 * sigma * d / (3.0 * h**3)
    if info.case is Case.CASE2:
        raise DegenerateModeError("degenerate Case 2 has two independent amplitudes")
    raise DegenerateModeError(f"no bifurcating mode for case {info.case.value}")


def e4(info: BifurcationInfo, m: float, h: float) -> float:
    """Fourth-order coefficient of the energy along the bifurcating branch."""
    j = info.j
    if info.case is Case.CASE0:
        z = Z(m, h)
        if z == 0.0:
            raise DegenerateModeError("Z(m, h) = 0")
        return -2.0 * math.pi * j**4 * (2.0 * m * m - h) / z
    if info.case is Case.CASE1_0:
        return 2.0 * math.pi * j**4 / (h * h)
    if info.case is Case.CASE1_1:
        return 2.0 * math.pi * (3.0 * h + 2.0 * m * m) / (3.0 * h**3)
    raise DegenerateModeError(f"no energy coefficient for case {info.case.value}")


@dataclass
class Mode:
    """First-order perturbation sampled on a grid."""

    rho1: np.ndarray
    theta1: np.ndarray
    lambda1: np.ndarray
    amplitude: float
    phase: float
    rho_series: TrigSeries
    theta_series: TrigSeries


def first_order_series(info: BifurcationInfo, m: float, amplitude: float, phase: float = 0.0,
                       amplitude2: float | None = None, phase2: float = 0.0):
    """``(rho1, theta1, (lambda_M1, lambda_x1, lambda_y1))`` as trigonometric series."""
    j = info.j
    zero = TrigSeries.zero()
    if info.case is Case.CASE0:
        rho1 = TrigSeries.cos_phase(j, -amplitude, phase)
        theta1 = TrigSeries.pinned_sin(j, amplitude * m / j, phase)
        return rho1, theta1, np.zeros(3)
    if info.case is Case.CASE1_0:
        return TrigSeries.cos_phase(j, -amplitude, phase), zero, np.zeros(3)
    if info.case is Case.CASE1_1:
        rho1 = TrigSeries.cos_phase(1, -amplitude, phase)
        lam = np.array([0.0, -amplitude * m * math.cos(phase), -amplitude * m * math.sin(phase)])
        return rho1, zero, lam
    if info.case is Case.CASE2:
        if amplitude2 is None:
            raise DegenerateModeError("Case 2 needs both the coupled and the mode-1 amplitude")
        rho1 = TrigSeries.cos_phase(j, -amplitude, phase) + TrigSeries.cos_phase(1, -amplitude2, phase2)
        theta1 = TrigSeries.pinned_sin(j, amplitude * m / j, phase)
        lam = np.array([0.0, -amplitude2 * m * math.cos(phase2), -amplitude2 * m * math.sin(phase2)])
        return rho1, theta1, lam
    raise DegenerateModeError(f"no first-order mode for case {info.case.value}")


def mode(info: BifurcationInfo, params: ModelParams, amplitude: float, phase: float = 0.0,
         grid: Grid | None = None, amplitude2: float | None = None, phase2: float = 0.0) -> Mode:
    """Sample the first-order kernel element of ``info`` on ``grid``."""
    if amplitude == 0.0 and not (info.case is Case.CASE2 and amplitude2):
        raise DegenerateModeError("zero amplitude gives the trivial perturbation")
    if grid is None:
        raise ValueError("a grid is required to sample the mode")
    rho_s, theta_s, lam = first_order_series(info, params.m, amplitude, phase, amplitude2, phase2)
    s = grid.s
    return Mode(rho_s(s), theta_s(s), lam, float(amplitude), float(phase), rho_s, theta_s)


def _central_diff(values: np.ndarray, ds: float) -> np.ndarray:
    return (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * ds)


def second_variation(u1: Mode, params: ModelParams, grid: Grid) -> float:
    """Quadratic form of the energy at the circle in direction ``u1``."""
    ds = grid.ds
    rho1, theta1 = u1.rho1, u1.theta1
    drho = _central_diff(rho1, ds)
    dtheta = _central_diff(theta1, ds)
    integrand = 0.5 * params.h * rho1**2 + 2.0 * params.m * rho1 * dtheta + dtheta**2 + params.mu * drho**2
    return float(ds * integrand.sum())


def criticality_region(m: float, h: float) -> str:
    """``"supercritical"`` inside ``z1 m^2 < h < z2 m^2``, else ``"subcritical"``
    (or ``"none"`` where no coupled mode exists)."""
    if m == 0 or h >= 2 * m * m:
        return "none"
    z1, z2 = criticality_roots()
    return "supercritical" if z1 * m * m < h < z2 * m * m else "subcritical"
