"""Self-verification suites run by ``rhoelastica verify``.

Level 1 is analytic only, level 2 exercises the discretization and level 3
runs short end-to-end continuations. Each level includes the lower ones.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .bifurcation import (
    Case,
    Z,
    _criticality_cubic,
    amplitude_squared,
    classify,
    criticality_roots,
    first_bifurcating_case,
)
from .config import PRESETS
from .continuation import (
    ContinuationOptions,
    continue_branch,
    discrete_critical_mu,
    run_branch,
    start_branch,
)
from .discretization import DiscreteState, Grid, discrete_energy, jacobian, residual
from .model import ModelParams, symmetry_transform
from .solver import check_jacobian

# Labels of the named parameter sets: leading mode first, then any
# mode-one bifurcation with a positive critical value.
EXPECTED_LABELS = {
    "i": ["Case0 sigma=-1"],
    "ii": ["Case0 sigma=+1"],
    "iii": ["Case0 sigma=-1"],
    "iv": ["Case0 sigma=-1", "Case1_1 supercritical"],
    "v": ["Case1_1 subcritical"],
    "vi": ["Case1_0 j=1"],
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def bifurcation_labels(m: float, h: float) -> list[str]:
    """Case and criticality labels for a parameter set."""

    def label(info):
        if info.case is Case.CASE1_1:
            return f"Case1_1 {'supercritical' if info.supercritical else 'subcritical'}"
        if info.case is Case.CASE1_0:
            return f"Case1_0 j={info.j}"
        return f"{info.case.value} sigma={info.sigma:+d}"

    lead = first_bifurcating_case(m, h)
    out = [label(lead)]
    if lead.j != 1:
        one = classify(m, h, 1)
        if one.case in (Case.CASE1_0, Case.CASE1_1) and one.mu0 > 0.0:
            out.append(label(one))
    return out


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> Check:
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crash is a failed check, not a crashed suite
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return Check(name, bool(passed), detail, time.perf_counter() - t0)


# --- level 1 -------------------------------------------------------------


def check_preset_labels() -> tuple[bool, str]:
    bad = {k: bifurcation_labels(*PRESETS[k]) for k in PRESETS if bifurcation_labels(*PRESETS[k]) != EXPECTED_LABELS[k]}
    return not bad, "all six match" if not bad else f"mismatch: {bad}"


def check_amplitude_energy_consistency() -> tuple[bool, str]:
    """``E4 = -pi j^2 sigma amp_sq / 4`` holds in every non-degenerate case."""
    worst = 0.0
    for m in np.linspace(-2.0, 2.0, 9):
        for h in np.linspace(-3.0, 3.0, 13):
            for j in (1, 2, 3):
                try:
                    info = classify(float(m), float(h), j)
                except ValueError:
                    continue
                if info.case not in (Case.CASE0, Case.CASE1_0, Case.CASE1_1) or info.e4 is None:
                    continue
                sigma, amp_sq = amplitude_squared(info, float(m), float(h))
                expected = -math.pi * j * j * sigma * amp_sq / 4.0
                worst = max(worst, abs(info.e4 - expected) / max(1.0, abs(expected)))
    return worst <= 1e-12, f"max relative deviation {worst:.2e}"


def check_criticality_roots() -> tuple[bool, str]:
    z1, z2 = criticality_roots()
    ok = 0.515 <= z1 <= 0.525 and 1.705 <= z2 <= 1.715
    ok &= abs(_criticality_cubic(z1)) <= 1e-12 and abs(_criticality_cubic(z2)) <= 1e-12
    for z in (z1, z2):
        for m in (0.5, 1.0, 2.0):
            ok &= Z(m, (z - 1e-6) * m * m) * Z(m, (z + 1e-6) * m * m) < 0.0
    return ok, f"z1={z1:.12f} z2={z2:.12f}"


# --- level 2 -------------------------------------------------------------


def check_trivial_exactness(seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst_r = worst_e = 0.0
    for n in (8, 64, 256):
        grid = Grid(n)
        for _ in range(20):
            m, h = rng.uniform(-2, 2), rng.uniform(-2, 2)
            p = ModelParams(m, h, rng.uniform(0.01, 5))
            s = DiscreteState.trivial(grid, p)
            worst_r = max(worst_r, float(np.abs(residual(s, p)).max()))
            worst_e = max(worst_e, abs(discrete_energy(s, p) - math.pi))
    return worst_r <= 1e-12 and worst_e <= 1e-13, f"max residual {worst_r:.2e}, energy error {worst_e:.2e}"


def random_smooth_state(grid: Grid, rng: np.random.Generator, size: float = 0.2, modes: int = 4) -> DiscreteState:
    """Trivial state plus a few random low Fourier modes."""
    s = grid.s
    rho = np.ones(grid.n)
    phi = np.zeros(grid.n)
    for k in range(1, modes + 1):
        c = rng.uniform(-1, 1, 4) * size / modes
        rho += c[0] * np.cos(k * s) + c[1] * np.sin(k * s)
        phi += c[2] * np.cos(k * s) + c[3] * np.sin(k * s)
    theta = s + phi - phi[0]
    return DiscreteState(rho, theta, rng.uniform(-1, 1, 3))


def check_jacobian_fd(jacobian_fn: Callable = jacobian, seed: int = 1, states: int = 10) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    grid = Grid(64)
    worst = None
    for _ in range(states):
        p = ModelParams(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.1, 2))
        res = check_jacobian(random_smooth_state(grid, rng), p, jacobian_fn=jacobian_fn)
        if worst is None or res.max_rel_error > worst.max_rel_error:
            worst = res
    return worst.passed, f"max relative error {worst.max_rel_error:.2e} at entry ({worst.row}, {worst.col})"


def check_consistency_order() -> tuple[bool, str]:
    """The grid critical value of (1, 1), j = 2 converges at second order."""
    p = ModelParams(1.0, 1.0, 1.0)
    errs = [discrete_critical_mu(p, Grid(n), 2, (0.05, 0.2), xtol=1e-14) - 0.125 for n in (16, 32, 64)]
    orders = [math.log2(abs(errs[k] / errs[k + 1])) for k in range(2)]
    return all(1.8 <= o <= 2.2 for o in orders), f"observed orders {orders[0]:.3f}, {orders[1]:.3f}"


# --- level 3 -------------------------------------------------------------


def check_onset_directions(n: int = 256, A0: float = 0.05) -> tuple[bool, str]:
    bad = []
    for name, (m, h) in PRESETS.items():
        info = first_bifurcating_case(m, h)
        pt = start_branch(info, ModelParams(m, h, 1.0), Grid(n), A0)
        if not (np.sign(info.mu0 - pt.mu) == info.sigma and abs(pt.mu - info.mu0) <= 2 * A0 * A0):
            bad.append(name)
    # the secondary mode-one onset of (iv) is supercritical
    info = classify(*PRESETS["iv"], 1)
    pt = start_branch(info, ModelParams(*PRESETS["iv"], 1.0), Grid(n), A0)
    if not (info.case is Case.CASE1_1 and info.sigma == 1 and info.mu0 == 0.25 and pt.mu < info.mu0):
        bad.append("iv/Case1_1")
    return not bad, "all onsets on the predicted side" if not bad else f"wrong side: {bad}"


def amplitude_law_slope(n: int = 256, points: int = 10) -> float:
    """Fitted slope of ``(max rho - 1)^2`` against ``mu0 - mu`` on (1, 1), j = 2."""
    info = classify(1.0, 1.0, 2)
    branch = run_branch(info, ModelParams(1.0, 1.0, 1.0), Grid(n), 0.05, ContinuationOptions(max_points=points))
    x = info.mu0 - branch.mus
    y = (np.array([p.rho_max for p in branch.points]) - 1.0) ** 2
    return float(np.polyfit(x, y, 1)[0])


def check_amplitude_law() -> tuple[bool, str]:
    slope = amplitude_law_slope()
    return abs(slope / 6.4 - 1.0) <= 0.1, f"slope {slope:.4f} against 6.4"


def check_symmetry_reflection(points: int = 20) -> tuple[bool, str]:
    m, h = PRESETS["v"]
    params = ModelParams(m, h, 1.0)
    info = first_bifurcating_case(m, h)
    seed = start_branch(info, params, Grid(256), 0.05)
    branch = continue_branch(seed, params, ContinuationOptions(max_points=points), info=info)
    worst = 0.0
    for pt in branch.points:
        state, mirrored = symmetry_transform(pt.state, params.with_mu(pt.mu))
        worst = max(worst, float(np.abs(residual(state, mirrored)).max()))
    return worst <= 1e-9, f"max reflected residual {worst:.2e} over {len(branch.points)} points"


LEVELS: dict[int, list[tuple[str, Callable]]] = {
    1: [
        ("preset_labels", check_preset_labels),
        ("amplitude_energy_consistency", check_amplitude_energy_consistency),
        ("criticality_roots", check_criticality_roots),
    ],
    2: [
        ("trivial_exactness", check_trivial_exactness),
        ("jacobian_fd", check_jacobian_fd),
        ("consistency_order", check_consistency_order),
    ],
    3: [
        ("onset_directions", check_onset_directions),
        ("amplitude_law", check_amplitude_law),
        ("symmetry_reflection", check_symmetry_reflection),
    ],
}


def run_verification(level: int, jacobian_fn: Callable = jacobian) -> dict:
    """Run every check up to ``level`` and return a JSON-ready report."""
    if level not in LEVELS:
        raise ValueError(f"level must be 1, 2 or 3, got {level}")
    checks = []
    for lv in range(1, level + 1):
        for name, fn in LEVELS[lv]:
            call = (lambda: fn(jacobian_fn)) if name == "jacobian_fd" else fn
            checks.append(_timed(name, call))
    return {
        "level": level,
        "passed": all(c.passed for c in checks),
        "checks": [asdict(c) for c in checks],
    }


def faulty_jacobian(row: int, col: int, delta: float) -> Callable:
    """Wrap the analytic Jacobian with one corrupted entry, for fault injection."""

    def jac(state, params, floor=None):
        j = jacobian(state, params) if floor is None else jacobian(state, params, floor)
        j = j.tolil()
        j[row, col] = j[row, col] + delta
        return j.tocsc()

    return jac
