"""Branch tracking in the regularization weight ``mu``.

A branch is seeded from the order-2 predictor close to a critical value and
then followed by predictor-corrector steps. Natural continuation in ``mu``
is the default; the driver switches to pseudo-arclength once a ``mu`` step
fails or the determinant sign announces a fold.

Every corrector works on the phase-fixed system (see
:class:`~rhoelastica.solver.PhaseCondition`) and then confirms the natural
residual, polishing with a few natural Newton steps if needed. The recorded
``det_sign`` is the determinant sign of the phase-fixed Jacobian at fixed
``mu``. It flips at folds and at simple bifurcation points.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bifurcation import BifurcationInfo, Case
from .discretization import (
    DiscreteState,
    Grid,
    StiffnessFloorError,
    discrete_energy,
    residual,
    save_state,
)
from .model import TWO_PI, BetaFloor, ModelParams
from .perturbation import expansion, predictor
from .solver import (
    Factorization,
    NewtonOptions,
    PhaseCondition,
    SingularSystemError,
    augmented_jacobian,
    augmented_residual,
    bordered_solve,
    newton_loop,
    phase_condition_from,
)

CSV_COLUMNS = ("mu", "rho_min", "rho_max", "energy", "newton_iters", "det_sign", "arclength")


class Termination(str, enum.Enum):
    MU_BOUND = "mu_bound"
    BETA_FLOOR = "beta_floor"
    NEWTON_FAILURE = "newton_failure"
    MAX_POINTS = "max_points"
    SINGULAR_POINT = "singular_point"


class CollapsedToTrivialError(RuntimeError):
    """Every predictor amplitude tried was pulled back to the trivial state."""


@dataclass
class BranchPoint:
    mu: float
    state: DiscreteState
    energy: float
    rho_min: float
    rho_max: float
    newton_iters: int
    det_sign: int
    arclength: float = 0.0

    def to_row(self) -> dict:
        return {
            "mu": repr(float(self.mu)),
            "rho_min": repr(float(self.rho_min)),
            "rho_max": repr(float(self.rho_max)),
            "energy": repr(float(self.energy)),
            "newton_iters": self.newton_iters,
            "det_sign": self.det_sign,
            "arclength": repr(float(self.arclength)),
        }


@dataclass
class Branch:
    label: str
    points: list[BranchPoint] = field(default_factory=list)
    termination: Termination = Termination.MAX_POINTS
    phase_row: int = 0

    @property
    def mus(self) -> np.ndarray:
        return np.array([p.mu for p in self.points])

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energy for p in self.points])

    @property
    def det_signs(self) -> np.ndarray:
        return np.array([p.det_sign for p in self.points])

    def fold_indices(self) -> list[int]:
        """Indices ``k`` where ``mu`` reverses direction at point ``k``."""
        d = np.diff(self.mus)
        return [k + 1 for k in range(d.size - 1) if d[k] * d[k + 1] < 0.0]

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for p in self.points:
                writer.writerow(p.to_row())
        return path

    def summary(self) -> dict:
        energies = self.energies
        return {
            "label": self.label,
            "points": len(self.points),
            "termination": self.termination.value,
            "mu_first": float(self.mus[0]) if self.points else None,
            "mu_last": float(self.mus[-1]) if self.points else None,
            "energy_min": float(energies.min()) if self.points else None,
            "energy_max": float(energies.max()) if self.points else None,
            "folds": self.fold_indices(),
            "secondary": secondary_indices(self),
        }


@dataclass(frozen=True)
class ContinuationOptions:
    """Controls for :func:`continue_branch`.

    ``step`` is a ``mu`` increment while stepping naturally and an arclength
    once pseudo-arclength has taken over. ``direction`` fixes the initial
    sign of the ``mu`` step; by default the branch moves away from the
    critical value it was seeded from.
    """

    step: float = 5e-4
    min_step: float = 1e-6
    max_step: float = 0.05
    growth: float = 1.3
    fast_iters: int = 3
    max_points: int = 200
    mu_range: tuple[float, float] = (1e-4, 10.0)
    direction: float | None = None
    newton: NewtonOptions = NewtonOptions()
    polish_iters: int = 5
    snapshot_every: int = 10
    snapshot_dir: str | None = None
    floor: BetaFloor = BetaFloor()

    def __post_init__(self):
        if not 0.0 < self.min_step <= self.step:
            raise ValueError("need 0 < min_step <= step")
        if self.mu_range[0] >= self.mu_range[1] or self.mu_range[0] < 0.0:
            raise ValueError(f"invalid mu_range {self.mu_range}")
        if self.max_points < 1:
            raise ValueError("max_points must be at least 1")


class _StepFailure(Exception):
    def __init__(self, reason: Termination):
        super().__init__(reason.value)
        self.reason = reason


def _weights(n: int) -> np.ndarray:
    """Inner-product weights: L2 quadrature for fields, unit for multipliers."""
    ds = TWO_PI / n
    return np.concatenate([np.full(2 * n - 1, ds), np.ones(3)])


def _wnorm(dx: np.ndarray, dmu: float, w: np.ndarray) -> float:
    return math.sqrt(float(np.dot(w * dx, dx)) + dmu * dmu)


def _phase_row(state: DiscreteState) -> int:
    return phase_condition_from(state.rho).row if np.ptp(state.rho) > 0.0 else 0


def make_point(state: DiscreteState, params: ModelParams, iters: int, phase: PhaseCondition | None,
               arclength: float = 0.0, floor: BetaFloor = BetaFloor()) -> BranchPoint:
    """Evaluate the monitors of a converged state."""
    jx, _ = augmented_jacobian(state.pack(), params.mu, params, phase, floor)
    try:
        sign = Factorization(jx).det_sign
    except SingularSystemError:
        sign = 0
    return BranchPoint(
        mu=float(params.mu),
        state=state,
        energy=discrete_energy(state, params),
        rho_min=float(state.rho.min()),
        rho_max=float(state.rho.max()),
        newton_iters=int(iters),
        det_sign=sign,
        arclength=float(arclength),
    )


def _polish(x: np.ndarray, mu: float, params: ModelParams, opts: ContinuationOptions) -> tuple[np.ndarray, int]:
    """Confirm the natural residual, running a few natural Newton steps if needed."""
    n = (x.size - 2) // 2
    p = params.with_mu(mu)
    fun = lambda y: residual(DiscreteState.unpack(y, n), p, opts.floor)  # noqa: E731
    if np.abs(fun(x)).max() <= opts.newton.tol_residual:
        return x, 0
    jac = lambda y: augmented_jacobian(y, mu, params, None, opts.floor)[0]  # noqa: E731
    out = newton_loop(x, fun, jac, replace(opts.newton, max_iters=opts.polish_iters))
    if not out.converged:
        raise _StepFailure(Termination.NEWTON_FAILURE)
    return out.x, out.iters


def _guarded(call):
    try:
        return call()
    except StiffnessFloorError as exc:
        raise _StepFailure(Termination.BETA_FLOOR) from exc
    except SingularSystemError as exc:
        raise _StepFailure(Termination.SINGULAR_POINT) from exc


def _collapsed(x: np.ndarray, n: int, tol: float) -> bool:
    return float(np.abs(x[:n] - 1.0).max()) < 10.0 * tol


def _correct_fixed_mu(x_pred: np.ndarray, mu: float, params: ModelParams, phase: PhaseCondition,
                      opts: ContinuationOptions) -> tuple[np.ndarray, int]:
    n = (x_pred.size - 2) // 2

    def run():
        out = newton_loop(
            x_pred,
            lambda y: augmented_residual(y, mu, params, phase, opts.floor),
            lambda y: augmented_jacobian(y, mu, params, phase, opts.floor)[0],
            opts.newton,
        )
        if not out.converged:
            raise _StepFailure(Termination.NEWTON_FAILURE)
        x, extra = _polish(out.x, mu, params, opts)
        return x, out.iters + extra

    x, iters = _guarded(run)
    if _collapsed(x, n, opts.newton.tol_residual):
        raise _StepFailure(Termination.NEWTON_FAILURE)
    return x, iters


def _correct_arclength(y_pred: np.ndarray, tangent: np.ndarray, w: np.ndarray, params: ModelParams,
                       phase: PhaseCondition, opts: ContinuationOptions) -> tuple[np.ndarray, float, int]:
    size = y_pred.size - 1
    n = (size - 2) // 2
    gx = w * tangent[:size]
    gmu = float(tangent[size])

    def border(x, mu):
        return float(np.dot(gx, x - y_pred[:size]) + gmu * (mu - y_pred[size]))

    def run():
        out = bordered_solve(y_pred[:size], y_pred[size], params, border, (gx, gmu), phase, opts.newton, opts.floor)
        if not out.converged:
            raise _StepFailure(Termination.NEWTON_FAILURE)
        mu = float(out.x[size])
        if mu < 0.0:
            raise _StepFailure(Termination.MU_BOUND)
        x, extra = _polish(out.x[:size], mu, params, opts)
        return x, mu, out.iters + extra

    x, mu, iters = _guarded(run)
    if _collapsed(x, n, opts.newton.tol_residual):
        raise _StepFailure(Termination.NEWTON_FAILURE)
    return x, mu, iters


def _initial_tangent(point: BranchPoint, params: ModelParams, phase: PhaseCondition, direction: float,
                     w: np.ndarray, floor: BetaFloor) -> np.ndarray:
    x = point.state.pack()
    jx, rmu = augmented_jacobian(x, point.mu, params, phase, floor)
    xdot = Factorization(jx).solve(-rmu)
    t = np.append(xdot, 1.0) * direction
    return t / _wnorm(t[:-1], t[-1], w)


def start_branch(info: BifurcationInfo, params: ModelParams, grid: Grid, A0: float = 0.05,
                 opts: ContinuationOptions = ContinuationOptions(), failovers: int = 4) -> BranchPoint:
    """Correct the order-2 predictor near ``info.mu0`` into a first branch point.

    The predictor is taken at ``mu = mu0 - sigma A0^2`` and corrected with
    Newton at that ``mu``. If Newton lands on the trivial state the
    amplitude is halved, up to ``failovers`` times.

    Raises
    ------
    CollapsedToTrivialError
        If every attempt converged to the trivial state.
    """
    if info.case not in (Case.CASE0, Case.CASE1_0, Case.CASE1_1):
        raise ValueError(f"cannot start a branch for case {info.case.value}")
    if not A0 > 0.0:
        raise ValueError("A0 must be positive")
    last_error = None
    A = A0
    for _ in range(failovers + 1):
        state, mu = predictor(info, params, A, 2, grid)
        if mu < 0.0:
            raise ValueError(f"predictor mu = {mu} is negative; reduce A0")
        p = params.with_mu(mu)
        phase = phase_condition_from(state.rho)
        try:
            x, iters = _correct_fixed_mu(state.pack(), mu, p, phase, opts)
        except _StepFailure as exc:
            if exc.reason is not Termination.NEWTON_FAILURE:
                raise RuntimeError(f"branch start failed: {exc.reason.value}") from exc
            last_error = exc
            A *= 0.5
            continue
        seed = DiscreteState.unpack(x, grid.n)
        return make_point(seed, p, iters, phase_condition_from(seed.rho), floor=opts.floor)
    raise CollapsedToTrivialError(
        f"Newton collapsed to the trivial state for A0 down to {2 * A:.3g}"
    ) from last_error


def continue_branch(seed: BranchPoint, params: ModelParams, opts: ContinuationOptions = ContinuationOptions(),
                    info: BifurcationInfo | None = None, label: str = "branch") -> Branch:
    """Follow a branch from a converged seed point.

    Parameters
    ----------
    seed : BranchPoint
        Converged starting point.
    params : ModelParams
        ``m`` and ``h``; ``mu`` is taken from the points.
    opts : ContinuationOptions
        Step control, bounds and Newton settings.
    info : BifurcationInfo, optional
        Used only to pick the initial direction away from ``info.mu0``.
    label : str
        Branch label, also used in snapshot file names.

    Returns
    -------
    Branch
        All accepted points and the reason the loop stopped. Failures after
        the seed never raise.
    """
    n = seed.state.n
    w = _weights(n)
    row = _phase_row(seed.state)
    branch = Branch(label=label, points=[seed], phase_row=row)
    _snapshot(branch, 0, params, opts)
    if opts.direction is not None:
        direction = math.copysign(1.0, opts.direction)
    elif info is not None and seed.mu != info.mu0:
        direction = math.copysign(1.0, seed.mu - info.mu0)
    else:
        direction = -1.0

    arclength_mode = False
    step = opts.step
    reason = Termination.MAX_POINTS
    while len(branch.points) < opts.max_points:
        last = branch.points[-1]
        x_last = last.state.pack()
        phase = phase_condition_from(last.state.rho, row=row)
        try:
            if not arclength_mode:
                mu_new = last.mu + direction * step
                if not opts.mu_range[0] <= mu_new <= opts.mu_range[1]:
                    reason = Termination.MU_BOUND
                    break
                if len(branch.points) >= 2:
                    prev = branch.points[-2]
                    x_pred = x_last + (x_last - prev.state.pack()) * (mu_new - last.mu) / (last.mu - prev.mu)
                else:
                    t = _guarded(lambda: _initial_tangent(last, params.with_mu(last.mu), phase, 1.0, w, opts.floor))
                    x_pred = x_last + t[:-1] / t[-1] * (mu_new - last.mu)
                x_new, iters = _correct_fixed_mu(x_pred, mu_new, params, phase, opts)
                candidate = make_point(DiscreteState.unpack(x_new, n), params.with_mu(mu_new), iters, phase,
                                       floor=opts.floor)
                if candidate.det_sign != last.det_sign:
                    # possible fold: retake this step along the arclength
                    arclength_mode = True
                    step = _wnorm(x_new - x_last, mu_new - last.mu, w)
                    continue
            else:
                if len(branch.points) >= 2:
                    prev = branch.points[-2]
                    t = np.append(x_last - prev.state.pack(), last.mu - prev.mu)
                    t /= _wnorm(t[:-1], t[-1], w)
                else:
                    t = _guarded(lambda: _initial_tangent(last, params.with_mu(last.mu), phase, direction, w,
                                                          opts.floor))
                y_pred = np.append(x_last, last.mu) + step * t
                x_new, mu_new, iters = _correct_arclength(y_pred, t, w, params, phase, opts)
                if not opts.mu_range[0] <= mu_new <= opts.mu_range[1]:
                    reason = Termination.MU_BOUND
                    break
                candidate = make_point(DiscreteState.unpack(x_new, n), params.with_mu(mu_new), iters, phase,
                                       floor=opts.floor)
        except _StepFailure as exc:
            if not arclength_mode and exc.reason in (Termination.NEWTON_FAILURE, Termination.SINGULAR_POINT):
                arclength_mode = True
                step = _wnorm(x_last - branch.points[-2].state.pack(), last.mu - branch.points[-2].mu, w) \
                    if len(branch.points) >= 2 else step
                continue
            step *= 0.5
            if step < opts.min_step:
                reason = exc.reason
                break
            continue
        candidate.arclength = last.arclength + _wnorm(x_new - x_last, mu_new - last.mu, w)
        branch.points.append(candidate)
        _snapshot(branch, len(branch.points) - 1, params, opts)
        if iters <= opts.fast_iters:
            step = min(step * opts.growth, opts.max_step)
    branch.termination = reason
    return branch


def _snapshot(branch: Branch, index: int, params: ModelParams, opts: ContinuationOptions) -> None:
    if opts.snapshot_dir is None or index % opts.snapshot_every != 0:
        return
    pt = branch.points[index]
    path = Path(opts.snapshot_dir) / f"{branch.label}_{index:05d}.json"
    save_state(path, pt.state, params.with_mu(pt.mu),
               extra={"index": index, "energy": pt.energy, "det_sign": pt.det_sign, "label": branch.label})


def run_branch(info: BifurcationInfo, params: ModelParams, grid: Grid, A0: float = 0.05,
               opts: ContinuationOptions = ContinuationOptions(), label: str | None = None) -> Branch:
    """Seed a branch with :func:`start_branch` and follow it."""
    seed = start_branch(info, params, grid, A0, opts)
    return continue_branch(seed, params, opts, info=info, label=label or f"{info.case.value}_j{info.j}")


def secondary_indices(branch: Branch) -> list[int]:
    """Indices where ``det_sign`` flips while ``mu`` keeps its direction."""
    mus = branch.mus
    signs = branch.det_signs
    out = []
    for k in range(1, len(branch.points)):
        if signs[k] == 0 or signs[k - 1] == 0 or signs[k] == signs[k - 1]:
            continue
        d = mus[k] - mus[k - 1]
        before = mus[k - 1] - mus[k - 2] if k >= 2 else d
        after = mus[k + 1] - mus[k] if k + 1 < len(mus) else d
        if d * before > 0.0 and d * after > 0.0:
            out.append(k)
    return out


def detect_secondary(branch: Branch) -> list[BranchPoint]:
    """Branch points right after a determinant sign change that is not a fold."""
    return [branch.points[k] for k in secondary_indices(branch)]


def null_vector(point: BranchPoint, params: ModelParams, row: int, iters: int = 4,
                floor: BetaFloor = BetaFloor()) -> np.ndarray:
    """Approximate null vector of the phase-fixed Jacobian by inverse iteration."""
    phase = phase_condition_from(point.state.rho, row=row)
    jx, _ = augmented_jacobian(point.state.pack(), point.mu, params, phase, floor)
    fac = Factorization(jx, pivot_tol=0.0)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(jx.shape[0])
    for _ in range(iters):
        v = fac.solve(v)
        v /= np.abs(v).max()
    v[:point.state.n] -= v[:point.state.n].mean()  # keep the mass constraint
    return v


def switch_branch(branch: Branch, index: int, params: ModelParams, eps: float = 0.05,
                  opts: ContinuationOptions = ContinuationOptions()) -> BranchPoint | None:
    """Try to jump onto a secondary branch near a flagged point.

    Newton is seeded from the point plus ``eps`` times the approximate null
    vector (both signs are tried) at the flagged ``mu``. Returns the first
    converged state that differs from the original branch point, or ``None``.
    """
    point = branch.points[index]
    n = point.state.n
    try:
        v = null_vector(point, params, branch.phase_row, floor=opts.floor)
    except SingularSystemError:
        return None
    x0 = point.state.pack()
    for sgn in (1.0, -1.0):
        guess = x0 + sgn * eps * v
        fun = lambda y: residual(DiscreteState.unpack(y, n), params.with_mu(point.mu), opts.floor)  # noqa: E731
        jac = lambda y: augmented_jacobian(y, point.mu, params, None, opts.floor)[0]  # noqa: E731
        try:
            out = newton_loop(guess, fun, jac, opts.newton)
        except (StiffnessFloorError, SingularSystemError):
            continue
        if out.converged and np.abs(out.x - x0).max() > 0.1 * eps and not _collapsed(out.x, n, opts.newton.tol_residual):
            state = DiscreteState.unpack(out.x, n)
            return make_point(state, params.with_mu(point.mu), out.iters, phase_condition_from(state.rho),
                              floor=opts.floor)
    return None


def trivial_branch(params: ModelParams, grid: Grid, mus, j: int) -> Branch:
    """Sample the trivial branch, recording determinant signs.

    The phase row uses the shift direction of the mode ``cos(j s)``, which
    removes the rotational partner ``sin(j s)`` of a double eigenvalue so
    that the mode-``j`` crossing shows up as a single sign change.
    """
    direction = np.sin(j * grid.s)
    phase = phase_condition_from(np.ones(grid.n), direction=direction)
    branch = Branch(label=f"trivial_j{j}", phase_row=phase.row)
    for mu in mus:
        p = params.with_mu(float(mu))
        branch.points.append(make_point(DiscreteState.trivial(grid, p), p, 0, phase))
    branch.termination = Termination.MAX_POINTS
    return branch


def solve_at_amplitude(info: BifurcationInfo, params: ModelParams, A: float, grid: Grid,
                       opts: NewtonOptions = NewtonOptions(), floor: BetaFloor = BetaFloor()
                       ) -> tuple[DiscreteState, float, int]:
    """Branch point whose leading Fourier coefficient matches amplitude ``A``.

    ``mu`` becomes an unknown and one extra equation pins the ``cos(j s)``
    coefficient of ``rho`` to that of the order-2 expansion, ``-a1 A``. The
    ``sin(j s)`` coefficient is held at zero by the phase row. This
    parametrizes the branch by the same amplitude as the expansion and so
    removes the small grid shift of the critical value from comparisons.

    Returns
    -------
    state, mu, iters
    """
    j = info.j
    exp = expansion(info, params.m, params.h, order=2)
    state, mu = predictor(info, params, A, 2, grid)
    cos_j = np.cos(j * grid.s)
    target = float(exp.density_series(A).coefficient(j)[0])
    phase = phase_condition_from(np.ones(grid.n), direction=np.sin(j * grid.s))
    n = grid.n
    ds = grid.ds
    gx = np.zeros(2 * n + 2)
    gx[:n] = ds * cos_j / math.pi

    def border(x, mu_):
        return float(np.dot(gx, x)) - target

    out = bordered_solve(state.pack(), mu, params, border, (gx, 0.0), phase, opts, floor)
    if not out.converged:
        raise RuntimeError(f"amplitude-pinned solve failed: {out.message}")
    mu = float(out.x[-1])
    x, extra = _polish(out.x[:-1], mu, params, ContinuationOptions(newton=opts, floor=floor))
    return DiscreteState.unpack(x, n), mu, out.iters + extra


def discrete_critical_mu(params: ModelParams, grid: Grid, j: int, bracket: tuple[float, float],
                         xtol: float = 1e-13) -> float:
    """Critical ``mu`` of mode ``j`` on ``grid`` by bisection on the determinant sign.

    ``bracket`` must enclose exactly one sign change of the phase-fixed
    trivial-branch determinant.
    """
    phase = phase_condition_from(np.ones(grid.n), direction=np.sin(j * grid.s))

    def sign(mu):
        p = params.with_mu(mu)
        return make_point(DiscreteState.trivial(grid, p), p, 0, phase).det_sign

    lo, hi = bracket
    s_lo, s_hi = sign(lo), sign(hi)
    if s_lo == s_hi or 0 in (s_lo, s_hi):
        raise ValueError(f"no determinant sign change in {bracket}")
    while hi - lo > xtol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        s_mid = sign(mid)
        if s_mid == 0:
            return mid
        if s_mid == s_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
