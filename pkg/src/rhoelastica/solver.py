"""Damped Newton iteration for the discrete equilibrium system.

The linear step uses a sparse LU factorization of the full Jacobian,
multiplier rows and columns included. The factorization also yields the
determinant sign, which the continuation driver uses to spot folds and
bifurcations.

Nontrivial equilibria carry an approximate arc-length phase symmetry that
the lattice pins only weakly, so the natural Jacobian is close to singular
there. :class:`PhaseCondition` swaps one density row for the orthogonality
condition ``<rho - rho_ref, D rho_ref> = 0``, which restores a well
conditioned system without changing the solution set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .discretization import (
    DiscreteState,
    StiffnessFloorError,
    jacobian,
    residual,
    residual_mu_derivative,
)
from .model import TWO_PI, BetaFloor, ModelParams

SINGULAR_PIVOT_RATIO = 1e-14


class SingularSystemError(np.linalg.LinAlgError):
    """The Jacobian is singular to working precision.

    Usually signals a bifurcation or turning point at the current state.
    """

    def __init__(self, pivot_ratio: float):
        super().__init__(f"singular linear system (pivot ratio {pivot_ratio:.3e})")
        self.pivot_ratio = pivot_ratio


class JacobianMismatchError(AssertionError):
    """Analytic and finite-difference Jacobians disagree."""

    def __init__(self, check: "JacobianCheck"):
        super().__init__(
            f"Jacobian entry ({check.row}, {check.col}) off by relative {check.max_rel_error:.3e}"
        )
        self.check = check


def _permutation_parity(perm: np.ndarray) -> int:
    """Sign of a permutation given as an index array."""
    perm = np.asarray(perm)
    seen = np.zeros(perm.size, dtype=bool)
    sign = 1
    for start in range(perm.size):
        if seen[start]:
            continue
        length = 0
        k = start
        while not seen[k]:
            seen[k] = True
            k = perm[k]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


class Factorization:
    """Sparse LU factorization with determinant sign and singularity check.

    Parameters
    ----------
    matrix : sparse matrix
        Square system matrix.
    pivot_tol : float
        Relative threshold below which the smallest pivot of ``U`` flags
        the matrix as singular.

    Raises
    ------
    SingularSystemError
        If the factorization breaks down or the pivot ratio is below
        ``pivot_tol``.
    """

    def __init__(self, matrix, pivot_tol: float = SINGULAR_PIVOT_RATIO):
        a = sp.csc_matrix(matrix)
        scale = float(np.abs(a.data).max()) if a.nnz else 0.0
        if scale == 0.0 or not np.isfinite(scale):
            raise SingularSystemError(0.0)
        try:
            self._lu = splu(a, permc_spec="COLAMD")
        except RuntimeError as exc:  # exactly singular factor
            raise SingularSystemError(0.0) from exc
        diag = self._lu.U.diagonal()
        self.pivot_ratio = float(np.abs(diag).min() / scale)
        if self.pivot_ratio < pivot_tol:
            raise SingularSystemError(self.pivot_ratio)
        self._diag = diag

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=float))

    @property
    def det_sign(self) -> int:
        """Sign of ``det(A)`` from ``P_r A P_c = L U`` with unit ``L``."""
        sign = _permutation_parity(self._lu.perm_r) * _permutation_parity(self._lu.perm_c)
        return int(sign * np.prod(np.sign(self._diag)))


@dataclass(frozen=True)
class PhaseCondition:
    """Replace one density row by ``ds * <rho - rho_ref, p> = 0``.

    Attributes
    ----------
    p : ndarray
        Direction of the infinitesimal shift, normalized to unit max-norm.
    rho_ref : ndarray
        Reference density.
    row : int
        Index of the density row that is replaced.
    """

    p: np.ndarray
    rho_ref: np.ndarray
    row: int

    @property
    def n(self) -> int:
        return self.p.size

    def value(self, rho: np.ndarray) -> float:
        return float(TWO_PI / self.n * np.dot(rho - self.rho_ref, self.p))

    def apply(self, r: np.ndarray, rho: np.ndarray) -> np.ndarray:
        out = r.copy()
        out[self.row] = self.value(rho)
        return out

    def apply_jacobian(self, jac) -> sp.csr_matrix:
        """Return a copy of ``jac`` with the phase row substituted."""
        size = jac.shape[0]
        keep = np.ones(size)
        keep[self.row] = 0.0
        cols = np.flatnonzero(self.p)
        phase_row = sp.csr_matrix(
            (TWO_PI / self.n * self.p[cols], (np.full(cols.size, self.row), cols)), shape=jac.shape
        )
        return (sp.diags(keep) @ sp.csr_matrix(jac) + phase_row).tocsr()


def phase_condition_from(rho_ref: np.ndarray, row: int | None = None,
                         direction: np.ndarray | None = None) -> PhaseCondition:
    """Build a phase condition around a reference density.

    Parameters
    ----------
    rho_ref : ndarray
        Density the solution should stay in phase with.
    row : int, optional
        Density row to replace. Defaults to where ``|p|`` peaks, which keeps
        the implied residual of the dropped row as small as possible.
    direction : ndarray, optional
        Shift direction. Defaults to the central difference of ``rho_ref``;
        must be supplied when ``rho_ref`` is constant.
    """
    rho_ref = np.asarray(rho_ref, dtype=float)
    if direction is None:
        direction = np.roll(rho_ref, -1) - np.roll(rho_ref, 1)
    p = np.asarray(direction, dtype=float)
    peak = np.abs(p).max()
    if not peak > 0.0:
        raise ValueError("phase direction vanishes; pass an explicit direction")
    p = p / peak
    if row is None:
        row = int(np.argmax(np.abs(p)))
    return PhaseCondition(p=p, rho_ref=rho_ref.copy(), row=int(row))


@dataclass(frozen=True)
class NewtonOptions:
    """Stopping and damping controls for :func:`newton_solve`."""

    tol_residual: float = 1e-10
    max_iters: int = 50
    min_eta: float = 2.0**-20
    backtrack_factor: float = 0.5
    fd_check: bool = False
    force_full_step: bool = False

    def __post_init__(self):
        if not self.tol_residual > 0.0:
            raise ValueError("tol_residual must be positive")
        if not 0.0 < self.min_eta <= 1.0:
            raise ValueError("min_eta must lie in (0, 1]")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass
class SolveResult:
    state: DiscreteState
    converged: bool
    iters: int
    residual_history: list[float] = field(default_factory=list)
    final_eta: float = 1.0
    message: str = ""

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("inf")

    def to_record(self) -> dict:
        return {
            "converged": self.converged,
            "iters": self.iters,
            "residual_history": [float(r) for r in self.residual_history],
            "final_eta": self.final_eta,
            "message": self.message,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())


@dataclass
class _LoopOutcome:
    x: np.ndarray
    converged: bool
    iters: int
    history: list[float]
    eta: float
    message: str


def newton_loop(x0: np.ndarray, fun: Callable[[np.ndarray], np.ndarray],
                jac: Callable[[np.ndarray], object], opts: NewtonOptions) -> _LoopOutcome:
    """Damped Newton iteration on a generic square system.

    ``fun`` may raise :class:`StiffnessFloorError`; at the starting point it
    propagates, during the line search the trial step is shortened instead.
    Singular Jacobians propagate as :class:`SingularSystemError`.
    """
    x = np.array(x0, dtype=float)
    r = fun(x)
    norm = float(np.abs(r).max())
    history = [norm]
    best_x, best_norm = x.copy(), norm
    eta = 1.0
    for it in range(opts.max_iters + 1):
        if not np.isfinite(norm):
            return _LoopOutcome(best_x, False, it, history, eta, "non-finite residual")
        if norm <= opts.tol_residual:
            return _LoopOutcome(x, True, it, history, eta, "converged")
        if it == opts.max_iters:
            break
        delta = Factorization(jac(x)).solve(-r)
        eta = 1.0
        floor_error = None
        while True:
            trial = x + eta * delta
            try:
                r_trial = fun(trial)
                norm_trial = float(np.abs(r_trial).max())
            except StiffnessFloorError as exc:
                floor_error = exc
                norm_trial = np.inf
            if opts.force_full_step:
                if floor_error is not None:
                    raise floor_error
                break
            if norm_trial <= (1.0 - eta / 4.0) * norm:
                break
            eta *= opts.backtrack_factor
            if eta < opts.min_eta:
                if floor_error is not None and not np.isfinite(best_norm):
                    raise floor_error
                return _LoopOutcome(best_x, False, it + 1, history, eta / opts.backtrack_factor,
                                    "line search failed")
        x, r, norm = trial, r_trial, norm_trial
        history.append(norm)
        if norm < best_norm:
            best_x, best_norm = x.copy(), norm
    return _LoopOutcome(best_x, False, opts.max_iters, history, eta, "max iterations")


@dataclass(frozen=True)
class JacobianCheck:
    max_rel_error: float
    row: int
    col: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= 1e-6


def check_jacobian(state: DiscreteState, params: ModelParams, step: float = 1e-6,
                   jacobian_fn: Callable = jacobian, floor: BetaFloor = BetaFloor()) -> JacobianCheck:
    """Compare an analytic Jacobian against central finite differences.

    Column ``k`` uses the step ``step * (1 + |x_k|)``. The error of each
    entry is taken relative to ``max(1, |J_ik|)`` and the worst entry is
    reported.
    """
    n = state.n
    x0 = state.pack()
    analytic = np.asarray(sp.csr_matrix(jacobian_fn(state, params, floor)).todense())
    fd = np.empty_like(analytic)
    for col in range(x0.size):
        hk = step * (1.0 + abs(x0[col]))
        xp, xm = x0.copy(), x0.copy()
        xp[col] += hk
        xm[col] -= hk
        rp = residual(DiscreteState.unpack(xp, n), params, floor)
        rm = residual(DiscreteState.unpack(xm, n), params, floor)
        fd[:, col] = (rp - rm) / (2.0 * hk)
    err = np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd))
    row, col = np.unravel_index(int(np.argmax(err)), err.shape)
    return JacobianCheck(float(err[row, col]), int(row), int(col))


def newton_solve(initial: DiscreteState, params: ModelParams, opts: NewtonOptions = NewtonOptions(),
                 phase: PhaseCondition | None = None, floor: BetaFloor = BetaFloor(),
                 jacobian_fn: Callable = jacobian) -> SolveResult:
    """Solve ``r(u) = 0`` at fixed parameters by damped Newton.

    Parameters
    ----------
    initial : DiscreteState
        Starting iterate.
    params : ModelParams
        Model parameters, ``mu`` included.
    opts : NewtonOptions
        Tolerance, iteration cap and damping schedule.
    phase : PhaseCondition, optional
        If given, one density row is swapped for the phase condition. The
        convergence test still uses the natural residual.
    floor : BetaFloor
        Stiffness floor enforced during assembly.
    jacobian_fn : callable
        Jacobian assembler, replaceable for fault-injection tests.

    Returns
    -------
    SolveResult
        Best iterate found. ``converged`` is set only when the natural
        residual satisfies ``tol_residual``.

    Raises
    ------
    StiffnessFloorError
        If the initial state breaches the floor.
    SingularSystemError
        If a Jacobian along the way is singular to working precision.
    JacobianMismatchError
        With ``opts.fd_check`` when the analytic Jacobian is wrong.
    """
    n = initial.n
    if opts.fd_check:
        check = check_jacobian(initial, params, jacobian_fn=jacobian_fn, floor=floor)
        if not check.passed:
            raise JacobianMismatchError(check)

    def fun(x):
        s = DiscreteState.unpack(x, n)
        r = residual(s, params, floor)
        return r if phase is None else phase.apply(r, s.rho)

    def jac(x):
        j = jacobian_fn(DiscreteState.unpack(x, n), params, floor)
        return j if phase is None else phase.apply_jacobian(j)

    out = newton_loop(initial.pack(), fun, jac, opts)
    state = DiscreteState.unpack(out.x, n)
    history = out.history
    converged = out.converged
    if phase is not None:
        # the dropped density row is implied only approximately
        natural = float(np.abs(residual(state, params, floor)).max())
        history = history + [natural]
        converged = converged and natural <= opts.tol_residual
    message = out.message if converged or not out.converged else "dropped row not satisfied"
    return SolveResult(state, converged, out.iters, history, out.eta, message)


def augmented_residual(x: np.ndarray, mu: float, params: ModelParams, phase: PhaseCondition | None,
                       floor: BetaFloor = BetaFloor()) -> np.ndarray:
    """Residual at ``(x, mu)`` with the optional phase row substituted."""
    n = (x.size - 2) // 2
    s = DiscreteState.unpack(x, n)
    r = residual(s, params.with_mu(mu), floor)
    return r if phase is None else phase.apply(r, s.rho)


def augmented_jacobian(x: np.ndarray, mu: float, params: ModelParams, phase: PhaseCondition | None,
                       floor: BetaFloor = BetaFloor()):
    """Return ``(J_x, r_mu)`` for the system of :func:`augmented_residual`."""
    n = (x.size - 2) // 2
    s = DiscreteState.unpack(x, n)
    jx = jacobian(s, params.with_mu(mu), floor)
    rmu = residual_mu_derivative(s)
    if phase is not None:
        jx = phase.apply_jacobian(jx)
        rmu[phase.row] = 0.0
    return jx, rmu


def bordered_solve(x0: np.ndarray, mu0: float, params: ModelParams, border: Callable,
                   border_grad: tuple[np.ndarray, float], phase: PhaseCondition | None,
                   opts: NewtonOptions, floor: BetaFloor = BetaFloor()) -> _LoopOutcome:
    """Newton on ``r(x, mu) = 0`` plus one scalar equation ``border(x, mu) = 0``.

    ``border`` must be affine with gradient ``border_grad = (g_x, g_mu)``.
    This covers pseudo-arclength steps and amplitude-pinned solves. The
    returned vector holds ``x`` followed by ``mu``.
    """
    gx, gmu = border_grad
    size = x0.size

    def fun(y):
        return np.append(augmented_residual(y[:size], y[size], params, phase, floor), border(y[:size], y[size]))

    def jac(y):
        jx, rmu = augmented_jacobian(y[:size], y[size], params, phase, floor)
        return sp.bmat([[jx, sp.csc_matrix(rmu[:, None])],
                        [sp.csr_matrix(np.asarray(gx)[None, :]), sp.csr_matrix([[gmu]])]], format="csc")

    return newton_loop(np.append(x0, mu0), fun, jac, opts)


def det_sign(state: DiscreteState, params: ModelParams, phase: PhaseCondition | None = None,
             floor: BetaFloor = BetaFloor()) -> int:
    """Sign of the (optionally phase-fixed) Jacobian determinant; 0 if singular."""
    jx, _ = augmented_jacobian(state.pack(), params.mu, params, phase, floor)
    try:
        return Factorization(jx).det_sign
    except SingularSystemError:
        return 0
