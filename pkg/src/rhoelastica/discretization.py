"""Periodic finite-difference discretization of the Euler-Lagrange system.

The closed curve is approximated by a polygon with ``n`` sides of length
``ds = 2 pi / n``. Side ``i`` carries a density ``rho[i]`` and an angle
``theta[i]``; ``theta[0]`` is pinned to zero. Ghost values follow the
rotation-index-one convention ``theta[-1] = theta[n-1] - 2 pi`` and
``theta[n] = theta[0] + 2 pi``.

Unknown vector layout (length ``2 n + 2``)::

    [rho_0 .. rho_{n-1}, theta_1 .. theta_{n-1}, lambda_M, lambda_x, lambda_y]

Residual layout: ``n`` density rows, ``n - 1`` angle rows (``i = 1..n-1``),
then the mass and the two closedness constraints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import TWO_PI, BetaFloor, ModelParams, beta, beta_double_prime, beta_prime, trivial_multipliers


class StiffnessFloorError(ArithmeticError):
    """Raised when the stiffness drops to or below the configured floor."""

    def __init__(self, index: int, value: float, floor: float, where: str = "side"):
        self.index = index
        self.value = value
        self.floor = floor
        super().__init__(f"stiffness floor breached at {where} {index}: beta = {value:.3e} <= {floor:.1e}")


@dataclass(frozen=True)
class Grid:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"grid needs an integer n >= 8, got {self.n}")

    @property
    def ds(self) -> float:
        return TWO_PI / self.n

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.n) * self.ds

    @property
    def size(self) -> int:
        return 2 * self.n + 2


@dataclass
class DiscreteState:
    """Grid values of density and angle plus the three multipliers."""

    rho: np.ndarray
    theta: np.ndarray
    lam: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float).reshape(3)
        if self.rho.shape != self.theta.shape or self.rho.ndim != 1:
            raise ValueError("rho and theta must be 1-d arrays of equal length")
        if self.theta[0] != 0.0:
            raise ValueError(f"theta[0] must be pinned to 0, got {self.theta[0]}")

    @property
    def n(self) -> int:
        return self.rho.size

    @property
    def grid(self) -> Grid:
        return Grid(self.n)

    def copy(self) -> "DiscreteState":
        return DiscreteState(self.rho.copy(), self.theta.copy(), self.lam.copy())

    def pack(self) -> np.ndarray:
        return np.concatenate([self.rho, self.theta[1:], self.lam])

    @classmethod
    def unpack(cls, x: np.ndarray, n: int) -> "DiscreteState":
        x = np.asarray(x, dtype=float)
        if x.size != 2 * n + 2:
            raise ValueError(f"expected {2 * n + 2} unknowns, got {x.size}")
        theta = np.concatenate([[0.0], x[n : 2 * n - 1]])
        return cls(x[:n].copy(), theta, x[2 * n - 1 :].copy())

    @classmethod
    def trivial(cls, grid: Grid, params: ModelParams) -> "DiscreteState":
        return cls(np.ones(grid.n), grid.s.copy(), trivial_multipliers(params))

    def rotation_index(self) -> float:
        """Total turning of the tangent divided by 2 pi (1 by construction)."""
        return float(np.sum(np.diff(_theta_ghosts(self.theta)[1:]))) / TWO_PI


def _theta_ghosts(theta: np.ndarray) -> np.ndarray:
    """``theta`` padded with the periodic ghosts: indices -1..n."""
    return np.concatenate([[theta[-1] - TWO_PI], theta, [theta[0] + TWO_PI]])


def _check_floor(values: np.ndarray, floor: BetaFloor, where: str):
    bad = np.flatnonzero(~(values > floor.floor))
    if bad.size:
        i = int(bad[0])
        raise StiffnessFloorError(i, float(values[i]), floor.floor, where)


def _assemble_parts(state: DiscreteState, params: ModelParams, floor: BetaFloor):
    n = state.n
    ds = TWO_PI / n
    rho, theta = state.rho, state.theta
    rho_p = np.roll(rho, -1)
    # differences are taken on the periodic deviation from the circle, which
    # keeps the uniform circle exact in floating point
    phi = theta - np.arange(n) * ds
    dth_fwd = ds + (np.roll(phi, -1) - phi)  # theta_{i+1} - theta_i
    dth_ctr = 2.0 * ds + (np.roll(phi, -1) - np.roll(phi, 1))  # theta_{i+1} - theta_{i-1}
    mid = 0.5 * (rho + rho_p)  # density at vertex i + 1/2
    beta_side = beta(rho, params)
    beta_mid = beta(mid, params)
    _check_floor(np.atleast_1d(beta_side), floor, "side")
    _check_floor(np.atleast_1d(beta_mid), floor, "vertex")
    return n, ds, rho, theta, rho_p, dth_fwd, dth_ctr, mid, beta_mid


def residual(state: DiscreteState, params: ModelParams, floor: BetaFloor = BetaFloor()) -> np.ndarray:
    """Nonlinear residual ``r(u)`` of length ``2 n + 2``."""
    n, ds, rho, theta, rho_p, dth_fwd, dth_ctr, mid, beta_mid = _assemble_parts(state, params, floor)
    lam_m, lam_x, lam_y = state.lam
    rho_m = np.roll(rho, 1)

    kappa_c = dth_ctr / (2.0 * ds)
    r_rho = params.mu * (rho_m - 2.0 * rho + rho_p) / ds**2 - 0.5 * beta_prime(rho, params) * kappa_c**2 - lam_m

    flux = beta_mid * dth_fwd / ds  # beta * theta' at vertex i + 1/2
    r_theta = (flux - np.roll(flux, 1)) / ds + lam_x * np.sin(theta) - lam_y * np.cos(theta)

    cons = np.array(
        [
            ds * rho.sum() - params.M,
            ds * np.cos(theta).sum(),
            ds * np.sin(theta).sum(),
        ]
    )
    return np.concatenate([r_rho, r_theta[1:], cons])


def residual_mu_derivative(state: DiscreteState) -> np.ndarray:
    """Partial derivative of the residual with respect to ``mu``."""
    n = state.n
    ds = TWO_PI / n
    rho = state.rho
    out = np.zeros(2 * n + 2)
    out[:n] = (np.roll(rho, 1) - 2.0 * rho + np.roll(rho, -1)) / ds**2
    return out


def jacobian(state: DiscreteState, params: ModelParams, floor: BetaFloor = BetaFloor()) -> sp.csc_matrix:
    """Analytic sparse Jacobian of :func:`residual`."""
    n, ds, rho, theta, rho_p, dth_fwd, dth_ctr, mid, beta_mid = _assemble_parts(state, params, floor)
    lam_m, lam_x, lam_y = state.lam
    idx = np.arange(n)
    i_rho = idx
    i_theta = n + idx - 1  # valid for idx >= 1
    i_lm, i_lx, i_ly = 2 * n - 1, 2 * n, 2 * n + 1
    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(np.asarray(r), np.asarray(c), np.asarray(v, dtype=float))
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    # density rows
    kappa_c = dth_ctr / (2.0 * ds)
    bp = beta_prime(rho, params)
    add(idx, np.roll(idx, 1), params.mu / ds**2)
    add(idx, np.roll(idx, -1), params.mu / ds**2)
    add(idx, idx, -2.0 * params.mu / ds**2 - 0.5 * beta_double_prime(rho, params) * kappa_c**2)
    dkap = bp * kappa_c / (2.0 * ds)
    nxt = (idx + 1) % n
    prv = (idx - 1) % n
    keep = nxt != 0  # theta_0 is not an unknown
    add(idx[keep], i_theta[nxt[keep]], -dkap[keep])
    keep = prv != 0
    add(idx[keep], i_theta[prv[keep]], dkap[keep])
    add(idx, i_lm, -1.0)

    # angle rows, i = 1..n-1
    row = n + idx[1:] - 1
    i = idx[1:]
    b_plus = beta_mid[i]
    b_minus = beta_mid[i - 1]
    add(row, i_theta[i], -(b_plus + b_minus) / ds**2 + lam_x * np.cos(theta[i]) + lam_y * np.sin(theta[i]))
    ip = i + 1
    keep = ip < n
    add(row[keep], i_theta[ip[keep]], b_plus[keep] / ds**2)
    im = i - 1
    keep = im >= 1
    add(row[keep], i_theta[im[keep]], b_minus[keep] / ds**2)

    g = dth_fwd / ds
    dflux = 0.5 * beta_prime(mid, params) * g / ds  # d(flux_{k+1/2}/ds)/d rho_k = d/d rho_{k+1}
    add(row, i, dflux[i] - dflux[i - 1])
    add(row, (i + 1) % n, dflux[i])
    add(row, i - 1, -dflux[i - 1])
    add(row, i_lx, np.sin(theta[i]))
    add(row, i_ly, -np.cos(theta[i]))

    # constraints
    add(2 * n - 1, idx, ds)
    add(2 * n, i_theta[1:], -ds * np.sin(theta[1:]))
    add(2 * n + 1, i_theta[1:], ds * np.cos(theta[1:]))

    size = 2 * n + 2
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def discrete_energy(state: DiscreteState, params: ModelParams) -> float:
    """Polygonal bending energy plus density-gradient penalty."""
    n = state.n
    ds = TWO_PI / n
    rho_p = np.roll(state.rho, -1)
    phi = state.theta - np.arange(n) * ds
    g = 1.0 + (np.roll(phi, -1) - phi) / ds
    bend = 0.5 * beta(0.5 * (state.rho + rho_p), params) * g**2
    grad = 0.5 * params.mu * ((rho_p - state.rho) / ds) ** 2
    return float(ds * np.sum(bend + grad))


def reconstruct_curve(theta: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """Polygon vertices, shape ``(n + 1, 2)``, starting at the origin."""
    theta = np.asarray(theta, dtype=float)
    ds = (grid or Grid(theta.size)).ds
    steps = ds * np.column_stack([np.cos(theta), np.sin(theta)])
    return np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])


def constraint_violation(state: DiscreteState, params: ModelParams) -> np.ndarray:
    ds = TWO_PI / state.n
    return np.array(
        [
            ds * state.rho.sum() - params.M,
            ds * np.cos(state.theta).sum(),
            ds * np.sin(state.theta).sum(),
        ]
    )


# --- JSON state format ---------------------------------------------------


def _fmt(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    return format(float(x), ".17g")


def _fmt_list(values) -> str:
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


def state_to_json(state: DiscreteState, params: ModelParams, extra: dict | None = None) -> str:
    """Canonical text form: fixed key order, 17 significant digits."""
    parts = [
        f'"n": {state.n}',
        f'"mu": {_fmt(params.mu)}',
        f'"m": {_fmt(params.m)}',
        f'"h": {_fmt(params.h)}',
        f'"rho": {_fmt_list(state.rho)}',
        f'"theta": {_fmt_list(state.theta)}',
        f'"lambda": {_fmt_list(state.lam)}',
    ]
    for key, value in (extra or {}).items():
        parts.append(f"{json.dumps(key)}: {json.dumps(value, sort_keys=True)}")
    return "{" + ", ".join(parts) + "}\n"


def state_from_json(text: str) -> tuple[DiscreteState, ModelParams]:
    data = json.loads(text)
    for key in ("n", "mu", "m", "h", "rho", "theta", "lambda"):
        if key not in data:
            raise ValueError(f"state record is missing key {key!r}")
    rho = np.asarray(data["rho"], dtype=float)
    theta = np.asarray(data["theta"], dtype=float)
    lam = np.asarray(data["lambda"], dtype=float)
    if rho.size != data["n"] or theta.size != data["n"] or lam.size != 3:
        raise ValueError("state record has inconsistent array lengths")
    for name, arr in (("rho", rho), ("theta", theta), ("lambda", lam)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name!r}")
    params = ModelParams(m=float(data["m"]), h=float(data["h"]), mu=float(data["mu"]))
    return DiscreteState(rho, theta, lam), params


def save_state(path, state: DiscreteState, params: ModelParams, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(state_to_json(state, params, extra))
    return path


def load_state(path) -> tuple[DiscreteState, ModelParams]:
    return state_from_json(Path(path).read_text())
