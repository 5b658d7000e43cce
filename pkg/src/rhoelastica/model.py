"""Stiffness model, normalized constants and the trivial circle state.

All quantities use the normalization L = M = 2*pi, rho0 = kappa0 = beta0 = 1,
so the stiffness reduces to ``beta(rho) = 1 + m (rho - 1) + h/2 (rho - 1)**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .discretization import DiscreteState

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    """Stiffness coefficients and regularization weight.

    Parameters
    ----------
    m : float
        Slope of the stiffness at the reference density.
    h : float
        Curvature of the stiffness at the reference density.
    mu : float
        Weight of the density-gradient penalty. Must be non-negative; zero is
        only meaningful for analytic evaluation.
    """

    m: float
    h: float
    mu: float = 1.0

    # fixed by the normalization, exposed read-only for readability
    L: float = TWO_PI
    M: float = TWO_PI
    rho0: float = 1.0
    kappa0: float = 1.0
    beta0: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.m) and np.isfinite(self.h) and np.isfinite(self.mu)):
            raise ValueError(f"non-finite model parameters: m={self.m}, h={self.h}, mu={self.mu}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if (self.L, self.M, self.rho0, self.kappa0, self.beta0) != (TWO_PI, TWO_PI, 1.0, 1.0, 1.0):
            raise ValueError("normalization constants are fixed (L = M = 2 pi, rho0 = kappa0 = beta0 = 1)")

    def with_mu(self, mu: float) -> "ModelParams":
        return replace(self, mu=float(mu))


@dataclass(frozen=True)
class BetaFloor:
    """Lower bound below which the stiffness counts as degenerate."""

    floor: float = 1e-8

    def __post_init__(self):
        if not self.floor > 0:
            raise ValueError(f"beta floor must be positive, got {self.floor}")


def beta(rho, params: ModelParams):
    d = np.asarray(rho, dtype=float) - 1.0
    out = 1.0 + params.m * d + 0.5 * params.h * d * d
    return float(out) if out.ndim == 0 else out


def beta_prime(rho, params: ModelParams):
    d = np.asarray(rho, dtype=float) - 1.0
    out = params.m + params.h * d
    return float(out) if out.ndim == 0 else out


def beta_double_prime(rho, params: ModelParams):
    r = np.asarray(rho, dtype=float)
    out = np.full_like(r, params.h, dtype=float)
    return float(out) if out.ndim == 0 else out


def trivial_multipliers(params: ModelParams) -> np.ndarray:
    """``(lambda_M, lambda_x, lambda_y)`` of the circle with uniform density."""
    lam_m = -0.5 * beta_prime(params.rho0, params) * params.kappa0**2
    return np.array([lam_m, 0.0, 0.0])


def trivial_state(params: ModelParams):
    """Return ``(rho0_fn, theta0_fn, lambdas)`` for the uniform circle."""

    def rho0_fn(s):
        return np.ones_like(np.asarray(s, dtype=float))

    def theta0_fn(s):
        return np.asarray(s, dtype=float).copy()

    return rho0_fn, theta0_fn, trivial_multipliers(params)


def symmetry_transform(state: "DiscreteState", params: ModelParams):
    """Map a state for ``(m, h)`` onto the mirrored state for ``(-m, h)``.

    The density is reflected about the reference value, ``rho -> 2 - rho``;
    for the quadratic model ``beta(2 - rho)`` is exactly the ``(-m, h)``
    stiffness. Applying the map twice is the identity.
    """
    from .discretization import DiscreteState

    lam = np.array(state.lam, dtype=float)
    lam[0] = -lam[0]
    new_state = DiscreteState(
        rho=2.0 * params.rho0 - np.asarray(state.rho, dtype=float),
        theta=np.array(state.theta, dtype=float),
        lam=lam,
    )
    return new_state, replace(params, m=-params.m)
