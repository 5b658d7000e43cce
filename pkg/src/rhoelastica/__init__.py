"""Equilibria and bifurcations of closed planar elastic curves whose bending
stiffness depends on a conserved density."""

from .bifurcation import BifurcationInfo, Case, classify, first_bifurcating_case
from .continuation import Branch, BranchPoint, ContinuationOptions, continue_branch, run_branch, start_branch
from .discretization import DiscreteState, Grid, discrete_energy, jacobian, residual
from .model import BetaFloor, ModelParams
from .perturbation import expansion, predictor
from .solver import NewtonOptions, SolveResult, newton_solve

__all__ = [
    "BetaFloor",
    "BifurcationInfo",
    "Branch",
    "BranchPoint",
    "Case",
    "ContinuationOptions",
    "DiscreteState",
    "Grid",
    "ModelParams",
    "NewtonOptions",
    "SolveResult",
    "classify",
    "continue_branch",
    "discrete_energy",
    "expansion",
    "first_bifurcating_case",
    "jacobian",
    "newton_solve",
    "predictor",
    "residual",
    "run_branch",
    "start_branch",
]
