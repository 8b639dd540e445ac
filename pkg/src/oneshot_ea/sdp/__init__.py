"""Semidefinite programming: an interior-point solver and a small modelling layer."""

from .expr import AffineExpr, Problem, SdpSolution, bmat, kron, trace
from .fidelity import fidelity_constraint_block, fidelity_sdp
from .solver import STATUSES, Block, InteriorPointSolver, SolverResult, solve_standard

__all__ = [
    "AffineExpr",
    "Block",
    "InteriorPointSolver",
    "Problem",
    "STATUSES",
    "SdpSolution",
    "SolverResult",
    "bmat",
    "fidelity_constraint_block",
    "fidelity_sdp",
    "kron",
    "solve_standard",
    "trace",
]
