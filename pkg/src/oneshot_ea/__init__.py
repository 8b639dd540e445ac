"""Smoothed min-/max-entropies by semidefinite programming and one-shot
entanglement-assisted capacity bounds for finite-dimensional channels."""

from .capacity import (
    BoundReport,
    asymptotic_capacity,
    channel_output_state,
    eac_bounds,
    eaq_bounds,
    father_resources,
    n_copy_trend,
    optimize_input,
    solve_eps_relations,
)
from .channels import KrausChannel, make_channel
from .entropy import (
    EntropyResult,
    conditional_entropy,
    h_max_cond,
    h_max_smooth,
    h_min_cond,
    h_min_smooth,
    mutual_information,
    von_neumann,
)
from .errors import DomainError, LayoutError, OneShotError, SizeError, SolverError
from .mathcore import SystemLayout
from .states import DensityOperator, PureState

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DensityOperator",
    "DomainError",
    "EntropyResult",
    "KrausChannel",
    "LayoutError",
    "OneShotError",
    "PureState",
    "SizeError",
    "SolverError",
    "SystemLayout",
    "asymptotic_capacity",
    "channel_output_state",
    "conditional_entropy",
    "eac_bounds",
    "eaq_bounds",
    "father_resources",
    "h_max_cond",
    "h_max_smooth",
    "h_min_cond",
    "h_min_smooth",
    "make_channel",
    "mutual_information",
    "n_copy_trend",
    "optimize_input",
    "solve_eps_relations",
    "von_neumann",
]
