"""Fair matching of jobs to workers in a two-sided market.

Inequality measures over worker return rates, an exact enumeration solver
and a projected-gradient augmented Lagrangian solver, a Shor SDP exporter,
and seeded experiment drivers.
"""
from .errors import MarketError
from .market import Assignment, Batch, MarketState, WorkerState, step
from .metrics import InterKind, IntraKind, ReturnRateProfile, SubgroupPartition, inter, intra
from .objective import ObjectiveConfig, PenaltyConfig, augmented_lagrangian, natural_objective
from .solvers import AugLagSettings, SolveResult, solve_auglag, solve_exact

__version__ = "0.1.0"

__all__ = [
    "MarketError",
    "Assignment",
    "Batch",
    "MarketState",
    "WorkerState",
    "step",
    "InterKind",
    "IntraKind",
    "ReturnRateProfile",
    "SubgroupPartition",
    "inter",
    "intra",
    "ObjectiveConfig",
    "PenaltyConfig",
    "augmented_lagrangian",
    "natural_objective",
    "AugLagSettings",
    "SolveResult",
    "solve_auglag",
    "solve_exact",
]
