"""Reference optimizers and multi-objective machinery."""
from .acquisition import expected_improvement, log_expected_improvement, norm_cdf, norm_pdf
from .bo import BoParams, bo_optimize
from .common import (
    MOO,
    SOO,
    Budget,
    BudgetExhausted,
    EvalLogEntry,
    Objective,
    OptimizeResult,
    Outcome,
    Recorder,
    assess,
    best_entry,
    best_so_far,
    better,
)
from .de import DeParams, de_optimize
from .gp import GpModel, GpOptions, gp_fit
from .hypervolume import HvResult, IncrementalHv, hypervolume, hypervolume_exact, hypervolume_mc
from .nsga2 import HvTracker, Nsga2Params, hv_curve, nsga2_optimize
from .pareto import ParetoArchive, crowding_distance, dominates, nondominated_sort
from .random_search import random_search

__all__ = [
    "expected_improvement", "log_expected_improvement", "norm_cdf", "norm_pdf",
    "BoParams", "bo_optimize", "MOO", "SOO", "Budget", "BudgetExhausted", "EvalLogEntry",
    "Objective", "OptimizeResult", "Outcome", "Recorder", "assess", "best_entry",
    "best_so_far", "better", "DeParams", "de_optimize", "GpModel", "GpOptions", "gp_fit",
    "HvResult", "IncrementalHv", "hypervolume", "hypervolume_exact", "hypervolume_mc",
    "HvTracker", "Nsga2Params", "hv_curve", "nsga2_optimize", "ParetoArchive",
    "crowding_distance", "dominates", "nondominated_sort", "random_search",
]
