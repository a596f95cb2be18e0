"""Least-trimmed-squares regression by branch and bound.

Exact solvers (exhaustive and monotone-bound branch and bound) and a
near-exact accelerated search that adds conic relaxation bounds at the
top levels of the subset enumeration tree, plus the supporting kernels:
incremental least squares, residual-cap estimation, node relaxations,
concentration steps and a synthetic benchmark generator.
"""

from .caps import PiBound, estimate_pi, v_supergradient
from .csteps import Incumbent, c_steps
from .datagen import Contamination, GenSpec, GroundTruth, InvalidSpec, benchmark_suite, generate
from .lsq import (Dataset, FitState, RankDeficient, lts_objective, ols_fit,
                  rank_one_add, rss_increment, wls_value)
from .relaxation import (RelaxationProblem, RelaxationResult, RelaxStatus,
                         build_node_problem, check_consistency, solve_relaxation)
from .solver import (InfeasibleConfig, IncumbentTracker, RankDeficientData,
                     SolveMode, SolveReport, SolverConfig, default_coverage,
                     solve, update_incumbent)
from .tree import ChildOrder, NodeState, TraversalStats, children, dfs, leaves_below

__version__ = "0.1.0"

__all__ = [
    "ChildOrder", "Contamination", "Dataset", "FitState", "GenSpec",
    "GroundTruth", "Incumbent", "IncumbentTracker", "InfeasibleConfig",
    "InvalidSpec", "NodeState", "PiBound", "RankDeficient",
    "RankDeficientData", "RelaxStatus", "RelaxationProblem",
    "RelaxationResult", "SolveMode", "SolveReport", "SolverConfig",
    "TraversalStats", "benchmark_suite", "build_node_problem", "c_steps",
    "check_consistency", "children", "default_coverage", "dfs",
    "estimate_pi", "generate", "leaves_below", "lts_objective", "ols_fit",
    "rank_one_add", "rss_increment", "solve", "solve_relaxation",
    "update_incumbent", "v_supergradient", "wls_value",
]
