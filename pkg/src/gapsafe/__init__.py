"""Sparse generalized linear models with Gap Safe screening.

Solves ``min_beta sum_i f_i(x_i^T beta) + lambda * Omega(beta)`` by block
coordinate descent for quadratic, logistic, multi-task and multinomial
losses with l1, group (l1/l2) and Sparse-Group Lasso penalties, discarding
variables that are provably zero at the optimum.
"""

from .core import (
    DegenerateProblemError, DesignMatrix, DimensionError, DivergenceError,
    GapSafeError, GroupPartition, InfeasibleDualError, UnsupportedRuleError,
    spectral_norm,
)
from .losses import (
    Logistic, MultiTaskQuadratic, Multinomial, Quadratic, gap, lambda_max,
    make_loss, primal_objective,
)
from .path import PathConfig, PathResult, WarmStart, make_grid, run_path
from .penalties import L1, L1L2, SparseGroupLasso, eps_norm, make_penalty
from .screening import ActiveSet, RuleKind, SafeSphere
from .solver import SolverConfig, SolveResult, solve

__version__ = "0.1.0"

__all__ = [
    "ActiveSet", "DegenerateProblemError", "DesignMatrix", "DimensionError",
    "DivergenceError", "GapSafeError", "GroupPartition", "InfeasibleDualError",
    "L1", "L1L2", "Logistic", "MultiTaskQuadratic", "Multinomial", "PathConfig",
    "PathResult", "Quadratic", "RuleKind", "SafeSphere", "SolveResult",
    "SolverConfig", "SparseGroupLasso", "UnsupportedRuleError", "WarmStart",
    "eps_norm", "gap", "lambda_max", "make_grid", "make_loss", "make_penalty",
    "primal_objective", "run_path", "solve", "spectral_norm",
]
