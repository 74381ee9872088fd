"""Regularization paths over a decreasing lambda grid with warm starts."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import GapSafeError, _as_design
from .losses import lambda_max as compute_lambda_max
from .screening import RuleKind
from .solver import SolverConfig, solve

logger = logging.getLogger(__name__)


class WarmStart(str, enum.Enum):
    PLAIN = "plain"
    ACTIVE = "active"
    STRONG = "strong"


def make_grid(lambda_max, n_lambdas, delta):
    """``lambda_max * 10 ** (-delta * t / (n_lambdas - 1))`` for ``t = 0..n_lambdas-1``.

    ``delta`` is the number of decades spanned.
    """
    if n_lambdas < 2:
        raise ValueError("a grid needs at least 2 points")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    t = np.arange(n_lambdas)
    grid = lambda_max * 10.0 ** (-delta * t / (n_lambdas - 1))
    grid[0] = lambda_max
    return grid


@dataclass
class PathConfig:
    """Grid and warm-start options.

    Give either ``lambdas`` (strictly decreasing) or ``n_lambdas`` and
    ``delta``; the latter grid starts at lambda_max.
    """

    lambdas: np.ndarray | None = None
    n_lambdas: int = 100
    delta: float = 3.0
    warm_start: WarmStart = WarmStart.PLAIN
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.warm_start = WarmStart(self.warm_start)
        if self.lambdas is not None:
            lams = np.asarray(self.lambdas, dtype=np.float64).ravel()
            if lams.size == 0 or np.any(lams <= 0):
                raise ValueError("lambdas must be positive")
            if np.any(np.diff(lams) >= 0):
                raise ValueError("lambdas must be strictly decreasing")
            self.lambdas = lams

    def grid(self, lambda_max):
        if self.lambdas is not None:
            return self.lambdas.copy()
        return make_grid(lambda_max, self.n_lambdas, self.delta)


@dataclass
class PathResult:
    lambdas: np.ndarray
    lambda_max: float
    results: list
    wall_ms: list
    warm_sizes: list
    errors: list
    rule: str
    warm_start: str

    @property
    def converged(self):
        return all(r.converged for r in self.results)

    @property
    def objectives(self):
        return np.array([r.primal for r in self.results])

    def __len__(self):
        return len(self.results)


def _warm_solve(model, pen, X, lam, beta, mode, cfg, prev_res, prev_lam):
    """One grid point; returns the result and the restriction size used."""
    if prev_res is None or mode is WarmStart.PLAIN:
        return solve(model, pen, X, lam, beta, cfg), None
    if mode is WarmStart.ACTIVE:
        pre_cfg = cfg if cfg.rule.is_safe and cfg.rule is not RuleKind.DST3 else \
            replace(cfg, rule=RuleKind.DYNAMIC)
        pre = solve(model, pen, X, lam, beta, pre_cfg, restrict=prev_res.active)
        size = prev_res.active.n_groups
    else:
        pre = solve(model, pen, X, lam, beta, replace(cfg, rule=RuleKind.STRONG),
                    prev=(prev_res.theta, prev_lam))
        size = pre.active.n_groups
    res = solve(model, pen, X, lam, pre.beta, cfg)
    res.epochs += pre.epochs
    return res, size


def run_path(model, pen, X, config=None):
    """Solve along the grid, warm-starting each point from the previous one.

    Every returned point carries a gap certificate on the full problem.  A
    point whose solve raises is retried with a plain warm start and the
    error is recorded in ``errors``.
    """
    X = _as_design(X)
    config = PathConfig() if config is None else config
    lmax = compute_lambda_max(model, pen, X)
    grid = config.grid(lmax)
    cfg = config.solver
    beta = None
    prev_res = prev_lam = None
    results, wall, sizes, errors = [], [], [], []
    for lam in grid:
        start = time.perf_counter()
        try:
            res, size = _warm_solve(model, pen, X, float(lam), beta, config.warm_start,
                                    cfg, prev_res, prev_lam)
        except (GapSafeError, ArithmeticError) as exc:
            logger.warning("lambda=%.6g: %s; retrying with a plain warm start", lam, exc)
            errors.append((float(lam), repr(exc)))
            res, size = solve(model, pen, X, float(lam), beta, cfg), None
        wall.append(1e3 * (time.perf_counter() - start))
        results.append(res)
        sizes.append(size)
        beta, prev_res, prev_lam = res.beta, res, float(lam)
    return PathResult(grid, lmax, results, wall, sizes, errors,
                      cfg.rule.value, config.warm_start.value)


__all__ = ["WarmStart", "PathConfig", "PathResult", "make_grid", "run_path"]
