"""Block coordinate descent with interleaved Gap Safe screening.

Every ``screen_every`` epochs the solver rebuilds a feasible dual point from
the current residual, checks the duality gap against the (scaled) target,
and, for the dynamic rules, shrinks the active set with a fresh safe sphere.
Between checks it runs cyclic proximal block updates over the active groups.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import softmax

from . import _kernels
from .core import DivergenceError, UnsupportedRuleError, _as_design
from .losses import Multinomial, Quadratic, lambda_max
from .penalties import SparseGroupLasso
from .screening import (
    GAP_ROUNDING, ActiveSet, RuleKind, SafeSphere, active_set_from_sphere,
    correlations, dst3_normal, dst3_sphere, gap_safe_radius, kkt_postcheck,
    kkt_tolerance, sis_rule, static_rule, strong_rule,
)

logger = logging.getLogger(__name__)

MAX_KKT_ROUNDS = 20


@dataclass
class SolverConfig:
    """Stopping, screening and bookkeeping options for :func:`solve`.

    ``eps`` is multiplied by the loss-specific scale unless ``scale_eps`` is
    False.  ``kkt_eps`` (Strong/SIS only) defaults to the quadratic-loss
    bound from the approximate KKT conditions, and to 0 for other losses.
    """

    eps: float = 1e-6
    max_epochs: int = 10_000
    screen_every: int = 10
    rule: RuleKind = RuleKind.DYNAMIC
    scale_eps: bool = True
    shuffle: bool = False
    seed: int | None = None
    record_spheres: bool = False
    kkt_eps: float | None = None
    sis_threshold: float | None = None
    callback: object = None

    def __post_init__(self):
        self.rule = RuleKind(self.rule)
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_epochs < 1 or self.screen_every < 1:
            raise ValueError("max_epochs and screen_every must be >= 1")


@dataclass
class ScreeningEvent:
    epoch: int
    kind: str
    active_groups: int
    active_features: int
    radius: float
    gap: float
    center: np.ndarray | None = None


@dataclass
class SolveResult:
    beta: np.ndarray
    theta: np.ndarray
    gap: float
    primal: float
    dual: float
    epochs: int
    converged: bool
    lam: float
    eps: float
    active: ActiveSet
    trace: list = field(default_factory=list)
    kkt_rounds: int = 0


def lipschitz_constants(model, pen, X):
    """Per-group Lipschitz constants of the block gradients."""
    L = X.group_spectral_norms(pen.partition) ** 2
    if model.code == _kernels.LOSS_LOGISTIC:
        L = L / 4.0
    return L


class _State:
    """Mutable iterate of one solve: coefficients, predictor, softmax cache."""

    def __init__(self, model, X, B):
        self.model = model
        self.X = X
        self.B = B
        self.Y = np.ascontiguousarray(model.y2d)
        self.refresh()

    def refresh(self):
        self.Z = np.ascontiguousarray(self.X.matvec(self.B))
        if isinstance(self.model, Multinomial):
            self.P = softmax(self.Z, axis=1)
        else:
            self.P = np.empty((0, 0))

    def z_model(self):
        return self.Z.reshape(self.model.y.shape)


def scaled_tolerance(model, eps, scale=True):
    """Stopping tolerance on the duality gap."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return model.scaled_tolerance(eps) if scale else eps


def _evaluate(model, pen, X, state, lam, groups):
    """Feasible dual point, objectives and gap, with the dual norm over ``groups``."""
    z = state.z_model()
    G = model.gradient_map(z)
    feats = np.flatnonzero(groups[pen.partition.feature_group])
    xi = correlations(X, G, feats)
    norms = pen.group_dual_norms(xi)[groups]
    alpha = max(lam, float(norms.max()) if norms.size else 0.0)
    theta = -G / alpha
    primal = model.fit_value(z) + lam * pen.value(state.B.reshape(_beta_shape(model, X)))
    # raises InfeasibleDualError if theta left the conjugate domain
    dual = model.conjugate_sum(theta, lam)
    if not np.isfinite(primal):
        raise DivergenceError("non-finite primal objective")
    return theta, -xi / alpha, primal, dual


def _beta_shape(model, X):
    return (X.p,) if model.y.ndim == 1 else (X.p, model.n_outputs)


def _apply_screening(state, X, new_active, old_active):
    dropped = np.flatnonzero(old_active.feature_active & ~new_active.feature_active)
    nz = dropped[np.any(state.B[dropped] != 0, axis=1)]
    if nz.size:
        state.B[nz] = 0.0
        state.refresh()


def solve(model, pen, X, lam, beta0=None, config=None, restrict=None, prev=None):
    """Minimize ``F(beta) + lam * Omega(beta)``.

    Parameters
    ----------
    model : LossModel
    pen : Penalty
    X : DesignMatrix or array_like
    lam : float
        Regularization strength, positive.
    beta0 : ndarray, optional
        Warm start of shape (p,) or (p, q).
    config : SolverConfig, optional
    restrict : ActiveSet, optional
        Solve the problem with coefficients outside this set fixed at 0.
        Gap and screening then refer to that restricted problem.
    prev : tuple (theta_prev, lam_prev), optional
        Dual point at a previous, larger lambda; used by the strong rule.
        Defaults to the exact dual optimum at lambda_max.

    Returns
    -------
    SolveResult
    """
    X = _as_design(X)
    config = SolverConfig() if config is None else config
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if model.y.shape[0] != X.n:
        raise ValueError("design and target have different sample counts")
    if isinstance(pen, SparseGroupLasso) and model.y.ndim != 1:
        raise UnsupportedRuleError("the Sparse-Group Lasso is for single-output losses")
    if pen.partition.p != X.p:
        raise ValueError("penalty partition does not match the number of features")
    if config.rule in (RuleKind.STRONG, RuleKind.SIS):
        return _solve_with_kkt(model, pen, X, lam, beta0, config, restrict, prev)
    return _solve_safe(model, pen, X, lam, beta0, config, restrict)


def _solve_safe(model, pen, X, lam, beta0, config, restrict):
    part = pen.partition
    q = model.n_outputs
    rule = config.rule
    eps = scaled_tolerance(model, config.eps, config.scale_eps)
    B = np.zeros((X.p, q))
    if beta0 is not None:
        b0 = np.asarray(beta0, dtype=np.float64)
        if b0.size != X.p * q:
            raise ValueError(f"beta0 must have {X.p * q} entries")
        B[:] = b0.reshape(X.p, q)

    problem = ActiveSet.full(part) if restrict is None else restrict.copy()
    active = problem.copy()
    B[~active.feature_active] = 0.0
    state = _State(model, X, B)
    lips = lipschitz_constants(model, pen, X)
    rng = np.random.default_rng(config.seed)
    trace = []
    dense, Xd, data, indices, indptr = X.kernel_args()
    gidx, gptr = part.group_idx, part.group_ptr
    normal = dst3_normal(model, pen, X) if rule is RuleKind.DST3 else None
    if rule is RuleKind.DST3 and restrict is not None:
        raise UnsupportedRuleError("DST3 is defined for the unrestricted problem only")

    def record(epoch, kind, radius, gap_value, center):
        trace.append(ScreeningEvent(
            epoch, kind, active.n_groups, active.n_features, radius, gap_value,
            center.copy() if config.record_spheres else None))

    if rule is RuleKind.STATIC:
        sphere = static_rule(model, pen, X, lam)
        new = active_set_from_sphere(pen, X, sphere, restrict=active)
        _apply_screening(state, X, new, active)
        active = new
        record(0, "static", sphere.radius, np.nan, sphere.center)

    def sphere_at(theta, xi, primal, dual, gap_value):
        if rule is RuleKind.DST3:
            return dst3_sphere(model, pen, X, lam, theta.reshape(model.y.shape), normal), None
        radius = gap_safe_radius(gap_value + GAP_ROUNDING * (abs(primal) + abs(dual)),
                                 model.gamma, lam)
        return SafeSphere(theta, radius, lam), xi

    dynamic = rule is RuleKind.DYNAMIC or rule is RuleKind.DST3
    full_eval = False
    converged = False
    epoch = 0
    theta = primal = dual = gap_value = None
    while True:
        at_check = epoch % config.screen_every == 0 or epoch == config.max_epochs
        if at_check:
            groups = problem.group_active if full_eval else active.group_active
            theta, xi, primal, dual = _evaluate(model, pen, X, state, lam, groups)
            gap_value = max(primal - dual, 0.0)
            if config.callback is not None:
                config.callback(epoch, state.B, theta, gap_value)
            if gap_value <= eps and not full_eval and not np.array_equal(
                    active.group_active, problem.group_active):
                # the certificate must hold on the whole problem, not only
                # on the surviving groups
                theta, xi, primal, dual = _evaluate(
                    model, pen, X, state, lam, problem.group_active)
                gap_value = max(primal - dual, 0.0)
                full_eval = True
            converged = bool(gap_value <= eps)
            if converged or epoch == config.max_epochs:
                if dynamic:
                    # report the tightest active set; beta is left untouched so
                    # the certificate stays valid, hence the set is only kept
                    # when it drops no nonzero coefficient
                    sphere, xi_c = sphere_at(theta, xi, primal, dual, gap_value)
                    new = active_set_from_sphere(pen, X, sphere, restrict=active, xi=xi_c)
                    dropped = active.feature_active & ~new.feature_active
                    if not np.any(state.B[dropped] != 0):
                        active = new
                        record(epoch, "final", sphere.radius, gap_value, sphere.center)
                break
            if dynamic or (rule is RuleKind.SEQUENTIAL and epoch == 0):
                sphere, xi_c = sphere_at(theta, xi, primal, dual, gap_value)
                new = active_set_from_sphere(pen, X, sphere, restrict=active, xi=xi_c)
                _apply_screening(state, X, new, active)
                active = new
                record(epoch, rule.value if epoch else _first_kind(rule),
                       sphere.radius, gap_value, sphere.center)
        order = active.groups
        if config.shuffle:
            order = rng.permutation(order)
        _kernels.bcd_epoch(dense, Xd, data, indices, indptr, model.code,
                           state.Y, state.Z, state.P, state.B, gidx, gptr,
                           order, active.feature_active, lips, float(lam),
                           pen.kind, float(pen.tau), pen.weights)
        epoch += 1
        if not np.all(np.isfinite(state.Z)):
            raise DivergenceError(f"non-finite predictor after epoch {epoch}")

    shape = _beta_shape(model, X)
    return SolveResult(
        beta=state.B.reshape(shape).copy(), theta=theta.reshape(model.y.shape),
        gap=gap_value, primal=primal, dual=dual, epochs=epoch,
        converged=converged, lam=lam, eps=eps, active=active, trace=trace)


def _first_kind(rule):
    return "sequential" if rule in (RuleKind.SEQUENTIAL, RuleKind.DYNAMIC) else rule.value


def _default_kkt_eps(model, pen, X, beta, lam, eps):
    if isinstance(model, Quadratic) and model.y.ndim == 1:
        return kkt_tolerance(model, pen, X, beta, lam, eps)
    return 0.0


def _solve_with_kkt(model, pen, X, lam, beta0, config, restrict, prev):
    """Unsafe screening (strong rule or SIS) followed by KKT repair rounds."""
    part = pen.partition
    problem = ActiveSet.full(part) if restrict is None else restrict
    if config.rule is RuleKind.STRONG:
        if prev is None:
            lmax = lambda_max(model, pen, X)
            g0 = model.gradient_map(np.zeros_like(model.y))
            prev = (-g0 / lmax, lmax)
        theta_prev, lam_prev = prev
        kept = strong_rule(pen, X, theta_prev, min(lam, lam_prev), lam_prev)
    else:
        if not isinstance(model, Quadratic):
            raise UnsupportedRuleError("SIS is defined for quadratic losses")
        threshold = lam if config.sis_threshold is None else config.sis_threshold
        kept = sis_rule(pen, X, model.y, threshold)
    kept = kept & problem
    inner = replace(config, rule=RuleKind.NONE)
    beta = beta0
    rounds = 0
    epochs = 0
    eps = scaled_tolerance(model, config.eps, config.scale_eps)
    for rounds in range(1, MAX_KKT_ROUNDS + 1):
        res = _solve_safe(model, pen, X, lam, beta, inner, kept)
        epochs += res.epochs
        beta = res.beta
        z = X.matvec(beta)
        resid = -model.gradient_map(z) / lam
        discarded = problem.group_active & ~kept.group_active
        tol = config.kkt_eps
        if tol is None:
            tol = _default_kkt_eps(model, pen, X, beta, lam, eps)
        viol = kkt_postcheck(model, pen, X, beta, resid, discarded, tol)
        if viol.size == 0:
            break
        mask = kept.group_active.copy()
        mask[viol] = True
        kept = ActiveSet.from_groups(part, mask) & problem
    else:
        logger.warning("KKT repair did not settle after %d rounds", MAX_KKT_ROUNDS)
    final = _solve_safe(model, pen, X, lam, beta, inner, restrict)
    final.epochs += epochs
    final.kkt_rounds = rounds
    # the full solve may move coefficients outside the kept set
    nz = np.any(final.beta.reshape(X.p, -1) != 0, axis=1)
    mask = kept.group_active.copy()
    mask[part.feature_group[nz]] = True
    final.active = ActiveSet.from_groups(part, mask) & problem
    return final


__all__ = ["SolverConfig", "SolveResult", "ScreeningEvent", "solve",
           "scaled_tolerance", "lipschitz_constants"]
