"""Safe regions in the dual and the screening rules built on them.

A screening rule discards a group ``g`` whenever the worst case of
``Omega_g^D(X_g^T theta)`` over a region known to contain the dual optimum
stays below 1.  With a sphere ``B(c, r)`` the worst case is bounded by
``Omega_g^D(X_g^T c) + r Omega_g^D(X_g)``.  The Sparse-Group Lasso uses a
sharper two-level bound (whole groups, then single features).

Strong rules and SIS are included for comparison; they are not safe and
the solver pairs them with a KKT post-check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import UnsupportedRuleError, _as_design
from .losses import Quadratic, lambda_max, primal_objective
from .losses import gap as duality_gap
from .penalties import SparseGroupLasso, soft_threshold

# Screening tests are strict; a value this close to the threshold keeps the
# variable.
BOUNDARY_TOL = 1e-15
# Relative rounding allowance added to a computed gap before it becomes a
# radius, so that cancellation in P - D cannot shrink the sphere.
GAP_ROUNDING = 4.0 * np.finfo(float).eps


class RuleKind(str, enum.Enum):
    NONE = "none"
    STATIC = "static"
    SEQUENTIAL = "gap-sequential"
    DYNAMIC = "gap-dynamic"
    DST3 = "dst3"
    STRONG = "strong"
    SIS = "sis"

    @property
    def is_safe(self):
        return self not in (RuleKind.STRONG, RuleKind.SIS)


@dataclass
class SafeSphere:
    """Ball ``B(center, radius)`` in the dual certified to hold the optimum at ``lam``."""

    center: np.ndarray
    radius: float
    lam: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError("radius must be nonnegative")


@dataclass
class ActiveSet:
    """Surviving groups and features.  Features of inactive groups are inactive."""

    group_active: np.ndarray
    feature_active: np.ndarray

    @classmethod
    def full(cls, partition):
        return cls(np.ones(partition.n_groups, dtype=bool),
                   np.ones(partition.p, dtype=bool))

    @classmethod
    def from_groups(cls, partition, group_mask):
        group_mask = np.asarray(group_mask, dtype=bool).copy()
        return cls(group_mask, group_mask[partition.feature_group])

    def copy(self):
        return ActiveSet(self.group_active.copy(), self.feature_active.copy())

    def __and__(self, other):
        return ActiveSet(self.group_active & other.group_active,
                         self.feature_active & other.feature_active)

    @property
    def n_groups(self):
        return int(self.group_active.sum())

    @property
    def n_features(self):
        return int(self.feature_active.sum())

    @property
    def groups(self):
        return np.flatnonzero(self.group_active)

    @property
    def features(self):
        return np.flatnonzero(self.feature_active)


def gap_safe_radius(gap, gamma, lam):
    """``sqrt(2 gap / (gamma lam^2))`` with a negative gap clamped to 0."""
    return float(np.sqrt(2.0 * max(gap, 0.0) / (gamma * lam ** 2)))


def correlations(X, theta, features=None):
    """``X^T theta`` as a (p,) or (p, q) array; rows outside ``features`` are 0."""
    X = _as_design(X)
    theta = np.asarray(theta, dtype=np.float64)
    if features is None:
        return X.rmatvec(theta)
    out = np.zeros((X.p,) + theta.shape[1:])
    if len(features):
        out[features] = X.rmatvec(theta, features)
    return out


def dual_scale(z, pen, X, restrict=None):
    """Rescale ``z`` into the dual feasible set.

    Returns ``(theta, alpha)`` with ``alpha = max(1, Omega^D(X^T z))`` and
    ``theta = z / alpha``.  With ``restrict`` (a safe ``ActiveSet``) the dual
    norm is evaluated on the surviving groups only.
    """
    feats = None if restrict is None else restrict.features
    xi = correlations(X, z, feats)
    norm = pen.dual_norm_global(xi, restrict)
    alpha = max(1.0, norm)
    return np.asarray(z, dtype=np.float64) / alpha, alpha


def gap_safe_sphere(model, pen, X, beta, theta, lam, gap_value=None):
    """Sphere centred at ``theta`` with the Gap Safe radius."""
    if gap_value is None:
        gap_value = duality_gap(model, pen, X, beta, theta, lam)
    return SafeSphere(np.asarray(theta, dtype=np.float64),
                      gap_safe_radius(gap_value, model.gamma, lam), lam)


def _screen(pen, X, xi, radius, active):
    """Apply the sphere test with centre correlations ``xi = X^T c``."""
    X = _as_design(X)
    part = pen.partition
    if isinstance(pen, SparseGroupLasso):
        return _screen_sgl(pen, X, xi, radius, active)
    bound = pen.group_dual_norms(xi) + radius * pen.operator_norms(X)
    keep = bound >= 1.0 - BOUNDARY_TOL
    if active is not None:
        keep &= active.group_active
    return ActiveSet.from_groups(part, keep)


def _screen_sgl(pen, X, xi, radius, active):
    part = pen.partition
    tau = pen.tau
    xi = np.ravel(xi)
    col_norms = X.column_norms()
    sigma = X.group_spectral_norms(part)
    feat_keep = np.abs(xi) + radius * col_norms >= tau - BOUNDARY_TOL
    starts = part.group_ptr[:-1]
    axg = np.abs(xi[part.group_idx])
    ninf = np.maximum.reduceat(axg, starts)
    st_norm = np.sqrt(np.add.reduceat(np.maximum(axg - tau, 0.0) ** 2, starts))
    t_g = np.where(ninf > tau, st_norm + radius * sigma,
                   np.maximum(ninf + radius * sigma - tau, 0.0))
    group_keep = t_g >= (1.0 - tau) * part.weights - BOUNDARY_TOL
    if active is not None:
        group_keep &= active.group_active
        feat_keep &= active.feature_active
    feat_keep &= group_keep[part.feature_group]
    # a group whose features are all screened is zero as well
    has_feature = np.zeros(part.n_groups, dtype=bool)
    has_feature[part.feature_group[feat_keep]] = True
    group_keep &= has_feature
    return ActiveSet(group_keep, feat_keep)


def active_set_from_sphere(pen, X, sphere, restrict=None, xi=None):
    """Groups (and, for the Sparse-Group Lasso, features) the sphere cannot discard."""
    if xi is None:
        feats = None if restrict is None else restrict.features
        xi = correlations(X, sphere.center, feats)
    return _screen(pen, X, xi, sphere.radius, restrict)


def sphere_test(pen, X, sphere, g):
    """True when group ``g`` is provably zero (screened out)."""
    X = _as_design(X)
    if isinstance(pen, SparseGroupLasso):
        return sgl_two_level_test(pen, X, sphere, g)[0]
    xi_g = X.rmatvec(sphere.center, pen.partition[g])
    value = pen.dual_norm_group(g, xi_g) + sphere.radius * pen.operator_norms(X)[g]
    return bool(value < 1.0 - BOUNDARY_TOL)


def sgl_two_level_test(pen, X, sphere, g):
    """Group- and feature-level tests for the Sparse-Group Lasso.

    Returns ``(screen_group, screened_features)`` where the features are
    global indices of group ``g``.
    """
    if not isinstance(pen, SparseGroupLasso):
        raise TypeError("the two-level test needs a SparseGroupLasso penalty")
    X = _as_design(X)
    cols = pen.partition[g]
    tau = pen.tau
    r = sphere.radius
    xg = np.ravel(X.rmatvec(sphere.center, cols))
    ninf = np.abs(xg).max()
    sigma = X.group_spectral_norms(pen.partition)[g]
    if ninf > tau:
        t_g = np.linalg.norm(soft_threshold(xg, tau)) + r * sigma
    else:
        t_g = max(ninf + r * sigma - tau, 0.0)
    screen_group = bool(t_g < (1.0 - tau) * pen.weights[g] - BOUNDARY_TOL)
    feat = np.abs(xg) + r * X.column_norms()[cols] < tau - BOUNDARY_TOL
    return screen_group, cols[feat]


def static_rule(model, pen, X, lam):
    """Sphere centred at ``-G(0) / lambda_max`` with the Gap Safe radius of ``beta = 0``.

    For ``lam >= lambda_max`` the centre is the exact dual optimum and the
    radius is 0 up to the rounding allowance.
    """
    X = _as_design(X)
    lmax = lambda_max(model, pen, X)
    g0 = model.gradient_map(np.zeros_like(model.y))
    center = -g0 / max(lam, lmax)
    beta0 = np.zeros((X.p,) + model.y.shape[1:])
    gap_value = duality_gap(model, pen, X, beta0, center, lam)
    p_val = model.fit_value(np.zeros_like(model.y))
    gap_value += GAP_ROUNDING * (abs(p_val) + abs(p_val - gap_value))
    return SafeSphere(center, gap_safe_radius(gap_value, model.gamma, lam), lam)


def lambda_critic(model, pen, X):
    """Below this value the static rule of El Ghaoui et al. screens nothing.

    Closed form for quadratic losses, where the static Gap Safe radius is
    ``|1/lam - 1/lambda_max| ||y||_2``.
    """
    if not isinstance(model, Quadratic):
        raise UnsupportedRuleError("lambda_critic has a closed form for quadratic losses only")
    X = _as_design(X)
    lmax = lambda_max(model, pen, X)
    g0 = model.gradient_map(np.zeros_like(model.y))
    c = pen.group_dual_norms(X.rmatvec(g0))
    s = pen.operator_norms(X)
    ny = np.linalg.norm(model.y)
    return float(lmax * np.min(ny * s / (lmax + ny * s - c)))


def dual_point(model, pen, X, beta, lam, restrict=None, z=None):
    """``Theta(-G(X beta) / lam)``: the rescaled generalized residual."""
    X = _as_design(X)
    if z is None:
        z = X.matvec(beta)
    theta, _ = dual_scale(-model.gradient_map(z) / lam, pen, X, restrict)
    return theta


def sequential_init(beta_prev, model, pen, X, lam):
    """Gap Safe sphere at ``lam`` seeded with the previous grid point's primal.

    The centre is rebuilt from ``beta_prev`` at the new ``lam``, so the rule
    stays safe however inexact the previous solve was.
    """
    X = _as_design(X)
    beta_prev = np.asarray(beta_prev, dtype=np.float64)
    theta = dual_point(model, pen, X, beta_prev, lam)
    return gap_safe_sphere(model, pen, X, beta_prev, theta, lam)


def dst3_normal(model, pen, X):
    """``(g_star, eta)``: the group attaining lambda_max and the normal
    ``X_g* grad Omega_g*^D(X_g*^T y / lambda_max)`` to its dual constraint."""
    if not isinstance(model, Quadratic) or model.y.ndim != 1:
        raise UnsupportedRuleError("DST3 is defined for the single-output quadratic loss")
    X = _as_design(X)
    y = model.y
    xi = X.rmatvec(y)
    norms = pen.group_dual_norms(xi)
    g_star = int(np.argmax(norms))
    lmax = norms[g_star]
    cols = pen.partition[g_star]
    grad = pen.dual_norm_gradient(g_star, xi[cols] / lmax)
    eta = X.submatrix(cols) @ grad
    return g_star, eta


def dst3_sphere(model, pen, X, lam, theta_k, normal=None):
    """Sphere centred at the projection of ``y / lam`` on the tangent
    hyperplane of the most correlated group's constraint, with radius
    ``sqrt(||y/lam - theta_k||^2 - ||y/lam - center||^2)``."""
    if normal is None:
        normal = dst3_normal(model, pen, X)
    _, eta = normal
    y_lam = model.y / lam
    shift = (y_lam @ eta - 1.0) / (eta @ eta)
    center = y_lam - shift * eta
    d_k = y_lam - np.asarray(theta_k, dtype=np.float64)
    d_c = y_lam - center
    r2 = d_k @ d_k - d_c @ d_c
    return SafeSphere(center, float(np.sqrt(max(r2, 0.0))), lam)


def strong_rule(pen, X, theta_prev, lam, lam_prev):
    """Strong active set: groups with ``Omega_g^D(X_g^T theta') >= (2 lam - lam') / lam'``.

    Not safe; the consumer must run :func:`kkt_postcheck`.
    """
    if lam > lam_prev:
        raise ValueError("strong rule needs lam <= lam_prev")
    threshold = (2.0 * lam - lam_prev) / lam_prev
    norms = pen.group_dual_norms(correlations(X, theta_prev))
    return ActiveSet.from_groups(pen.partition, norms >= threshold)


def sis_rule(pen, X, y, threshold):
    """Sure Independence Screening: drop groups with ``Omega_g^D(X_g^T y) < threshold``.

    Not safe.
    """
    norms = pen.group_dual_norms(correlations(X, y))
    return ActiveSet.from_groups(pen.partition, norms >= threshold)


def _as_group_indices(discarded):
    discarded = np.asarray(discarded)
    if discarded.dtype == bool:
        return np.flatnonzero(discarded)
    return discarded.astype(np.int64)


def kkt_postcheck(model, pen, X, beta, theta, discarded, eps_kkt):
    """Discarded groups whose optimality condition is violated by more than ``eps_kkt``.

    ``theta`` is the unscaled residual ``-G(X beta) / lam``; ``discarded``
    is a list of group indices or a boolean group mask.
    """
    X = _as_design(X)
    groups = _as_group_indices(discarded)
    if groups.size == 0:
        return groups
    beta = np.asarray(beta, dtype=np.float64)
    viol = []
    for g in groups:
        cols = pen.partition[g]
        xi_g = X.rmatvec(theta, cols)
        if pen.subdiff_distance(g, beta[cols], xi_g) > eps_kkt:
            viol.append(g)
    return np.asarray(viol, dtype=np.int64)


def kkt_tolerance(model, pen, X, beta, lam, eps_target):
    """Approximate-KKT tolerance that implies a duality gap ``eps_target``.

    For the quadratic loss with ``alpha = max(lam, Omega^D(X^T (y - X beta)))``
    the gap obeys ``gap <= (1 - lam/alpha)^2 ||y - X beta||^2 / 2 + lam eps ||beta||_1``,
    giving ``eps = eps_target / P(beta) - (1 - lam/alpha)^2`` (clamped at 0).
    """
    if not isinstance(model, Quadratic):
        raise UnsupportedRuleError("the KKT tolerance formula is for quadratic losses")
    X = _as_design(X)
    z = X.matvec(beta)
    resid = model.y - z
    alpha = max(lam, pen.dual_norm_global(X.rmatvec(resid)))
    p_val = primal_objective(model, pen, X, beta, lam, z)
    if p_val <= 0:
        return 0.0
    return max(eps_target / p_val - (1.0 - lam / alpha) ** 2, 0.0)


def equicorrelation_set(pen, X, theta_hat, tol=1e-9):
    """Groups whose dual constraint is tight at ``theta_hat`` (within ``tol``)."""
    norms = pen.group_dual_norms(correlations(X, theta_hat))
    return np.abs(norms - 1.0) <= tol
