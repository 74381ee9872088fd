"""Separable data-fit terms ``F(beta) = sum_i f_i(x_i^T beta)`` and their duals.

Each loss provides the value, the per-sample gradient map ``G``, the dual
objective ``D_lambda(theta) = -sum_i f_i^*(-lambda theta_i)`` and the
strong-concavity constant ``gamma`` used by the Gap Safe radius.

=================  ==========================  =====
loss               conjugate ``f_i^*(u)``      gamma
=================  ==========================  =====
Quadratic          ((u + y)^2 - y^2) / 2       1
Logistic           Nh(u + y)                   4
MultiTaskQuadratic (||u + Y_i||^2 - ||Y_i||^2)/2  1
Multinomial        NH(u + Y_i)                 1
=================  ==========================  =====
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax, xlogy

from . import _kernels
from .core import DegenerateProblemError, InfeasibleDualError, _as_design

# Tolerance on the conjugate domain ([0, 1] or the simplex) before a dual
# point is declared infeasible; smaller excursions are clamped.
DOMAIN_TOL = 1e-12


class LossModel:
    """Base class; ``y`` is (n,) for scalar losses and (n, q) otherwise."""

    gamma = 1.0
    code = None

    def __init__(self, y):
        self.y = y

    @property
    def n_samples(self):
        return self.y.shape[0]

    @property
    def n_outputs(self):
        return 1 if self.y.ndim == 1 else self.y.shape[1]

    @property
    def y2d(self):
        return self.y.reshape(self.n_samples, -1)

    def fit_value(self, z):
        raise NotImplementedError

    def gradient_map(self, z):
        raise NotImplementedError

    def conjugate(self, u):
        """Per-sample ``f_i^*(u_i)`` (``inf`` outside the domain)."""
        raise NotImplementedError

    def conjugate_sum(self, theta, lam):
        """Dual objective ``D_lambda(theta)``."""
        raise NotImplementedError

    def dual_gradient(self, theta, lam):
        """Gradient of ``D_lambda`` at ``theta`` (interior of the domain)."""
        raise NotImplementedError

    def scaled_tolerance(self, eps):
        raise NotImplementedError

    def check_dual_domain(self, theta, lam):
        """Raise ``InfeasibleDualError`` if ``-lam theta + y`` leaves the domain."""

    def _check_shape(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != self.y.shape:
            raise ValueError(f"expected shape {self.y.shape}, got {z.shape}")
        return z


class Quadratic(LossModel):
    """Least squares ``(y_i - z)^2 / 2``."""

    gamma = 1.0
    code = _kernels.LOSS_QUADRATIC
    name = "quadratic"

    def __init__(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 1:
            raise ValueError("Quadratic expects a 1-D target; use MultiTaskQuadratic")
        super().__init__(y)

    def fit_value(self, z):
        r = self.y - self._check_shape(z)
        return 0.5 * float(r.ravel() @ r.ravel())

    def gradient_map(self, z):
        return self._check_shape(z) - self.y

    def conjugate(self, u):
        u = np.asarray(u, dtype=np.float64)
        return 0.5 * ((u + self.y) ** 2 - self.y ** 2)

    def conjugate_sum(self, theta, lam):
        r = self.y - lam * np.asarray(theta, dtype=np.float64)
        y = self.y.ravel()
        return 0.5 * float(y @ y) - 0.5 * float(r.ravel() @ r.ravel())

    def dual_gradient(self, theta, lam):
        return lam * (self.y - lam * np.asarray(theta, dtype=np.float64))

    def scaled_tolerance(self, eps):
        y = self.y.ravel()
        return eps * float(y @ y)


class MultiTaskQuadratic(Quadratic):
    """Least squares over q tasks sharing the design: ``||Y_i - z||^2 / 2``."""

    name = "multitask"

    def __init__(self, Y):
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2:
            raise ValueError("MultiTaskQuadratic expects an (n, q) target")
        LossModel.__init__(self, Y)

    def conjugate(self, u):
        u = np.asarray(u, dtype=np.float64)
        return 0.5 * (((u + self.y) ** 2).sum(axis=1) - (self.y ** 2).sum(axis=1))


def _binary_neg_entropy(x):
    """``x log x + (1 - x) log(1 - x)`` with ``0 log 0 = 0``."""
    return xlogy(x, x) + xlogy(1.0 - x, 1.0 - x)


def _clamp_domain(v, lo, hi):
    if v.size and (v.min() < lo - DOMAIN_TOL or v.max() > hi + DOMAIN_TOL):
        raise InfeasibleDualError(
            "dual point outside the conjugate domain; rescale it first")
    return np.clip(v, lo, hi)


class Logistic(LossModel):
    """Binary logistic loss ``log(1 + e^z) - y z`` with labels in {0, 1}."""

    gamma = 4.0
    code = _kernels.LOSS_LOGISTIC
    name = "logistic"

    def __init__(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 1 or not np.all((y == 0) | (y == 1)):
            raise ValueError("Logistic labels must be a 1-D array of 0/1 values")
        super().__init__(y)

    def fit_value(self, z):
        z = self._check_shape(z)
        return float(np.sum(np.logaddexp(0.0, z) - self.y * z))

    def gradient_map(self, z):
        return expit(self._check_shape(z)) - self.y

    def conjugate(self, u):
        v = np.asarray(u, dtype=np.float64) + self.y
        out = np.full(v.shape, np.inf)
        ok = (v >= -DOMAIN_TOL) & (v <= 1.0 + DOMAIN_TOL)
        out[ok] = _binary_neg_entropy(np.clip(v[ok], 0.0, 1.0))
        return out

    def conjugate_sum(self, theta, lam):
        v = _clamp_domain(self.y - lam * np.asarray(theta, dtype=np.float64),
                          0.0, 1.0)
        return -float(np.sum(_binary_neg_entropy(v)))

    def dual_gradient(self, theta, lam):
        v = self.y - lam * np.asarray(theta, dtype=np.float64)
        return lam * (np.log(v) - np.log1p(-v))

    def check_dual_domain(self, theta, lam):
        _clamp_domain(self.y - lam * np.asarray(theta), 0.0, 1.0)

    def scaled_tolerance(self, eps):
        n1 = float(self.y.sum())
        return eps * min(n1, self.n_samples - n1) / self.n_samples


class Multinomial(LossModel):
    """Multinomial logistic loss ``logsumexp(z) - Y_i^T z`` for one-hot ``Y``."""

    gamma = 1.0
    code = _kernels.LOSS_MULTINOMIAL
    name = "multinomial"

    def __init__(self, Y):
        Y = np.asarray(Y, dtype=np.float64)
        if (Y.ndim != 2 or not np.all((Y == 0) | (Y == 1))
                or not np.all(Y.sum(axis=1) == 1)):
            raise ValueError("Multinomial targets must be one-hot rows (n, q)")
        super().__init__(Y)

    @classmethod
    def from_labels(cls, labels, n_classes=None):
        """One-hot encode integer labels in ``0..q-1``."""
        labels = np.asarray(labels, dtype=np.int64)
        q = int(labels.max()) + 1 if n_classes is None else int(n_classes)
        Y = np.zeros((labels.size, q))
        Y[np.arange(labels.size), labels] = 1.0
        return cls(Y)

    def fit_value(self, z):
        z = self._check_shape(z)
        return float(np.sum(logsumexp(z, axis=1)) - np.sum(self.y * z))

    def gradient_map(self, z):
        return softmax(self._check_shape(z), axis=1) - self.y

    def conjugate(self, u):
        v = np.asarray(u, dtype=np.float64) + self.y
        out = np.full(v.shape[0], np.inf)
        ok = ((v.min(axis=1) >= -DOMAIN_TOL)
              & (np.abs(v.sum(axis=1) - 1.0) <= DOMAIN_TOL))
        vv = np.clip(v[ok], 0.0, 1.0)
        out[ok] = xlogy(vv, vv).sum(axis=1)
        return out

    def _simplex_point(self, theta, lam):
        v = self.y - lam * np.asarray(theta, dtype=np.float64)
        if v.size and (v.min() < -DOMAIN_TOL
                       or np.abs(v.sum(axis=1) - 1.0).max() > DOMAIN_TOL):
            raise InfeasibleDualError(
                "dual point outside the simplex domain; rescale it first")
        return np.clip(v, 0.0, 1.0)

    def conjugate_sum(self, theta, lam):
        v = self._simplex_point(theta, lam)
        return -float(np.sum(xlogy(v, v)))

    def dual_gradient(self, theta, lam):
        v = self.y - lam * np.asarray(theta, dtype=np.float64)
        return lam * (np.log(v) + 1.0)

    def check_dual_domain(self, theta, lam):
        self._simplex_point(theta, lam)

    def scaled_tolerance(self, eps):
        return eps * self.n_samples * np.log(self.n_outputs)

    def log_probabilities(self, z):
        return log_softmax(z, axis=1)


def primal_objective(model, penalty, X, beta, lam, z=None):
    """``P_lambda(beta) = F(beta) + lambda Omega(beta)``."""
    if z is None:
        z = _as_design(X).matvec(beta)
    return model.fit_value(z) + lam * penalty.value(beta)


def gap(model, penalty, X, beta, theta, lam, z=None):
    """Duality gap ``P_lambda(beta) - D_lambda(theta)`` for a feasible ``theta``.

    Values within ``-1e-12`` of zero are clamped to 0; anything more negative
    means ``theta`` was not dual feasible.
    """
    X = _as_design(X)
    xi = X.rmatvec(np.asarray(theta, dtype=np.float64))
    if penalty.dual_norm_global(xi) > 1.0 + 1e-12:
        raise InfeasibleDualError("theta is not in the dual feasible set")
    value = (primal_objective(model, penalty, X, beta, lam, z)
             - model.conjugate_sum(theta, lam))
    if value < -1e-12:
        raise InfeasibleDualError(f"negative duality gap {value:.3e}")
    return max(value, 0.0)


def lambda_max(model, penalty, X):
    """Smallest ``lambda`` for which ``beta = 0`` is optimal: ``Omega^D(X^T G(0))``."""
    X = _as_design(X)
    g0 = model.gradient_map(np.zeros_like(model.y))
    value = penalty.dual_norm_global(X.rmatvec(g0))
    if value <= 0.0:
        raise DegenerateProblemError("lambda_max is zero: beta = 0 fits exactly")
    return value


def make_loss(name, y):
    """Construct a loss from a short name."""
    losses = {
        "quadratic": Quadratic, "logistic": Logistic,
        "multitask": MultiTaskQuadratic, "multinomial": Multinomial,
    }
    try:
        return losses[name](y)
    except KeyError:
        raise ValueError(f"unknown loss {name!r}") from None
