"""Group-separable sparsity norms: l1, weighted l1/l2 and the Sparse-Group Lasso.

All penalties act block-wise on a coefficient array ``beta`` of shape (p,)
or (p, q).  The block of group ``g`` is ``beta[partition[g]]`` flattened in
row-major order, so for multi-output models a singleton group is one row of
the coefficient matrix.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .core import GroupPartition, group_operator_norm


def soft_threshold(x, tau):
    """Componentwise ``sign(x) * (|x| - tau)_+``."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def eps_norm(x, eps):
    """The epsilon-norm interpolating between l-infinity (eps=0) and l2 (eps=1).

    For ``0 < eps < 1`` this is the unique ``nu >= 0`` solving
    ``||ST_{(1 - eps) nu}(x)||_2 = eps * nu``, found exactly in
    O(d log d) by sorting ``|x|``.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    x = np.ascontiguousarray(np.ravel(x), dtype=np.float64)
    return float(_kernels.eps_norm(x, float(eps)))


def eps_dual_norm(xi, eps):
    """Dual of the epsilon-norm: ``eps ||xi||_2 + (1 - eps) ||xi||_1``."""
    xi = np.ravel(xi)
    return eps * np.linalg.norm(xi) + (1.0 - eps) * np.abs(xi).sum()


class Penalty:
    """Base class for the group-separable norms.

    Subclasses set ``kind`` (a kernel code) and implement the block value and
    subdifferential distance.  ``tau`` is only meaningful for the
    Sparse-Group Lasso and equals 1 (l1) or 0 (l1/l2) otherwise.
    """

    kind = None
    tau = 0.0

    def __init__(self, partition: GroupPartition):
        self.partition = partition

    @property
    def n_groups(self):
        return self.partition.n_groups

    @property
    def weights(self):
        return self.partition.weights

    def block(self, beta, g):
        return np.asarray(beta)[self.partition[g]].ravel()

    def _group_order(self, xi):
        """Flatten ``xi`` (p,) or (p, q) into group order for the kernels."""
        xi = np.asarray(xi, dtype=np.float64)
        return np.ascontiguousarray(xi[self.partition.group_idx]).ravel()

    def _q(self, xi):
        xi = np.asarray(xi)
        return 1 if xi.ndim == 1 else xi.shape[1]

    def value(self, beta):
        return float(sum(self.group_value(g, self.block(beta, g))
                         for g in range(self.n_groups)))

    def _group_l2(self, beta):
        """Euclidean norm of every block of ``beta``."""
        flat = self._group_order(beta)
        q = self._q(beta)
        return np.sqrt(np.add.reduceat(flat * flat, self.partition.group_ptr[:-1] * q))

    def group_value(self, g, beta_g):
        raise NotImplementedError

    def dual_norm_group(self, g, xi_g):
        xi_g = np.ascontiguousarray(np.ravel(xi_g), dtype=np.float64)
        out = np.empty(1)
        ptr = np.array([0, xi_g.size], dtype=np.int64)
        _kernels.group_dual_norms(self.kind, xi_g, ptr, 1, self.tau,
                                  self.weights[g:g + 1], out)
        return float(out[0])

    def group_dual_norms(self, xi, groups=None):
        """Dual norm of every block of ``xi`` (or of the listed ``groups``)."""
        q = self._q(xi)
        flat = self._group_order(xi)
        out = np.empty(self.n_groups)
        ptr = self.partition.group_ptr
        if groups is None:
            return _kernels.group_dual_norms(self.kind, flat, ptr, q, self.tau,
                                             self.weights, out)
        groups = np.asarray(groups, dtype=np.int64)
        res = np.empty(groups.size)
        for t, g in enumerate(groups):
            res[t] = self.dual_norm_group(g, flat[ptr[g] * q:ptr[g + 1] * q])
        return res

    def dual_norm_global(self, xi, restrict_to=None):
        """``max_g`` of the group dual norms, optionally over a safe active set.

        ``restrict_to`` may be an ``ActiveSet`` or a boolean group mask.
        """
        norms = self.group_dual_norms(xi)
        if restrict_to is not None:
            mask = getattr(restrict_to, "group_active", restrict_to)
            norms = norms[np.asarray(mask, dtype=bool)]
        return float(norms.max()) if norms.size else 0.0

    def block_prox_update(self, g, v, step):
        """``argmin_b ||b - v||^2 / 2 + step * Omega_g(b)``."""
        if step <= 0:
            raise ValueError("step must be positive")
        v = np.ascontiguousarray(np.ravel(v), dtype=np.float64)
        return _kernels.prox_block(self.kind, v, float(step), self.tau,
                                   float(self.weights[g]))

    def subdiff_distance(self, g, beta_g, xi_g):
        """Euclidean distance from ``xi_g`` to the subdifferential of
        ``Omega_g`` at ``beta_g`` (0 when the inclusion holds)."""
        raise NotImplementedError

    def operator_norms(self, X, method="auto"):
        """Certified bounds on ``Omega_g^D(X_g)`` for every group."""
        raise NotImplementedError

    def dual_norm_gradient(self, g, xi_g):
        """Gradient of ``Omega_g^D`` at ``xi_g`` (assumed differentiable there)."""
        raise NotImplementedError


class L1(Penalty):
    """``||beta||_1``; the partition must consist of singletons."""

    kind = _kernels.PEN_L1
    tau = 1.0

    def __init__(self, p_or_partition):
        if isinstance(p_or_partition, GroupPartition):
            partition = p_or_partition
            if not partition.is_singletons:
                raise ValueError("the l1 penalty requires a singleton partition")
        else:
            partition = GroupPartition.singletons(int(p_or_partition))
        super().__init__(partition)

    def value(self, beta):
        return float(np.abs(beta).sum())

    def group_value(self, g, beta_g):
        return float(np.abs(beta_g).sum())

    def subdiff_distance(self, g, beta_g, xi_g):
        b = np.ravel(beta_g)
        xi = np.ravel(xi_g)
        res = np.where(b == 0, np.maximum(np.abs(xi) - 1.0, 0.0),
                       np.abs(xi - np.sign(b)))
        return float(np.linalg.norm(res))

    def operator_norms(self, X, method="auto"):
        return X.column_norms()[self.partition.group_idx].copy()

    def dual_norm_gradient(self, g, xi_g):
        xi = np.ravel(xi_g)
        grad = np.zeros_like(xi)
        k = int(np.argmax(np.abs(xi)))
        grad[k] = np.sign(xi[k])
        return grad

    def __repr__(self):
        return f"L1(p={self.partition.p})"


class L1L2(Penalty):
    """Weighted group norm ``sum_g w_g ||beta_g||_2`` with ``w_g > 0``."""

    kind = _kernels.PEN_L1L2
    tau = 0.0

    def __init__(self, partition: GroupPartition):
        if np.any(partition.weights <= 0):
            raise ValueError("group Lasso weights must be strictly positive")
        super().__init__(partition)

    def value(self, beta):
        return float(self.weights @ self._group_l2(beta))

    def group_value(self, g, beta_g):
        return float(self.weights[g] * np.linalg.norm(beta_g))

    def subdiff_distance(self, g, beta_g, xi_g):
        b = np.ravel(beta_g)
        xi = np.ravel(xi_g)
        w = self.weights[g]
        nb = np.linalg.norm(b)
        if nb == 0:
            return float(max(np.linalg.norm(xi) - w, 0.0))
        return float(np.linalg.norm(xi - w * b / nb))

    def operator_norms(self, X, method="auto"):
        return X.group_spectral_norms(self.partition, method) / self.weights

    def dual_norm_gradient(self, g, xi_g):
        xi = np.ravel(xi_g)
        return xi / (self.weights[g] * np.linalg.norm(xi))

    def __repr__(self):
        return f"L1L2(n_groups={self.n_groups})"


class SparseGroupLasso(Penalty):
    """``tau ||beta||_1 + (1 - tau) sum_g w_g ||beta_g||_2``.

    ``tau = 1`` gives the Lasso, ``tau = 0`` the group Lasso.  Zero weights
    are allowed only when ``tau > 0``.
    """

    kind = _kernels.PEN_SGL

    def __init__(self, partition: GroupPartition, tau):
        tau = float(tau)
        if not 0.0 <= tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if tau == 0.0 and np.any(partition.weights == 0):
            raise ValueError("tau = 0 with a zero group weight does not define a norm")
        super().__init__(partition)
        self.tau = tau

    @property
    def scales(self):
        """Per-group ``tau + (1 - tau) w_g``."""
        return self.tau + (1.0 - self.tau) * self.weights

    @property
    def eps(self):
        """Per-group epsilon of the equivalent epsilon-norm."""
        return (1.0 - self.tau) * self.weights / self.scales

    def value(self, beta):
        return float(self.tau * np.abs(beta).sum()
                     + (1.0 - self.tau) * (self.weights @ self._group_l2(beta)))

    def group_value(self, g, beta_g):
        b = np.ravel(beta_g)
        return float(self.tau * np.abs(b).sum()
                     + (1.0 - self.tau) * self.weights[g] * np.linalg.norm(b))

    def subdiff_distance(self, g, beta_g, xi_g):
        b = np.ravel(beta_g)
        xi = np.ravel(xi_g)
        tau = self.tau
        lvl = (1.0 - tau) * self.weights[g]
        nb = np.linalg.norm(b)
        if nb == 0:
            return float(max(np.linalg.norm(soft_threshold(xi, tau)) - lvl, 0.0))
        r = xi - lvl * b / nb
        # l1 part: fixed at tau*sign on the support, a box elsewhere
        proj = np.where(b != 0, tau * np.sign(b), np.clip(r, -tau, tau))
        return float(np.linalg.norm(r - proj))

    def operator_norms(self, X, method="auto"):
        return X.group_spectral_norms(self.partition, method) / self.scales

    def dual_norm_gradient(self, g, xi_g):
        xi = np.ravel(xi_g)
        eps = self.eps[g]
        nu = eps_norm(xi, eps)
        st = soft_threshold(xi, (1.0 - eps) * nu)
        denom = (1.0 - eps) * np.abs(st).sum() + eps * np.linalg.norm(st)
        if denom == 0:
            # eps = 0 with a unique maximizer: gradient of the l-inf norm
            grad = np.zeros_like(xi)
            k = int(np.argmax(np.abs(xi)))
            grad[k] = np.sign(xi[k])
            return grad / self.scales[g]
        return st / denom / self.scales[g]

    def __repr__(self):
        return f"SparseGroupLasso(tau={self.tau}, n_groups={self.n_groups})"


def make_penalty(name, p, partition=None, tau=None):
    """Construct a penalty from a short name: ``l1``, ``l1l2`` or ``sgl``."""
    if name == "l1":
        return L1(p if partition is None else partition)
    if partition is None:
        raise ValueError(f"penalty {name!r} needs a group partition")
    if name == "l1l2":
        return L1L2(partition)
    if name == "sgl":
        return SparseGroupLasso(partition, 0.5 if tau is None else tau)
    raise ValueError(f"unknown penalty {name!r}")


__all__ = [
    "Penalty", "L1", "L1L2", "SparseGroupLasso", "soft_threshold", "eps_norm",
    "eps_dual_norm", "make_penalty", "group_operator_norm",
]
