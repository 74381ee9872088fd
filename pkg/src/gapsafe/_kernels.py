"""Compiled inner loops shared by the penalty, screening and solver modules.

Design matrices reach these kernels in one of two layouts: a Fortran-ordered
dense array ``Xd`` (with ``dense=True``), or CSC triplets ``data``, ``indices``,
``indptr``.  The unused layout is passed as an empty placeholder.
"""

import numpy as np
from numba import njit

LOSS_QUADRATIC = 0
LOSS_LOGISTIC = 1
LOSS_MULTINOMIAL = 2

PEN_L1 = 0
PEN_L1L2 = 1
PEN_SGL = 2


@njit(cache=True)
def soft_threshold_scalar(x, tau):
    if x > tau:
        return x - tau
    if x < -tau:
        return x + tau
    return 0.0


@njit(cache=True)
def eps_norm(x, eps):
    """Exact epsilon-norm of ``x`` by sorting.

    Returns the unique nonnegative root ``nu`` of
    ``sum_i (|x_i| - (1 - eps) nu)_+^2 = (eps nu)^2``.
    """
    d = x.shape[0]
    if d == 0:
        return 0.0
    a = np.abs(x)
    amax = a.max()
    if amax == 0.0:
        return 0.0
    if eps <= 0.0:
        return amax
    if eps >= 1.0:
        return np.sqrt(np.sum(a * a))
    a = -np.sort(-a)
    om = 1.0 - eps
    ratio = eps / om
    # phi(a_k / om) is non-decreasing in k; the root lives on the last
    # prefix where it is still <= 0
    s1 = 0.0
    s2 = 0.0
    k_star = 1
    S1 = a[0]
    S2 = a[0] * a[0]
    for k in range(d):
        ak = a[k]
        if ak == 0.0:
            break
        s1 += ak
        s2 += ak * ak
        # sum_{i<=k} (a_i - a_k)^2 - (eps a_k / om)^2
        val = s2 - 2.0 * ak * s1 + (k + 1) * ak * ak - (ratio * ak) ** 2
        if val <= 0.0:
            k_star = k + 1
            S1 = s1
            S2 = s2
        else:
            break
    A = k_star * om * om - eps * eps
    B = om * S1
    disc = B * B - A * S2
    if disc < 0.0:
        disc = 0.0
    return S2 / (B + np.sqrt(disc))


@njit(cache=True)
def group_dual_norms(kind, xi, gptr, q, tau, weights, out):
    """Per-group dual norms of a group-ordered flat vector ``xi``.

    Group ``g`` occupies ``xi[gptr[g] * q:gptr[g + 1] * q]``.
    """
    n_groups = gptr.shape[0] - 1
    for g in range(n_groups):
        lo = gptr[g] * q
        hi = gptr[g + 1] * q
        if kind == PEN_L1:
            m = 0.0
            for t in range(lo, hi):
                v = abs(xi[t])
                if v > m:
                    m = v
            out[g] = m
        elif kind == PEN_L1L2:
            s = 0.0
            for t in range(lo, hi):
                s += xi[t] * xi[t]
            out[g] = np.sqrt(s) / weights[g]
        else:
            scale = tau + (1.0 - tau) * weights[g]
            eps_g = (1.0 - tau) * weights[g] / scale
            out[g] = eps_norm(xi[lo:hi], eps_g) / scale
    return out


@njit(cache=True)
def prox_block_inplace(kind, v, m, step, tau, w):
    """Overwrite ``v[:m]`` with the proximal map of ``step * Omega_g`` at ``v[:m]``."""
    if kind == PEN_L1:
        for t in range(m):
            v[t] = soft_threshold_scalar(v[t], step)
        return
    if kind == PEN_SGL:
        for t in range(m):
            v[t] = soft_threshold_scalar(v[t], step * tau)
        level = step * (1.0 - tau) * w
    else:
        level = step * w
    nrm = 0.0
    for t in range(m):
        nrm += v[t] * v[t]
    nrm = np.sqrt(nrm)
    if nrm <= level:
        for t in range(m):
            v[t] = 0.0
    else:
        shrink = 1.0 - level / nrm
        for t in range(m):
            v[t] *= shrink


@njit(cache=True)
def prox_block(kind, v, step, tau, w):
    """Proximal map of ``step * Omega_g`` evaluated at ``v`` (new array)."""
    out = v.copy()
    prox_block_inplace(kind, out, out.shape[0], step, tau, w)
    return out


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _softmax_row(Z, P, i, q):
    zmax = Z[i, 0]
    for k in range(1, q):
        if Z[i, k] > zmax:
            zmax = Z[i, k]
    s = 0.0
    for k in range(q):
        e = np.exp(Z[i, k] - zmax)
        P[i, k] = e
        s += e
    for k in range(q):
        P[i, k] /= s


@njit(cache=True)
def bcd_epoch(dense, Xd, data, indices, indptr, loss, Y, Z, P, B, gidx, gptr,
              order, feat_active, lips, lam, pen_kind, tau, weights):
    """One cyclic pass of proximal block updates over the groups in ``order``.

    ``B`` (p x q), ``Z = X B`` (n x q) and, for the multinomial loss, the
    row-softmax cache ``P`` are updated in place.
    """
    n, q = Z.shape
    max_size = 0
    for g in order:
        size = gptr[g + 1] - gptr[g]
        if size > max_size:
            max_size = size
    grad = np.zeros(max_size * q)
    v = np.zeros(max_size * q)
    touched = np.zeros(n, dtype=np.bool_)
    # logistic residual sigmoid(z) - y, refreshed only where z moves
    R = np.empty(n if loss == LOSS_LOGISTIC else 0)
    if loss == LOSS_LOGISTIC:
        for i in range(n):
            R[i] = _sigmoid(Z[i, 0]) - Y[i, 0]

    for g in order:
        L = lips[g]
        if L <= 0.0:
            continue
        lo = gptr[g]
        m = gptr[g + 1] - lo
        mq = m * q
        for t in range(mq):
            grad[t] = 0.0
        for a in range(m):
            j = gidx[lo + a]
            if not feat_active[j]:
                continue
            if dense and loss == LOSS_QUADRATIC:
                for k in range(q):
                    acc = 0.0
                    for i in range(n):
                        acc += Xd[i, j] * (Z[i, k] - Y[i, k])
                    grad[a * q + k] = acc
            elif dense and loss == LOSS_LOGISTIC:
                acc = 0.0
                for i in range(n):
                    acc += Xd[i, j] * R[i]
                grad[a] = acc
            elif dense:
                for i in range(n):
                    x = Xd[i, j]
                    for k in range(q):
                        grad[a * q + k] += x * (P[i, k] - Y[i, k])
            else:
                for ptr in range(indptr[j], indptr[j + 1]):
                    i = indices[ptr]
                    x = data[ptr]
                    for k in range(q):
                        if loss == LOSS_QUADRATIC:
                            gi = Z[i, k] - Y[i, k]
                        elif loss == LOSS_LOGISTIC:
                            gi = R[i]
                        else:
                            gi = P[i, k] - Y[i, k]
                        grad[a * q + k] += x * gi
        for a in range(m):
            j = gidx[lo + a]
            for k in range(q):
                if feat_active[j]:
                    v[a * q + k] = B[j, k] - grad[a * q + k] / L
                else:
                    v[a * q + k] = 0.0
        prox_block_inplace(pen_kind, v, mq, lam / L, tau, weights[g])
        changed = False
        for a in range(m):
            j = gidx[lo + a]
            for k in range(q):
                delta = v[a * q + k] - B[j, k]
                if delta == 0.0:
                    continue
                changed = True
                B[j, k] = v[a * q + k]
                if dense:
                    for i in range(n):
                        Z[i, k] += Xd[i, j] * delta
                else:
                    for ptr in range(indptr[j], indptr[j + 1]):
                        i = indices[ptr]
                        Z[i, k] += data[ptr] * delta
                        if loss != LOSS_QUADRATIC:
                            touched[i] = True
        if changed and loss == LOSS_MULTINOMIAL:
            for i in range(n):
                if dense or touched[i]:
                    _softmax_row(Z, P, i, q)
                    touched[i] = False
        elif changed and loss == LOSS_LOGISTIC:
            for i in range(n):
                if dense or touched[i]:
                    R[i] = _sigmoid(Z[i, 0]) - Y[i, 0]
                    touched[i] = False


@njit(cache=True)
def csc_matmat(data, indices, indptr, cols, B, n, out):
    """``out = X[:, cols] @ B[cols]`` for CSC ``X`` (``out`` is n x q)."""
    q = B.shape[1]
    for i in range(n):
        for k in range(q):
            out[i, k] = 0.0
    for j in cols:
        for k in range(q):
            b = B[j, k]
            if b == 0.0:
                continue
            for ptr in range(indptr[j], indptr[j + 1]):
                out[indices[ptr], k] += data[ptr] * b
    return out


@njit(cache=True)
def csc_rmatmat(data, indices, indptr, cols, V, out):
    """``out[t] = X[:, cols[t]].T @ V`` for CSC ``X`` (``out`` is |cols| x q)."""
    q = V.shape[1]
    for t in range(cols.shape[0]):
        j = cols[t]
        for k in range(q):
            s = 0.0
            for ptr in range(indptr[j], indptr[j + 1]):
                s += data[ptr] * V[indices[ptr], k]
            out[t, k] = s
    return out
