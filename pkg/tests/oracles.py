"""Independent reference computations for the tests.

Nothing here calls the screening code.  Reference optima come from a plain
(no screening) tight solve followed by a root-finding polish of the
optimality conditions on the support, which pins the dual optimum down to
rounding level.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import root

from gapsafe import L1, L1L2, SolverConfig, SparseGroupLasso, solve


def dense(X):
    return X.toarray() if hasattr(X, "toarray") else np.asarray(X)


def make_instance(kind, seed, tau=0.5):
    """Random normalized instance; returns ``(model, pen, Xd)``."""
    from gapsafe import GroupPartition, Logistic, MultiTaskQuadratic, Quadratic

    rng = np.random.default_rng(seed)
    if kind == "logistic":
        n, p = 60, 150
    elif kind == "small":
        n, p = 30, 60
    else:
        n, p = 50, 200
    X = rng.standard_normal((n, p))
    X /= np.linalg.norm(X, axis=0)
    beta = np.zeros(p)
    idx = rng.choice(p, size=max(1, p // 20), replace=False)
    beta[idx] = rng.standard_normal(idx.size) * 3
    if kind == "logistic":
        prob = 1.0 / (1.0 + np.exp(-X @ beta * 3))
        y = (rng.uniform(size=n) < prob).astype(float)
        y[:2] = [0.0, 1.0]
        return Logistic(y), L1(p), X
    y = X @ beta + 0.3 * rng.standard_normal(n)
    y = (y - y.mean()) / np.linalg.norm(y - y.mean())
    if kind in ("lasso", "small"):
        return Quadratic(y), L1(p), X
    part = GroupPartition.contiguous([5] * (p // 5), "sqrt")
    if kind == "group":
        return Quadratic(y), L1L2(part), X
    if kind == "sgl":
        return Quadratic(y), SparseGroupLasso(part, tau), X
    if kind == "multitask":
        Y = np.column_stack([y, np.roll(y, 1), rng.standard_normal(n) * 0.1])
        return MultiTaskQuadratic(Y), L1L2(GroupPartition.singletons(p)), X
    raise ValueError(kind)


def _penalty_gradient(pen, B, mask):
    """Gradient of ``Omega`` at ``B`` on the entries in ``mask`` (smooth there)."""
    out = np.zeros_like(B)
    if isinstance(pen, L1):
        out[mask] = np.sign(B[mask])
        return out
    tau = pen.tau if isinstance(pen, SparseGroupLasso) else 0.0
    out[mask] = tau * np.sign(B[mask])
    for g, cols in enumerate(pen.partition.groups):
        bg = B[cols]
        nb = np.linalg.norm(bg)
        if nb > 0:
            out[cols] += (1.0 - tau) * pen.weights[g] * bg / nb
    out[~mask] = 0.0
    return out


def polish(model, pen, X, lam, beta):
    """Solve the support-restricted optimality equations starting from ``beta``.

    Returns ``(beta, theta, ok)``; ``ok`` is False when the polish moved a
    coefficient across zero or did not converge, in which case the input is
    returned unchanged with its unscaled residual.
    """
    Xd = dense(X)
    q = model.n_outputs
    B = np.asarray(beta, dtype=float).reshape(Xd.shape[1], q)
    if isinstance(pen, L1L2):
        rows = np.zeros(B.shape[0], dtype=bool)
        for cols in pen.partition.groups:
            if np.any(B[cols] != 0):
                rows[cols] = True
        mask = np.repeat(rows[:, None], q, axis=1)
    else:
        mask = B != 0

    def residual(b):
        Bf = np.zeros_like(B)
        Bf[mask] = b
        z = (Xd @ Bf).reshape(model.y.shape)
        G = model.gradient_map(z).reshape(-1, q)
        grad = Xd.T @ G + lam * _penalty_gradient(pen, Bf, mask)
        return grad[mask]

    def theta_of(Bm):
        z = (Xd @ Bm).reshape(model.y.shape)
        return -model.gradient_map(z) / lam

    if not mask.any():
        return B.reshape(beta.shape), theta_of(B), True
    sol = root(residual, B[mask], method="hybr", options={"xtol": 1e-15})
    Bn = np.zeros_like(B)
    Bn[mask] = sol.x
    same_sign = np.all(np.sign(sol.x) == np.sign(B[mask])) or isinstance(pen, L1L2)
    res = np.abs(residual(sol.x)).max()
    if not same_sign or res > 1e-10 * max(1.0, lam):
        return B.reshape(beta.shape), theta_of(B), False
    return Bn.reshape(np.shape(beta)), theta_of(Bn), True


def reference_solve(model, pen, X, lam, eps=1e-12, max_epochs=1_000_000, beta0=None):
    """Tight no-screening solve at absolute gap ``eps`` plus polish.

    ``beta0`` only changes the starting point, not the certificate.
    Returns ``(beta, theta_hat, polished)``.
    """
    cfg = SolverConfig(eps=eps, scale_eps=False, rule="none", max_epochs=max_epochs,
                       screen_every=10)
    res = solve(model, pen, X, lam, beta0=beta0, config=cfg)
    assert res.converged, f"reference solve did not converge (gap {res.gap:.2e})"
    beta, theta, ok = polish(model, pen, X, lam, res.beta)
    if not ok:
        theta = res.theta
    return beta, theta, ok


def group_dual_norms_dense(pen, xi):
    """Per-group dual norms computed without the library kernels."""
    xi = np.asarray(xi, dtype=float)
    out = []
    for g, cols in enumerate(pen.partition.groups):
        v = xi[cols].ravel()
        if isinstance(pen, L1):
            out.append(np.abs(v).max())
        elif isinstance(pen, L1L2):
            out.append(np.linalg.norm(v) / pen.weights[g])
        else:
            tau, w = pen.tau, pen.weights[g]
            out.append(eps_norm_bisect(v, (1 - tau) * w / (tau + (1 - tau) * w))
                       / (tau + (1 - tau) * w))
    return np.array(out)


def eps_norm_bisect(x, eps, steps=200):
    """Root of ``||ST_{(1-eps) nu}(x)||_2 = eps nu`` by bisection."""
    x = np.abs(np.ravel(x))
    if eps <= 0:
        return float(x.max(initial=0.0))
    if eps >= 1:
        return float(np.linalg.norm(x))
    lo, hi = 0.0, x.max(initial=0.0) / (1.0 - eps)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        lhs = np.linalg.norm(np.maximum(x - (1.0 - eps) * mid, 0.0))
        if lhs > eps * mid:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
