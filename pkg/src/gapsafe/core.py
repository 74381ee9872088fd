"""Design matrices, group structure and the exceptions shared by the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels

# Power iteration settings and the inflation that turns its estimate into a
# certified upper bound on sigma_max.
POWER_TOL = 1e-10
POWER_MAX_ITER = 1000
NORM_INFLATION = 1.0 + 1e-9
# Groups up to this many columns get an exact eigenvalue computation.
EXACT_NORM_MAX_SIZE = 64


class GapSafeError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(GapSafeError, ValueError):
    pass


class InfeasibleDualError(GapSafeError, ValueError):
    """A dual point lies outside the domain of the conjugate loss."""


class DegenerateProblemError(GapSafeError, ValueError):
    """lambda_max is zero: the null model already fits the data."""


class UnsupportedRuleError(GapSafeError, ValueError):
    pass


class DivergenceError(GapSafeError, ArithmeticError):
    pass


class DesignMatrix:
    """An n x p feature matrix stored dense (column-major) or as CSC.

    The matrix is treated as immutable once constructed.  Column norms and
    per-partition group spectral norms are computed lazily and cached.

    Parameters
    ----------
    X : array_like or scipy.sparse matrix
        Sparse inputs are converted to CSC with sorted, duplicate-free
        row indices.
    """

    def __init__(self, X):
        if sp.issparse(X):
            X = sp.csc_matrix(X, dtype=np.float64)
            X.sum_duplicates()
            X.sort_indices()
            self.is_sparse = True
            self._csc = X
            self._dense = np.empty((0, 0), order="F")
            self.data = X.data
            self.indices = X.indices.astype(np.int64)
            self.indptr = X.indptr.astype(np.int64)
        else:
            X = np.asarray(X, dtype=np.float64)
            if X.ndim != 2:
                raise DimensionError(f"design matrix must be 2-D, got {X.ndim}-D")
            self.is_sparse = False
            self._csc = None
            self._dense = np.asfortranarray(X)
            self.data = np.empty(0)
            self.indices = np.empty(0, dtype=np.int64)
            self.indptr = np.empty(0, dtype=np.int64)
        self.n, self.p = X.shape
        if not np.all(np.isfinite(self.data if self.is_sparse else self._dense)):
            raise ValueError("design matrix has non-finite entries")
        self._col_norms = None
        self._group_norm_cache = {}
        self._validate_sparse()

    def _validate_sparse(self):
        if not self.is_sparse:
            return
        for j in range(self.p):
            rows = self.indices[self.indptr[j]:self.indptr[j + 1]]
            if rows.size and (rows[-1] >= self.n or np.any(np.diff(rows) <= 0)):
                raise ValueError(f"column {j}: row indices must be strictly "
                                 "increasing and < n")

    @property
    def shape(self):
        return (self.n, self.p)

    @property
    def dense(self):
        """The dense Fortran-ordered array (empty placeholder when sparse)."""
        return self._dense

    @property
    def csc(self):
        """The CSC matrix (``None`` for a dense design)."""
        return self._csc

    def toarray(self):
        if self.is_sparse:
            return self._csc.toarray()
        return self._dense.copy()

    def kernel_args(self):
        return (not self.is_sparse, self._dense, self.data, self.indices,
                self.indptr)

    def column(self, j):
        if self.is_sparse:
            return self._csc[:, j].toarray().ravel()
        return self._dense[:, j]

    def submatrix(self, cols):
        """Dense copy of the columns ``cols``."""
        cols = np.asarray(cols, dtype=np.int64)
        if self.is_sparse:
            return self._csc[:, cols].toarray()
        return self._dense[:, cols]

    def matvec(self, beta):
        """``X @ beta`` for ``beta`` of shape (p,) or (p, q)."""
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape[0] != self.p:
            raise DimensionError(f"beta has {beta.shape[0]} rows, expected {self.p}")
        if self.is_sparse:
            return np.asarray(self._csc @ beta)
        return self._dense @ beta

    def rmatvec(self, v, cols=None):
        """``X[:, cols].T @ v`` (all columns when ``cols`` is None)."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise DimensionError(f"vector has {v.shape[0]} rows, expected {self.n}")
        if cols is None:
            if self.is_sparse:
                return np.asarray(self._csc.T @ v)
            return self._dense.T @ v
        cols = np.asarray(cols, dtype=np.int64)
        if self.is_sparse:
            V = v.reshape(self.n, -1)
            out = np.empty((cols.size, V.shape[1]))
            _kernels.csc_rmatmat(self.data, self.indices, self.indptr, cols,
                                 np.ascontiguousarray(V), out)
            return out.reshape((cols.size,) + v.shape[1:])
        return self._dense[:, cols].T @ v

    def column_norms(self):
        """Euclidean norms of all columns (cached)."""
        if self._col_norms is None:
            if self.is_sparse:
                sq = np.asarray(self._csc.multiply(self._csc).sum(axis=0)).ravel()
            else:
                sq = np.einsum("ij,ij->j", self._dense, self._dense)
            self._col_norms = np.sqrt(sq)
        return self._col_norms

    def group_spectral_norms(self, partition, method="auto"):
        """Certified upper bounds on sigma_max(X_g) for every group (cached)."""
        key = (partition.key, method)
        if key not in self._group_norm_cache:
            norms = np.empty(partition.n_groups)
            col_norms = self.column_norms()
            for g, cols in enumerate(partition.groups):
                if cols.size == 1:
                    norms[g] = col_norms[cols[0]]
                else:
                    norms[g] = spectral_norm(self.submatrix(cols), method=method)
            self._group_norm_cache[key] = norms
        return self._group_norm_cache[key]


def _as_design(X):
    return X if isinstance(X, DesignMatrix) else DesignMatrix(X)


def matvec(X, beta):
    """Linear predictor ``X beta`` (sparse and dense storage agree)."""
    return _as_design(X).matvec(beta)


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """A partition of ``range(p)`` into disjoint groups with nonnegative weights.

    Parameters
    ----------
    groups : sequence of sequences of int
        Feature indices of each group.
    weights : sequence of float, optional
        Per-group weights, 1.0 by default.  Zero weights are accepted here;
        whether they are allowed depends on the penalty.
    """

    groups: tuple
    weights: np.ndarray = None
    p: int = field(init=False)
    group_idx: np.ndarray = field(init=False, repr=False)
    group_ptr: np.ndarray = field(init=False, repr=False)
    feature_group: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=np.int64).ravel() for g in self.groups)
        if not groups or any(g.size == 0 for g in groups):
            raise ValueError("groups must be a non-empty list of non-empty index sets")
        idx = np.concatenate(groups)
        p = idx.size
        if np.any(idx < 0) or np.any(idx >= p) or np.unique(idx).size != p:
            raise ValueError("groups must be disjoint and cover exactly 0..p-1")
        sizes = np.array([g.size for g in groups], dtype=np.int64)
        ptr = np.zeros(len(groups) + 1, dtype=np.int64)
        np.cumsum(sizes, out=ptr[1:])
        feat = np.empty(p, dtype=np.int64)
        feat[idx] = np.repeat(np.arange(len(groups)), sizes)
        if self.weights is None:
            weights = np.ones(len(groups))
        else:
            weights = np.asarray(self.weights, dtype=np.float64).ravel()
            if weights.size != len(groups):
                raise ValueError("one weight per group is required")
            if np.any(weights < 0) or not np.all(np.isfinite(weights)):
                raise ValueError("group weights must be finite and nonnegative")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "group_idx", idx)
        object.__setattr__(self, "group_ptr", ptr)
        object.__setattr__(self, "feature_group", feat)

    @classmethod
    def singletons(cls, p):
        return cls([[j] for j in range(p)])

    @classmethod
    def contiguous(cls, sizes, weights=None):
        """Consecutive blocks of the given sizes; ``weights="sqrt"`` uses sqrt(|g|)."""
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        groups = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        if isinstance(weights, str):
            if weights != "sqrt":
                raise ValueError(f"unknown weight scheme {weights!r}")
            weights = np.sqrt(np.asarray(sizes, dtype=np.float64))
        return cls(groups, weights)

    @classmethod
    def from_labels(cls, labels, weights=None):
        """Build groups from a per-feature label array (labels sorted by first use)."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        inverse = rank[inverse]
        groups = [np.flatnonzero(inverse == g) for g in range(order.size)]
        if isinstance(weights, str):
            if weights != "sqrt":
                raise ValueError(f"unknown weight scheme {weights!r}")
            weights = np.sqrt([g.size for g in groups])
        return cls(groups, weights)

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def sizes(self):
        return np.diff(self.group_ptr)

    @property
    def is_singletons(self):
        return self.n_groups == self.p

    @property
    def key(self):
        return (self.group_idx.tobytes(), self.group_ptr.tobytes())

    def __getitem__(self, g):
        return self.groups[g]


def group_transpose_matvec(X, partition, g, v):
    """``X_g^T v`` for group ``g`` of ``partition``."""
    if not 0 <= g < partition.n_groups:
        raise IndexError(f"unknown group index {g}")
    return _as_design(X).rmatvec(v, partition.groups[g])


def spectral_norm(A, method="auto", tol=POWER_TOL, max_iter=POWER_MAX_ITER,
                  seed=0):
    """Upper bound on the largest singular value of a dense block ``A``.

    ``method`` is one of ``"exact"`` (eigenvalues of the Gram matrix),
    ``"power"`` (power iteration, Frobenius norm if it fails to converge),
    ``"frobenius"`` or ``"auto"`` (exact for narrow blocks, power otherwise).
    Every result except ``"frobenius"`` is multiplied by ``NORM_INFLATION``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        return 0.0
    if method == "auto":
        method = "exact" if A.shape[1] <= EXACT_NORM_MAX_SIZE else "power"
    if method == "frobenius":
        return float(np.linalg.norm(A))
    if method == "exact":
        gram = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
        top = max(float(np.linalg.eigvalsh(gram)[-1]), 0.0)
        return float(np.sqrt(top)) * NORM_INFLATION
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(A.shape[1])
    u /= np.linalg.norm(u)
    sigma = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ u)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        new_sigma = np.sqrt(nrm)
        u = w / nrm
        if abs(new_sigma - sigma) <= tol * new_sigma:
            return float(new_sigma) * NORM_INFLATION
        sigma = new_sigma
    return float(np.linalg.norm(A))


def group_operator_norm(X, cols, norm_kind="l2", scale=1.0, method="auto"):
    """Operator norm of ``X_g`` from the Euclidean norm to a group dual norm.

    ``norm_kind`` is ``"linf"`` (dual of an l1 block: max column norm) or
    ``"l2"`` (spectral norm).  The result is divided by ``scale``, the factor
    that normalizes the group's dual norm (``w_g`` for the group Lasso).
    For the epsilon-norm of the Sparse-Group Lasso the ``"l2"`` value is a
    valid bound, since the epsilon-norm never exceeds the l2 norm.
    """
    X = _as_design(X)
    cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
    if cols.size == 0:
        raise ValueError("group must be non-empty")
    if norm_kind == "linf":
        val = float(X.column_norms()[cols].max())
    elif norm_kind == "l2":
        if cols.size == 1:
            val = float(X.column_norms()[cols[0]])
        else:
            val = spectral_norm(X.submatrix(cols), method=method)
    else:
        raise ValueError(f"unknown norm kind {norm_kind!r}")
    if scale == 0:
        return np.inf if val > 0 else 0.0
    return val / scale
