"""Dataset loading (LIBSVM, CSV), preprocessing, synthetic data and result files."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .core import DesignMatrix

TASKS = ("regression", "binary", "multitask", "multiclass")

RESULT_COLUMNS = ("lambda", "epochs", "gap", "active_groups", "active_features",
                  "screened_fraction", "wall_ms", "rule", "warm_start")


class DataFormatError(ValueError):
    """Malformed input file; ``lineno`` is 1-based."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass
class Dataset:
    """A design matrix with its target.

    ``y`` is (n,) for regression and binary tasks (0/1 labels), (n, q) for
    multi-task regression and one-hot (n, q) for multi-class.  ``transform``
    records what :func:`standardize` did so that it can be undone.
    """

    X: DesignMatrix
    y: np.ndarray
    task: str = "regression"
    feature_names: list | None = None
    classes: np.ndarray | None = None
    transform: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.X, DesignMatrix):
            self.X = DesignMatrix(self.X)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.y.shape[0] != self.X.n:
            raise ValueError("X and y have different numbers of rows")
        if self.task in ("regression", "binary") and self.y.ndim != 1:
            raise ValueError(f"a {self.task} target must be 1-D")
        if self.task in ("multitask", "multiclass") and self.y.ndim != 2:
            raise ValueError(f"a {self.task} target must be (n, q)")
        if self.task == "binary" and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("binary labels must be 0/1")
        if self.task == "multiclass" and not np.all(self.y.sum(axis=1) == 1):
            raise ValueError("multiclass targets must be one-hot")
        if self.feature_names is not None and len(self.feature_names) != self.X.p:
            raise ValueError("one feature name per column is required")

    @property
    def n_samples(self):
        return self.X.n

    @property
    def n_features(self):
        return self.X.p


def _encode_labels(labels, task, path="<labels>"):
    """Map raw labels to the target container of ``task``; returns ``(y, classes)``."""
    labels = np.asarray(labels, dtype=np.float64)
    if task == "regression":
        return labels, None
    classes = np.unique(labels)
    if task == "binary":
        if classes.size > 2:
            raise DataFormatError(path, 0, f"binary task but {classes.size} distinct labels")
        if np.array_equal(classes, [-1.0, 1.0]) or np.array_equal(classes, [0.0, 1.0]):
            classes = np.array([classes[0], 1.0])
        return (labels == classes[-1]).astype(np.float64), classes
    if task == "multiclass":
        if not np.all(classes == np.round(classes)):
            raise DataFormatError(path, 0, "multiclass labels must be integers")
        Y = (labels[:, None] == classes[None, :]).astype(np.float64)
        return Y, classes
    raise ValueError(f"task {task!r} is not available from a single label column")


def read_libsvm(path, task="regression", n_features=None):
    """Parse ``label idx:val ...`` lines with 1-based, strictly increasing indices.

    Blank lines and ``#`` comments are skipped.  Multiclass labels are mapped
    to one-hot columns in sorted label order; binary labels {-1, 1} or {0, 1}
    become {0, 1}.  Returns a :class:`Dataset` with a CSC design.
    """
    labels, rows, cols, vals = [], [], [], []
    max_col = -1
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise DataFormatError(path, lineno, f"bad label {tokens[0]!r}") from None
            row = len(labels) - 1
            last = 0
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError:
                    raise DataFormatError(path, lineno, f"bad feature {tok!r}") from None
                if not sep:
                    raise DataFormatError(path, lineno, f"bad feature {tok!r}")
                if j < 1:
                    raise DataFormatError(path, lineno, f"index {j} is not 1-based")
                if j <= last:
                    raise DataFormatError(path, lineno, "indices must be strictly increasing")
                if not np.isfinite(v):
                    raise DataFormatError(path, lineno, f"non-finite value in {tok!r}")
                last = j
                rows.append(row)
                cols.append(j - 1)
                vals.append(v)
            max_col = max(max_col, last - 1)
    n = len(labels)
    p = max_col + 1 if n_features is None else int(n_features)
    if max_col >= p:
        raise DataFormatError(path, 0, f"feature index {max_col + 1} exceeds n_features={p}")
    X = sp.csc_matrix((np.asarray(vals, dtype=np.float64),
                       (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
                      shape=(n, p))
    y, classes = _encode_labels(labels, task, path)
    return Dataset(DesignMatrix(X), y, task=task, classes=classes)


def write_libsvm(path, ds):
    """Write a single-label dataset in LIBSVM format (values round-trip exactly)."""
    if ds.y.ndim != 1 and ds.task != "multiclass":
        raise ValueError("LIBSVM holds a single label column")
    if ds.task == "multiclass":
        labels = ds.classes[np.argmax(ds.y, axis=1)]
    elif ds.task == "binary" and ds.classes is not None:
        labels = ds.classes[ds.y.astype(np.int64)] if ds.classes.size == 2 else ds.y
    else:
        labels = ds.y
    Xr = sp.csr_matrix(ds.X.csc if ds.X.is_sparse else ds.X.toarray())
    Xr.sort_indices()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(Xr.shape[0]):
            lo, hi = Xr.indptr[i], Xr.indptr[i + 1]
            feats = " ".join(f"{j + 1}:{v!r}" for j, v in
                             zip(Xr.indices[lo:hi], Xr.data[lo:hi].tolist()) if v != 0)
            fh.write(f"{float(labels[i])!r} {feats}".rstrip() + "\n")


def read_csv(path, task="regression", n_targets=1, header=None):
    """Dense CSV: target column(s) first, then features.

    ``n_targets`` label columns for multi-task regression; a single integer
    class column for multiclass.  ``header=None`` detects a header row by
    trying to parse the first line as numbers.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(path, 1, "empty file")
    if header is None:
        try:
            [float(t) for t in rows[0]]
            header = False
        except ValueError:
            header = True
    names = rows[0] if header else None
    body = rows[1:] if header else rows
    width = len(rows[0])
    data = np.empty((len(body), width))
    for k, row in enumerate(body):
        lineno = k + 1 + int(header)
        if len(row) != width:
            raise DataFormatError(path, lineno, f"expected {width} fields, got {len(row)}")
        try:
            data[k] = [float(t) for t in row]
        except ValueError as exc:
            raise DataFormatError(path, lineno, str(exc)) from None
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0])
        raise DataFormatError(path, bad + 1 + int(header), "non-finite value")
    k = n_targets if task == "multitask" else 1
    if width <= k:
        raise DataFormatError(path, 1, "no feature columns")
    target, X = data[:, :k], data[:, k:]
    feature_names = names[k:] if names else None
    if task == "multitask":
        return Dataset(DesignMatrix(X), target, task, feature_names)
    y, classes = _encode_labels(target[:, 0], task, path)
    return Dataset(DesignMatrix(X), y, task, feature_names, classes)


def standardize(ds, center_y=True, unit_variance_y=True, normalize_columns=True,
                unit_variance_columns=False, center_columns=False):
    """Return a transformed copy of ``ds``; parameters go to ``transform``.

    ``normalize_columns`` scales columns to unit Euclidean norm;
    ``unit_variance_columns`` scales them to unit standard deviation
    instead.  Zero columns are left as zeros and listed in
    ``transform["zero_columns"]``.  Applying the same options twice equals
    applying them once up to rounding.  ``y`` options apply to regression
    targets only.
    """
    if normalize_columns and unit_variance_columns:
        raise ValueError("choose one column scaling")
    X = ds.X
    tr = dict(ds.transform)
    n = X.n
    if center_columns:
        if X.is_sparse:
            raise ValueError("centering would densify a sparse design")
        means = X.dense.mean(axis=0)
        A = X.dense - means
        tr["column_mean"] = means
    else:
        A = X.csc.copy() if X.is_sparse else X.dense.copy()
    if normalize_columns or unit_variance_columns:
        if X.is_sparse:
            sq = np.asarray(A.multiply(A).sum(axis=0)).ravel()
        else:
            sq = np.einsum("ij,ij->j", A, A)
        scale = np.sqrt(sq)
        if unit_variance_columns:
            col_mean = (np.asarray(A.mean(axis=0)).ravel() if X.is_sparse
                        else A.mean(axis=0))
            scale = np.sqrt(np.maximum(sq / n - col_mean ** 2, 0.0))
        zero = scale == 0
        scale = np.where(zero, 1.0, scale)
        A = A @ sp.diags(1.0 / scale) if X.is_sparse else A / scale
        tr["column_scale"] = scale
        tr["zero_columns"] = np.flatnonzero(zero)
    y = ds.y.copy()
    if ds.task in ("regression", "multitask"):
        if center_y:
            mu = y.mean(axis=0)
            y = y - mu
            tr["y_mean"] = mu
        if unit_variance_y:
            sd = y.std(axis=0)
            sd = np.where(sd == 0, 1.0, sd)
            y = y / sd
            tr["y_scale"] = sd
    return replace(ds, X=DesignMatrix(sp.csc_matrix(A) if X.is_sparse else A), y=y,
                   transform=tr)


def _fmt(x):
    return format(float(x), ".17g")


def write_results_csv(path, result):
    """One row per grid point of a :class:`~gapsafe.path.PathResult`.

    ``path`` may be a file name or an open text file.
    """
    if hasattr(path, "write"):
        _write_rows(path, result)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_rows(fh, result)


def _write_rows(fh, result):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    if result is not None:
        for lam, res, ms in zip(result.lambdas, result.results, result.wall_ms):
            p = res.active.feature_active.size
            screened = 1.0 - res.active.n_features / p if p else 0.0
            w.writerow([_fmt(lam), res.epochs, _fmt(res.gap), res.active.n_groups,
                        res.active.n_features, _fmt(screened), _fmt(ms),
                        result.rule, result.warm_start])


def read_results_csv(path):
    """Parse a results file back into a list of dicts with typed values."""
    ints = {"epochs", "active_groups", "active_features"}
    floats = {"lambda", "gap", "screened_fraction", "wall_ms"}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise DataFormatError(path, 1, "unexpected header")
        return [{k: int(v) if k in ints else float(v) if k in floats else v
                 for k, v in row.items()} for row in reader]


def save_coefficients(path, beta):
    np.savetxt(path, np.atleast_2d(np.asarray(beta).T).T, fmt="%.17g", delimiter=",")


def load_coefficients(path, q=1):
    beta = np.loadtxt(path, delimiter=",", ndmin=2)
    return beta.ravel() if q == 1 and beta.shape[1] == 1 else beta


# --- synthetic problems -------------------------------------------------------

def _gaussian_design(rng, n, p, rho):
    """Rows with Toeplitz correlation ``rho ** |i - j|`` between features."""
    X = rng.standard_normal((n, p))
    if rho:
        for j in range(1, p):
            X[:, j] = rho * X[:, j - 1] + np.sqrt(1.0 - rho ** 2) * X[:, j]
    return X


def _support(rng, p, fraction):
    k = max(1, int(round(fraction * p)))
    beta = np.zeros(p)
    idx = rng.choice(p, size=k, replace=False)
    beta[idx] = rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 1.5, size=k)
    return beta


def make_lasso(n=100, p=2000, support_fraction=0.05, snr=3.0, rho=0.0, seed=0):
    """``y = X beta + noise`` with ``||X beta|| / ||noise|| = snr``.

    Returns ``(dataset, beta_true)``.
    """
    rng = np.random.default_rng(seed)
    X = _gaussian_design(rng, n, p, rho)
    beta = _support(rng, p, support_fraction)
    signal = X @ beta
    noise = rng.standard_normal(n)
    noise *= np.linalg.norm(signal) / (snr * np.linalg.norm(noise))
    return Dataset(DesignMatrix(X), signal + noise), beta


def make_logistic(n=60, p=150, support_fraction=0.05, rho=0.0, seed=0):
    rng = np.random.default_rng(seed)
    X = _gaussian_design(rng, n, p, rho)
    beta = _support(rng, p, support_fraction)
    prob = 1.0 / (1.0 + np.exp(-X @ beta))
    y = (rng.uniform(size=n) < prob).astype(np.float64)
    if y.min() == y.max():
        y[0] = 1.0 - y[0]
    return Dataset(DesignMatrix(X), y, task="binary", classes=np.array([0.0, 1.0])), beta


def make_multitask(n=50, p=100, q=3, support_fraction=0.05, snr=3.0, seed=0):
    rng = np.random.default_rng(seed)
    X = _gaussian_design(rng, n, p, 0.0)
    rows = _support(rng, p, support_fraction) != 0
    B = np.where(rows[:, None], rng.standard_normal((p, q)), 0.0)
    S = X @ B
    E = rng.standard_normal((n, q))
    E *= np.linalg.norm(S) / (snr * np.linalg.norm(E))
    return Dataset(DesignMatrix(X), S + E, task="multitask"), B


def make_multinomial(n=60, p=100, q=3, support_fraction=0.05, seed=0):
    """One-hot labels drawn from a softmax model; every class appears."""
    rng = np.random.default_rng(seed)
    X = _gaussian_design(rng, n, p, 0.0)
    rows = _support(rng, p, support_fraction) != 0
    B = np.where(rows[:, None], rng.standard_normal((p, q)), 0.0)
    Z = X @ B
    P = np.exp(Z - Z.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    labels = np.array([rng.choice(q, p=row) for row in P])
    labels[:q] = np.arange(q)
    Y = np.eye(q)[labels]
    return Dataset(DesignMatrix(X), Y, task="multiclass", classes=np.arange(q)), B


def read_groups(path, p):
    """Group labels, one integer per feature (whitespace or comma separated)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read().replace(",", " ").split()
    try:
        labels = np.array([int(t) for t in text], dtype=np.int64)
    except ValueError as exc:
        raise DataFormatError(path, 1, str(exc)) from None
    if labels.size != p:
        raise DataFormatError(path, 1, f"expected {p} group labels, got {labels.size}")
    return labels


__all__ = [
    "Dataset", "DataFormatError", "read_libsvm", "write_libsvm", "read_csv",
    "standardize", "write_results_csv", "read_results_csv", "save_coefficients",
    "load_coefficients", "make_lasso", "make_logistic", "make_multitask",
    "make_multinomial", "read_groups", "RESULT_COLUMNS",
]
