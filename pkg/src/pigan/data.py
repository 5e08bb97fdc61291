"""Datasets, membership partitioning, splitting and the PCA projection."""

import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .validation import check_matrix

UNASSIGNED = 0


@dataclass
class LabeledDataset:
    """Feature rows with 0-based class labels and 1-based membership codes.

    A code of 0 marks a sample that has not been assigned to a subset.
    """

    X: np.ndarray
    y: np.ndarray
    c: np.ndarray = None
    n_classes: int = None

    def __post_init__(self):
        self.X = check_matrix(self.X, "X", min_rows=0)
        n = self.X.shape[0]
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.y.shape != (n,):
            raise ValidationError(f"y must have {n} entries, got {self.y.shape}")
        if self.c is None:
            self.c = np.full(n, UNASSIGNED, dtype=np.int64)
        self.c = np.asarray(self.c, dtype=np.int64).reshape(-1)
        if self.c.shape != (n,):
            raise ValidationError(f"c must have {n} entries, got {self.c.shape}")
        if n and self.y.min() < 0:
            raise ValidationError("class labels must be non-negative")
        if self.n_classes is None:
            self.n_classes = int(self.y.max()) + 1 if n else 0
        if n and self.y.max() >= self.n_classes:
            raise ValidationError(f"label {self.y.max()} outside {self.n_classes} classes")
        if n and self.c.min() < 0:
            raise ValidationError("membership codes must be non-negative")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return LabeledDataset(self.X[idx], self.y[idx], self.c[idx], self.n_classes)


@dataclass
class PartitionedDataset:
    data: LabeledDataset
    n_subsets: int
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        c = self.data.c
        if self.n_subsets < 2:
            raise ValidationError("a partition needs at least 2 subsets")
        if len(self.data) and (c.min() < 1 or c.max() > self.n_subsets):
            raise ValidationError(f"codes must be assigned in 1..{self.n_subsets}")
        if self.weights is None:
            counts = np.bincount(c, minlength=self.n_subsets + 1)[1:]
            self.weights = counts / counts.sum()
        self.weights = np.asarray(self.weights, dtype=np.float64)

    @property
    def X(self):
        return self.data.X

    @property
    def y(self):
        return self.data.y

    @property
    def c(self):
        return self.data.c

    def members_of(self, code):
        return self.data.subset(np.flatnonzero(self.data.c == code))


def split_train_holdout(data, train_fraction, seed):
    """Random train/holdout split; the train side has round(f * n) samples."""
    n = len(data)
    if n < 2:
        raise ValidationError(f"need at least 2 samples to split, got {n}")
    if not 0 < train_fraction < 1:
        raise ValidationError("train_fraction must lie strictly between 0 and 1")
    n_train = int(np.floor(train_fraction * n + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


def partition_uniform(data, n_subsets, seed):
    """Assign codes 1..N so that subset sizes differ by at most one."""
    n = len(data)
    if n_subsets < 2:
        raise ValidationError("n_subsets must be at least 2")
    if n < n_subsets:
        raise ValidationError(f"{n} samples cannot fill {n_subsets} subsets")
    perm = np.random.default_rng(seed).permutation(n)
    codes = np.empty(n, dtype=np.int64)
    codes[perm] = np.arange(n) % n_subsets + 1
    out = LabeledDataset(data.X.copy(), data.y.copy(), codes, data.n_classes)
    return PartitionedDataset(out, n_subsets)


def ring_means(n_modes, radius=1.0):
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def make_gaussian_mixture(n_modes, mode_means, mode_std, n_samples, seed):
    """i.i.d. draws from an equal-weight isotropic Gaussian mixture; y is the mode."""
    means = np.atleast_2d(np.asarray(mode_means, dtype=np.float64))
    if n_modes < 1 or means.shape[0] != n_modes:
        raise ValidationError(f"expected {n_modes} mode means, got {means.shape[0]}")
    if mode_std < 0 or not np.isfinite(mode_std):
        raise ValidationError("mode_std must be a finite non-negative number")
    if n_samples < 1:
        raise ValidationError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_modes, size=n_samples)
    X = means[y] + mode_std * rng.standard_normal((n_samples, means.shape[1]))
    return LabeledDataset(X, y, n_classes=n_modes)


def make_discrete_dataset(probs, n_samples, seed):
    """Symbols drawn from a finite distribution, as one-column integer features."""
    probs = np.asarray(probs, dtype=np.float64)
    rng = np.random.default_rng(seed)
    symbols = rng.choice(probs.size, size=n_samples, p=probs)
    return LabeledDataset(symbols[:, None].astype(np.float64), np.zeros(n_samples, dtype=np.int64), n_classes=1)


class PcaProjection(TransformerMixin, BaseEstimator):
    """Top-k principal components from an eigendecomposition of the covariance."""

    def __init__(self, n_components=40):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_matrix(X, "X", min_rows=2)
        n, dim = X.shape
        k = self.n_components
        if not 1 <= k <= min(dim, n - 1):
            raise ValidationError(f"n_components={k} infeasible for {n} samples of dim {dim}")
        self.mean_ = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X - self.mean_, rowvar=False, ddof=1))
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals)[::-1][:k]
        self.components_ = vecs[:, order].T
        self.explained_variance_ = np.clip(vals[order], 0.0, None)
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.mean_.size:
            raise ValidationError(f"expected {self.mean_.size} features, got {X.shape[1]}")
        return (X - self.mean_) @ self.components_.T


def pca_fit(X, k):
    return PcaProjection(k).fit(X)


def pca_project(model, X):
    single = np.ndim(X) == 1
    out = model.transform(np.atleast_2d(X))
    return out[0] if single else out


def feasible_components(k, n, dim):
    return max(1, min(k, dim, n - 1))


# Tensor file layout, little-endian:
#   magic b"PGTF" | u32 version | u32 ndim | u32 dims[ndim] |
#   f32 data[prod(dims)] | i32 labels[dims[0]]
_MAGIC = b"PGTF"
_VERSION = 1


def write_tensor_file(path, X, y):
    X = np.ascontiguousarray(X, dtype="<f4")
    y = np.ascontiguousarray(y, dtype="<i4")
    if y.shape != (X.shape[0],):
        raise ValidationError("one label per row is required")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, X.ndim))
        fh.write(struct.pack(f"<{X.ndim}I", *X.shape))
        fh.write(X.tobytes())
        fh.write(y.tobytes())


def read_tensor_file(path, scale_to_unit=False):
    """Load a tensor file as a flat-feature LabeledDataset.

    With ``scale_to_unit`` the features are mapped from [0, 255] to [-1, 1].
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValidationError(f"{path}: not a tensor file")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise ValidationError(f"{path}: unsupported version {version}")
    offset = 12
    dims = struct.unpack_from(f"<{ndim}I", blob, offset)
    offset += 4 * ndim
    count = int(np.prod(dims))
    X = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(dims)
    offset += 4 * count
    y = np.frombuffer(blob, dtype="<i4", count=dims[0], offset=offset)
    X = X.reshape(dims[0], -1).astype(np.float64)
    if scale_to_unit:
        X = X / 127.5 - 1.0
    return LabeledDataset(X, y.astype(np.int64))
