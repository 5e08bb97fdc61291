"""Input checking shared by the numerical modules."""

import numpy as np

from .exceptions import ValidationError

PROB_ATOL = 1e-12


def check_prob_vector(p, name="p"):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise ValidationError(f"{name} has negative entries")
    total = p.sum()
    if abs(total - 1.0) > PROB_ATOL:
        raise ValidationError(f"{name} sums to {total!r}, expected 1")
    return p


def check_weights(w, name="w"):
    w = check_prob_vector(w, name)
    if w.size < 2:
        raise ValidationError(f"{name} needs at least 2 components")
    if np.any(w <= 0):
        raise ValidationError(f"{name} entries must be strictly positive")
    return w


def check_conditionals(dists, w=None):
    """Stack a list of ProbVectors into an (N, K) array, optionally against weights."""
    rows = [check_prob_vector(d, f"dists[{i}]") for i, d in enumerate(dists)]
    if not rows:
        raise ValidationError("need at least one distribution")
    sizes = {r.size for r in rows}
    if len(sizes) != 1:
        raise ValidationError(f"support size mismatch: {sorted(sizes)}")
    table = np.vstack(rows)
    if w is not None:
        w = check_weights(w)
        if w.size != table.shape[0]:
            raise ValidationError(
                f"{table.shape[0]} distributions but {w.size} mixture weights"
            )
        return table, w
    return table


def check_matrix(X, name="X", min_rows=1):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] < min_rows:
        raise ValidationError(f"{name} needs at least {min_rows} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} has non-finite entries")
    return X


def check_codes(codes, n_codes, n_rows=None, name="codes"):
    """Membership codes are 1-based: valid values are 1..n_codes."""
    codes = np.asarray(codes)
    if codes.ndim == 0:
        codes = codes[None]
    if not np.issubdtype(codes.dtype, np.integer):
        if not np.all(np.equal(np.mod(codes, 1), 0)):
            raise ValidationError(f"{name} must be integers")
        codes = codes.astype(np.int64)
    if n_rows is not None and codes.shape != (n_rows,):
        raise ValidationError(f"{name} must have shape ({n_rows},), got {codes.shape}")
    if codes.size and (codes.min() < 1 or codes.max() > n_codes):
        raise ValidationError(f"{name} must lie in 1..{n_codes}")
    return codes.astype(np.int64)


def check_labels(labels, n_classes, n_rows=None, name="labels"):
    """Class labels are 0-based: valid values are 0..n_classes-1."""
    labels = np.asarray(labels)
    if labels.ndim == 0:
        labels = labels[None]
    if n_rows is not None and labels.shape != (n_rows,):
        raise ValidationError(f"{name} must have shape ({n_rows},), got {labels.shape}")
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError(f"{name} must lie in 0..{n_classes - 1}")
    return labels
