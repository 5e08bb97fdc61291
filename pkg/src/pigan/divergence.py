"""Exact information-theoretic quantities on finite supports.

All logarithms are natural, so every quantity is in nats. ``0 * ln 0`` is
taken to be 0 throughout.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalError, UndefinedPosteriorError, ValidationError
from .validation import check_conditionals, check_prob_vector, check_weights

# eigenvalues of the symmetrized covariance product below -tol are an error
SQRTM_CLAMP_TOL = 1e-10


def _xlogy(x, y):
    out = np.zeros(np.broadcast(x, y).shape)
    mask = np.broadcast_to(x, out.shape) > 0
    xb = np.broadcast_to(x, out.shape)
    yb = np.broadcast_to(y, out.shape)
    out[mask] = xb[mask] * np.log(yb[mask])
    return out


def entropy(p):
    """Shannon entropy of a discrete distribution, in nats."""
    p = check_prob_vector(p)
    return float(-_xlogy(p, p).sum())


def kl(p, q):
    """KL(p || q). Returns ``inf`` when p puts mass where q has none."""
    p = check_prob_vector(p, "p")
    q = check_prob_vector(q, "q")
    if p.size != q.size:
        raise ValidationError(f"support mismatch: {p.size} vs {q.size}")
    support = p > 0
    if np.any(q[support] == 0):
        return float("inf")
    value = float(np.sum(p[support] * np.log(p[support] / q[support])))
    return max(value, 0.0)


def mixture(dists, w):
    table, w = check_conditionals(dists, w)
    return w @ table


def jsd_weighted(dists, w):
    """Weighted Jensen-Shannon divergence: sum_i w_i KL(p_i || sum_j w_j p_j)."""
    table, w = check_conditionals(dists, w)
    m = w @ table
    total = 0.0
    for wi, row in zip(w, table):
        support = row > 0
        total += wi * np.sum(row[support] * np.log(row[support] / m[support]))
    return max(float(total), 0.0)


def mutual_information(conditionals, w):
    """I(X; C) for the joint p(c, x) = w_c * conditionals[c](x).

    Computed from the joint table, independently of :func:`jsd_weighted`.
    """
    table, w = check_conditionals(conditionals, w)
    joint = w[:, None] * table
    px = joint.sum(axis=0)
    pc = joint.sum(axis=1)
    nz = joint > 0
    ratio = joint[nz] / (pc[:, None] * px[None, :])[nz]
    return max(float(np.sum(joint[nz] * np.log(ratio))), 0.0)


def membership_posterior(conditionals, w, x_index):
    """Posterior over codes given the symbol ``x_index``, by Bayes' rule."""
    table, w = check_conditionals(conditionals, w)
    if not 0 <= x_index < table.shape[1]:
        raise ValidationError(f"x_index {x_index} outside support of size {table.shape[1]}")
    joint = w * table[:, x_index]
    total = joint.sum()
    if total <= 0:
        raise UndefinedPosteriorError(f"symbol {x_index} has zero mixture mass")
    return joint / total


def posterior_table(conditionals, w):
    """(N, K) table of posteriors; columns with zero mixture mass are NaN."""
    table, w = check_conditionals(conditionals, w)
    joint = w[:, None] * table
    mass = joint.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return joint / mass


def cross_entropy_regularizer(conditionals, w):
    """sum_i w_i E_{x ~ p_i}[ln posterior_i(x)].

    Adding the entropy of ``w`` gives the mutual information between the
    symbol and its code.
    """
    table, w = check_conditionals(conditionals, w)
    post = posterior_table(table, w)
    total = 0.0
    for i, row in enumerate(table):
        support = row > 0
        total += w[i] * np.sum(row[support] * np.log(post[i, support]))
    return float(total)


def tvd_empirical(a, b, n_bins=100):
    """Total variation between histograms of two score samples on [0, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValidationError("score samples must be non-empty")
    if n_bins < 1:
        raise ValidationError("n_bins must be positive")
    for name, s in (("a", a), ("b", b)):
        if np.any((s < 0) | (s > 1)) or not np.all(np.isfinite(s)):
            raise ValidationError(f"scores in {name} must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    ha, _ = np.histogram(a, bins=edges)
    hb, _ = np.histogram(b, bins=edges)
    value = 0.5 * np.abs(ha / a.size - hb / b.size).sum()
    return float(min(max(value, 0.0), 1.0))


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValidationError(f"mean {mean.shape} and cov {cov.shape} do not match")
        if not np.allclose(cov, cov.T, atol=1e-9, rtol=0):
            raise ValidationError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @classmethod
    def from_samples(cls, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] < 2:
            raise ValidationError("need at least 2 samples to estimate a covariance")
        return cls(X.mean(axis=0), np.atleast_2d(np.cov(X, rowvar=False, ddof=1)))


def _psd_sqrt(S, what):
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    tol = SQRTM_CLAMP_TOL * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.size and vals.min() < -tol:
        raise NumericalError(f"{what} has eigenvalue {vals.min():.3e} below -{tol:.1e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T, np.sqrt(vals)


def frechet_distance(s1, s2):
    """Squared Wasserstein-2 distance between two Gaussians.

    ``Tr((S1 S2)^{1/2})`` is taken from the symmetric product
    ``S1^{1/2} S2 S1^{1/2}``, which has the same spectrum.
    """
    if s1.mean.shape != s2.mean.shape:
        raise ValidationError(f"dimension mismatch: {s1.mean.size} vs {s2.mean.size}")
    root1, _ = _psd_sqrt(s1.cov, "first covariance")
    _psd_sqrt(s2.cov, "second covariance")
    _, root_vals = _psd_sqrt(root1 @ s2.cov @ root1, "covariance product")
    diff = s1.mean - s2.mean
    value = diff @ diff + np.trace(s1.cov) + np.trace(s2.cov) - 2.0 * root_vals.sum()
    return float(max(value, 0.0))
