"""Membership inference attacks against trained generative models.

Rankings break ties by shuffling with a seeded permutation before a stable
sort, so tied records are ordered uniformly at random but reproducibly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .divergence import tvd_empirical
from .exceptions import ValidationError
from .validation import check_matrix


@dataclass
class AdversaryDataset:
    """Suspect records with ground-truth membership.

    ``m`` is the known training-set size used by the white-box attack;
    ``M`` is the per-side suspect count used by the Monte-Carlo attacks.
    """

    X: np.ndarray
    is_member: np.ndarray
    m: int = None
    M: int = None
    y: np.ndarray = None

    def __post_init__(self):
        self.X = check_matrix(self.X, "X")
        self.is_member = np.asarray(self.is_member, dtype=bool).reshape(-1)
        if self.is_member.shape != (self.X.shape[0],):
            raise ValidationError("one membership flag per suspect is required")
        if self.m is None:
            self.m = int(self.is_member.sum())
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)

    @property
    def members(self):
        return np.flatnonzero(self.is_member)

    @property
    def non_members(self):
        return np.flatnonzero(~self.is_member)

    def check_mc(self):
        n_in, n_out = self.members.size, self.non_members.size
        if self.M is None or n_in != self.M or n_out != self.M:
            raise ValidationError(
                f"Monte-Carlo attacks need exactly M={self.M} members and non-members, "
                f"got {n_in} and {n_out}"
            )


@dataclass
class AttackResult:
    attack_name: str
    accuracy: float
    repeats: int = 1
    outcomes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.outcomes:
            self.outcomes = [self.accuracy]
        self.repeats = len(self.outcomes)
        self.accuracy = float(np.mean(self.outcomes))


def rank_descending(scores, rng):
    """Indices ordered by decreasing score, ties in seeded random order."""
    scores = np.asarray(scores, dtype=np.float64)
    perm = rng.permutation(scores.size)
    return perm[np.argsort(-scores[perm], kind="stable")]


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --- white-box discriminator attacks ---------------------------------------

def code_scores(disc, d_params, X, n_codes, labels=None):
    """(n, N) matrix of D(x, c) for every code c."""
    X = np.atleast_2d(X)
    cols = []
    for c in range(1, n_codes + 1):
        codes = np.full(X.shape[0], c)
        cols.append(disc.predict(d_params, X, codes, labels if disc.n_classes else None))
    return np.column_stack(cols)


def wb_score(disc, d_params, X, n_codes, labels=None):
    """Max over membership codes of the discriminator confidence."""
    if n_codes < 1:
        raise ValidationError("n_codes must be at least 1")
    return code_scores(disc, d_params, X, n_codes, labels).max(axis=1)


def wb_attack(scores, adversary, seed=0):
    """Flag the ``m`` highest-scoring suspects as members.

    ``scores`` is either an array aligned with ``adversary.X`` or a callable
    mapping the suspect matrix to scores.
    """
    if callable(scores):
        scores = scores(adversary.X)
    scores = np.asarray(scores, dtype=np.float64)
    n = adversary.X.shape[0]
    if scores.shape != (n,):
        raise ValidationError(f"expected {n} scores, got shape {scores.shape}")
    m = adversary.m
    if not 1 <= m <= n:
        raise ValidationError(f"m={m} must lie in 1..{n}")
    top = rank_descending(scores, _rng(seed))[:m]
    return AttackResult("wb", float(adversary.is_member[top].sum() / m))


def tvd_attack(train_scores, holdout_scores, n_bins=100):
    """Max over codes of the TVD between train and holdout score histograms.

    Both arguments are sequences indexed by code (or (n, N) score matrices).
    """
    train_cols = _per_code(train_scores)
    hold_cols = _per_code(holdout_scores)
    if len(train_cols) != len(hold_cols) or not train_cols:
        raise ValidationError("train and holdout scores must cover the same codes")
    return max(tvd_empirical(a, b, n_bins) for a, b in zip(train_cols, hold_cols))


def _per_code(scores):
    if isinstance(scores, np.ndarray) and scores.ndim == 2:
        return [scores[:, j] for j in range(scores.shape[1])]
    return [np.asarray(s, dtype=np.float64) for s in scores]


# --- Monte-Carlo distance attacks ------------------------------------------

def _distances(A, B, metric):
    if callable(metric):
        return np.array([[metric(a, b) for b in B] for a in A])
    return cdist(A, B, metric=metric)


def _points(P, name):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise ValidationError(f"{name} must be non-empty")
    return P


def mc_epsilon(suspects, generated, metric="euclidean"):
    """Median over suspects of the distance to the nearest generated point."""
    suspects = _points(suspects, "suspects")
    generated = _points(generated, "generated")
    return float(np.median(_distances(suspects, generated, metric).min(axis=1)))


def mc_scores(suspects, generated, eps, metric="euclidean"):
    """Fraction of generated points inside the closed eps-ball of each suspect."""
    if eps < 0:
        raise ValidationError("eps must be non-negative")
    suspects = _points(suspects, "suspects")
    generated = _points(generated, "generated")
    return (_distances(suspects, generated, metric) <= eps).mean(axis=1)


def mc_score(x, generated, eps, metric="euclidean"):
    return float(mc_scores(np.atleast_2d(np.asarray(x, dtype=np.float64)), generated, eps, metric)[0])


def _project(pca, X):
    return X if pca is None else pca.transform(X)


def _mc_ranked_top(X, generated, M, rng, metric):
    eps = mc_epsilon(X, generated, metric)
    scores = mc_scores(X, generated, eps, metric)
    return rank_descending(scores, rng)[:M]


def mc_single_attack(adversary, generated, pca=None, seed=0, metric="euclidean"):
    """Predict the top-M scored suspects as members; accuracy is TP / M."""
    adversary.check_mc()
    X = _project(pca, adversary.X)
    G = _project(pca, _points(generated, "generated"))
    top = _mc_ranked_top(X, G, adversary.M, _rng(seed), metric)
    return AttackResult("mc_single", float(adversary.is_member[top].sum() / adversary.M))


def mc_set_attack(adversary, generated, repeats=20, pca=None, seed=0, metric="euclidean"):
    """Decide which of two M-sized suspect sets was used for training.

    Each repeat draws M members and M non-members afresh from the adversary's
    pools; the member set wins when it holds a strict majority of the top-M
    scores, and an exact split is settled by a seeded coin flip.
    """
    if repeats < 1:
        raise ValidationError("repeats must be at least 1")
    M = adversary.M
    members, others = adversary.members, adversary.non_members
    if M is None or members.size < M or others.size < M:
        raise ValidationError(
            f"need at least M={M} members and non-members, got {members.size} and {others.size}"
        )
    rng = _rng(seed)
    G = _project(pca, _points(generated, "generated"))
    outcomes = []
    for _ in range(repeats):
        idx = np.concatenate([rng.choice(members, M, replace=False), rng.choice(others, M, replace=False)])
        X = _project(pca, adversary.X[idx])
        top = _mc_ranked_top(X, G, M, rng, metric)
        in_top = int(adversary.is_member[idx][top].sum())
        if 2 * in_top == M:
            outcomes.append(float(rng.random() < 0.5))
        else:
            outcomes.append(float(2 * in_top > M))
    return AttackResult("mc_set", float(np.mean(outcomes)), outcomes=outcomes)
