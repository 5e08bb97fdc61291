"""Sample-quality metrics computed against a frozen evaluation classifier."""

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .divergence import GaussianStats, frechet_distance
from .exceptions import ValidationError
from .nn import Adam, Network, softmax
from .validation import check_matrix


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """Softmax MLP trained with Adam; doubles as the evaluation oracle.

    ``embed`` returns the last hidden layer, which plays the role of the
    penultimate-layer features used by FID.
    """

    def __init__(self, hidden=(64, 64), epochs=50, batch_size=64, learning_rate=2e-4,
                 beta1=0.5, beta2=0.999, random_state=0):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.random_state = random_state

    def fit(self, X, y, classes=None):
        X = check_matrix(X, "X")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValidationError("one label per row is required")
        self.classes_ = np.unique(y) if classes is None else np.asarray(classes)
        missing = np.setdiff1d(self.classes_, y)
        if missing.size:
            raise ValidationError(f"classes {missing.tolist()} have no training samples")
        target = np.searchsorted(self.classes_, y)
        rng = np.random.default_rng(self.random_state)
        self.net_ = Network(X.shape[1], self.classes_.size, tuple(self.hidden), output="softmax")
        self.params_ = self.net_.init_params(rng)
        opt = Adam(self.learning_rate, self.beta1, self.beta2)
        n = X.shape[0]
        rows = np.arange(n)
        for _ in range(self.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = perm[start:start + self.batch_size]
                logits, cache = self.net_.forward(self.params_, X[idx])
                probs = softmax(logits)
                probs[rows[:idx.size], target[idx]] -= 1.0
                grads, _ = self.net_.backward(self.params_, cache, probs / idx.size)
                opt.step(self.params_, grads)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return self.net_.predict(self.params_, check_matrix(X, "X"))

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def embed(self, X):
        check_is_fitted(self, "params_")
        return self.net_.embed(self.params_, check_matrix(X, "X"))


class IdentityEmbedding:
    """Oracle whose embedding is the raw feature vector."""

    def embed(self, X):
        return check_matrix(X, "X")


@dataclass
class FidelityReport:
    inception_score: float
    fid: float
    intra_fid: float
    downstream_accuracy: float

    def to_dict(self):
        return asdict(self)


def inception_score_from_probs(probs, n_splits=1):
    """exp(mean KL(p(y|x) || p(y))), averaged over ``n_splits`` chunks."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if probs.shape[0] == 0:
        raise ValidationError("inception score needs at least one sample")
    scores = []
    for chunk in np.array_split(probs, n_splits):
        marginal = chunk.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(chunk > 0, chunk * np.log(chunk / marginal), 0.0)
        scores.append(np.exp(terms.sum(axis=1).mean()))
    return float(np.mean(scores))


def inception_score(samples, oracle, n_splits=1):
    samples = check_matrix(samples, "samples")
    return inception_score_from_probs(oracle.predict_proba(samples), n_splits)


def fid(real, generated, oracle):
    """Frechet distance between Gaussian fits of the two embedding clouds."""
    real_emb = oracle.embed(real)
    gen_emb = oracle.embed(generated)
    dim = real_emb.shape[1]
    for name, emb in (("real", real_emb), ("generated", gen_emb)):
        if emb.shape[0] < dim + 1:
            raise ValidationError(
                f"{name} side has {emb.shape[0]} samples; need at least {dim + 1} for dim {dim}"
            )
    return frechet_distance(GaussianStats.from_samples(real_emb), GaussianStats.from_samples(gen_emb))


def intra_fid(real_X, real_y, gen_X, gen_y, oracle):
    """Unweighted mean over classes of the per-class FID."""
    real_y = np.asarray(real_y)
    gen_y = np.asarray(gen_y)
    classes = np.unique(real_y)
    values = []
    for cls in classes:
        gen_rows = gen_y == cls
        if not gen_rows.any():
            raise ValidationError(f"class {cls} has no generated samples")
        try:
            values.append(fid(real_X[real_y == cls], gen_X[gen_rows], oracle))
        except ValidationError as err:
            raise ValidationError(f"class {cls}: {err}") from None
    return float(np.mean(values))


def downstream_accuracy(gen_X, gen_y, test_X, test_y, classes=None, **classifier_params):
    """Train a fresh classifier on generated data and score it on real data."""
    test_X = np.asarray(test_X)
    if test_X.shape[0] == 0:
        raise ValidationError("test set is empty")
    clf = MLPClassifier(**classifier_params)
    clf.fit(gen_X, gen_y, classes=classes)
    return float(np.mean(clf.predict(test_X) == np.asarray(test_y)))
