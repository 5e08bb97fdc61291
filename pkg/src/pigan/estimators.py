"""Estimator front-ends so the trainers compose with scikit-learn tooling."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .attacks import code_scores
from .data import LabeledDataset, PartitionedDataset, partition_uniform
from .training import TrainConfig, train_gan_baseline, train_pigan
from .validation import check_matrix


class _AdversarialEstimator(BaseEstimator):
    def __init__(self, epochs=300, batch_size=128, learning_rate=2e-4, beta1=0.5, beta2=0.999,
                 eps=1e-8, label_smoothing=0.0, noise_dim=16, hidden=(64, 64), embed_dim=8,
                 conditional=False, random_state=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.label_smoothing = label_smoothing
        self.noise_dim = noise_dim
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.conditional = conditional
        self.random_state = random_state

    def _config(self, **extra):
        params = self.get_params()
        params["seed"] = params.pop("random_state")
        params.update(extra)
        return TrainConfig(**params)

    @staticmethod
    def _dataset(X, y):
        X = check_matrix(X, "X")
        y = np.zeros(X.shape[0], dtype=np.int64) if y is None else y
        return LabeledDataset(X, y)

    def sample(self, n_samples, random_state=None, codes=None, labels=None):
        """Return ``(X, labels)`` for ``n_samples`` synthetic rows."""
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(random_state)
        X, _, labels = self.model_.sample(n_samples, rng, codes, labels)
        return X, labels

    def code_scores(self, X, y=None):
        check_is_fitted(self, "model_")
        m = self.model_
        return code_scores(m.discriminator, m.d_params, check_matrix(X, "X"), m.weights.size, y)

    def score_samples(self, X, y=None):
        """White-box membership score: max over codes of the discriminator output."""
        return self.code_scores(X, y).max(axis=1)

    @property
    def history_(self):
        check_is_fitted(self, "model_")
        return self.model_.history


class PIGAN(_AdversarialEstimator):
    """GAN whose generator is penalized for revealing the membership code.

    ``fit`` partitions the training rows into ``n_subsets`` equal random
    subsets unless explicit 1-based ``codes`` are given.
    """

    def __init__(self, n_subsets=2, lam=1.0, warmup_epochs=None, pretrain_epochs=50,
                 fool_mode="random_wrong_label", update_classifier=True, epochs=300,
                 batch_size=128, learning_rate=2e-4, beta1=0.5, beta2=0.999, eps=1e-8,
                 label_smoothing=0.0, noise_dim=16, hidden=(64, 64), embed_dim=8,
                 conditional=False, random_state=0):
        super().__init__(epochs, batch_size, learning_rate, beta1, beta2, eps, label_smoothing,
                         noise_dim, hidden, embed_dim, conditional, random_state)
        self.n_subsets = n_subsets
        self.lam = lam
        self.warmup_epochs = warmup_epochs
        self.pretrain_epochs = pretrain_epochs
        self.fool_mode = fool_mode
        self.update_classifier = update_classifier

    def fit(self, X, y=None, codes=None):
        data = self._dataset(X, y)
        if codes is None:
            part = partition_uniform(data, self.n_subsets, self.random_state)
        else:
            data.c = np.asarray(codes, dtype=np.int64)
            part = PartitionedDataset(data, self.n_subsets)
        self.model_ = train_pigan(self._config(), part)
        self.codes_ = part.c
        return self


class GAN(_AdversarialEstimator):
    """Non-private baseline with the same networks and optimizer."""

    def fit(self, X, y=None):
        self.model_ = train_gan_baseline(self._config(n_subsets=1, lam=0.0), self._dataset(X, y))
        return self
