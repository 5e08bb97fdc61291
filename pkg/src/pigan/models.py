"""Conditional generator, discriminator and membership classifier.

Codes ``c`` are 1-based membership indices; labels ``y`` are 0-based classes.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .nn import Network, softmax
from .validation import check_prob_vector


def build_generator(noise_dim, out_dim, n_codes, n_classes=0, hidden=(64, 64), embed_dim=8):
    return Network(noise_dim, out_dim, hidden, n_codes, n_classes, embed_dim, output="tanh")


def build_discriminator(in_dim, n_codes, n_classes=0, hidden=(64, 64), embed_dim=8):
    return Network(in_dim, 1, hidden, n_codes, n_classes, embed_dim, output="sigmoid")


def build_classifier(in_dim, n_codes, hidden=(64, 64)):
    # the membership classifier never sees codes or class labels as inputs
    return Network(in_dim, n_codes, hidden, output="softmax")


def generator_forward(net, params, z, c, y=None):
    return net.predict(params, np.atleast_2d(z), np.atleast_1d(c), None if y is None else np.atleast_1d(y))


def discriminator_forward(net, params, x, c, y=None):
    return net.predict(params, np.atleast_2d(x), np.atleast_1d(c), None if y is None else np.atleast_1d(y))


def classifier_forward(net, params, x):
    return net.predict(params, np.atleast_2d(x))


@dataclass
class TabularGenerator:
    """Generator over a finite alphabet: code c emits symbol k with prob table[c-1, k].

    Stored as logits so that gradient training keeps every row a valid
    distribution.
    """

    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.atleast_2d(np.asarray(self.logits, dtype=np.float64))
        if not np.all(np.isfinite(self.logits)):
            raise ValidationError("tabular logits must be finite")

    @classmethod
    def from_table(cls, table):
        rows = [check_prob_vector(r, f"table[{i}]") for i, r in enumerate(table)]
        with np.errstate(divide="ignore"):
            logits = np.log(np.vstack(rows))
        # exact zeros become a very negative finite logit
        return cls(np.where(np.isfinite(logits), logits, -745.0))

    @property
    def n_codes(self):
        return self.logits.shape[0]

    @property
    def alphabet_size(self):
        return self.logits.shape[1]

    @property
    def table(self):
        return softmax(self.logits)

    def distribution(self, c):
        if not 1 <= c <= self.n_codes:
            raise ValidationError(f"code {c} outside 1..{self.n_codes}")
        return self.table[c - 1]

    def sample(self, codes, rng):
        codes = np.asarray(codes, dtype=np.int64)
        if codes.size and (codes.min() < 1 or codes.max() > self.n_codes):
            raise ValidationError(f"codes must lie in 1..{self.n_codes}")
        cdf = np.cumsum(self.table, axis=1)
        u = rng.random(codes.size)
        idx = (u[:, None] > cdf[codes - 1]).sum(axis=1)
        return np.minimum(idx, self.alphabet_size - 1)


def tabular_generator_distribution(params, c):
    return params.distribution(c)
