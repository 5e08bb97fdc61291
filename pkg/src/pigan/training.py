"""Regularized adversarial training with a membership classifier.

Each training iteration performs, in order: a discriminator ascent step, a
classifier ascent step on the same synthetic batch (skipped during the first
``K`` epochs), and a generator descent step on a fresh noise/code batch. The
generator uses the non-saturating adversarial loss plus ``lam`` times a
classifier-fooling term.

Objectives are evaluated with probabilities clamped to ``[1e-7, 1 - 1e-7]``
inside logarithms; the clamp has zero derivative where it is active.
"""

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import PartitionedDataset
from .divergence import mutual_information
from .exceptions import TrainingDivergedError, ValidationError
from .models import TabularGenerator, build_classifier, build_discriminator, build_generator
from .nn import Adam, sigmoid, softmax

CLAMP = 1e-7
FOOL_MODES = ("random_wrong_label", "minimize_true_logprob")

# independent RNG streams; position in the spawn list is part of the contract
# that keeps baseline and regularized runs on identical G/D trajectories
_STREAMS = ("init_g", "init_d", "init_q", "shuffle", "noise_d", "noise_g", "wrong", "pretrain")


def _streams(seed):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(_STREAMS, children)}


def _clog(p):
    return np.log(np.clip(p, CLAMP, 1.0 - CLAMP))


def _inside(p):
    return ((p > CLAMP) & (p < 1.0 - CLAMP)).astype(np.float64)


@dataclass
class TrainConfig:
    """Knobs for one training run.

    ``label_smoothing`` is the amount taken off the real-sample target, so
    0.1 trains the discriminator towards 0.9 on real data.
    ``warmup_epochs=None`` resolves to ceil(2/3 * epochs).
    """

    n_subsets: int = 2
    lam: float = 1.0
    warmup_epochs: int = None
    epochs: int = 300
    batch_size: int = 128
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    pretrain_epochs: int = 50
    fool_mode: str = "random_wrong_label"
    label_smoothing: float = 0.0
    update_classifier: bool = True
    noise_dim: int = 16
    hidden: tuple = (64, 64)
    embed_dim: int = 8
    conditional: bool = False
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.lam < 0:
            raise ValidationError("lam must be non-negative")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.n_subsets < 1:
            raise ValidationError("n_subsets must be at least 1")
        if self.fool_mode not in FOOL_MODES:
            raise ValidationError(f"fool_mode must be one of {FOOL_MODES}")
        if not 0 <= self.label_smoothing < 1:
            raise ValidationError("label_smoothing must lie in [0, 1)")
        if self.pretrain_epochs < 0:
            raise ValidationError("pretrain_epochs must be non-negative")
        if self.warmup_epochs is not None and not 0 <= self.warmup_epochs <= self.epochs:
            raise ValidationError("warmup_epochs must lie in 0..epochs")

    @property
    def warmup(self):
        if self.warmup_epochs is None:
            return math.ceil(2 * self.epochs / 3)
        return self.warmup_epochs

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, epoch, d_loss, g_loss, q_loss=None, q_accuracy=None):
        for name, v in (("d_loss", d_loss), ("g_loss", g_loss), ("q_loss", q_loss), ("q_accuracy", q_accuracy)):
            if v is not None and not np.isfinite(v):
                raise TrainingDivergedError(f"epoch {epoch}: {name} is {v}")
        self.records.append({
            "epoch": epoch, "d_loss": d_loss, "g_loss": g_loss,
            "q_loss": q_loss, "q_accuracy": q_accuracy,
        })

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.records])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "d_loss", "g_loss", "q_loss", "q_accuracy"])
            writer.writeheader()
            for r in self.records:
                writer.writerow({k: "" if v is None else repr(v) for k, v in r.items()})


# --- objective values from network outputs ---------------------------------

def discriminator_value(real_scores, fake_scores, real_target=1.0):
    """Mean of ln D(real) + ln(1 - D(fake)); the discriminator ascends it."""
    real_scores = np.asarray(real_scores, dtype=np.float64)
    fake_scores = np.asarray(fake_scores, dtype=np.float64)
    if real_scores.size == 0 or fake_scores.size == 0:
        raise ValidationError("discriminator batches must be non-empty")
    real = real_target * _clog(real_scores) + (1 - real_target) * _clog(1 - real_scores)
    return float(real.mean() + _clog(1 - fake_scores).mean())


def classifier_value(probs, codes):
    """Mean log-probability the classifier gives the true codes; ascended."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    codes = np.asarray(codes, dtype=np.int64)
    if probs.shape[0] == 0:
        raise ValidationError("classifier batch must be non-empty")
    return float(_clog(probs[np.arange(codes.size), codes - 1]).mean())


def generator_value(fake_scores, probs, codes, lam, fool_mode="random_wrong_label", wrong_codes=None):
    """Generator loss (descended): non-saturating adversarial term plus lam * fooling term."""
    if lam < 0:
        raise ValidationError("lam must be non-negative")
    fake_scores = np.asarray(fake_scores, dtype=np.float64)
    adv = -_clog(fake_scores).mean()
    if lam == 0 and probs is None:
        return float(adv)
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    rows = np.arange(probs.shape[0])
    if fool_mode == "random_wrong_label":
        if probs.shape[1] < 2:
            raise ValidationError("random_wrong_label needs at least 2 codes")
        reg = -_clog(probs[rows, np.asarray(wrong_codes) - 1]).mean()
    elif fool_mode == "minimize_true_logprob":
        reg = _clog(probs[rows, np.asarray(codes) - 1]).mean()
    else:
        raise ValidationError(f"fool_mode must be one of {FOOL_MODES}")
    return float(adv + lam * reg)


def sample_wrong_codes(codes, n_codes, rng):
    """Uniform draw from the n_codes - 1 codes different from each entry."""
    if n_codes < 2:
        raise ValidationError("no incorrect code exists when there is only one code")
    codes = np.asarray(codes, dtype=np.int64)
    shift = rng.integers(1, n_codes, size=codes.size)
    return (codes - 1 + shift) % n_codes + 1


# --- objectives with parameter gradients -----------------------------------

def discriminator_objective(disc, d_params, x_real, c_real, x_fake, c_fake,
                            y_real=None, y_fake=None, real_target=1.0):
    a_real, cache_real = disc.forward(d_params, x_real, c_real, y_real)
    a_fake, cache_fake = disc.forward(d_params, x_fake, c_fake, y_fake)
    d_real = sigmoid(a_real[:, 0])
    d_fake = sigmoid(a_fake[:, 0])
    value = discriminator_value(d_real, d_fake, real_target)
    m_real, m_fake = d_real.size, d_fake.size
    keep_r, keep_f = _inside(d_real), _inside(d_fake)
    g_real = (real_target * (1 - d_real) - (1 - real_target) * d_real) * keep_r / m_real
    g_fake = -d_fake * keep_f / m_fake
    grads, _ = disc.backward(d_params, cache_real, g_real[:, None])
    grads_fake, _ = disc.backward(d_params, cache_fake, g_fake[:, None])
    for k in grads:
        grads[k] += grads_fake[k]
    return value, grads


def classifier_objective(clf, q_params, x, codes):
    b, cache = clf.forward(q_params, x)
    probs = softmax(b)
    value = classifier_value(probs, codes)
    rows = np.arange(codes.size)
    onehot = np.zeros_like(probs)
    onehot[rows, codes - 1] = 1.0
    keep = _inside(probs[rows, codes - 1])
    g = (onehot - probs) * keep[:, None] / codes.size
    grads, _ = clf.backward(q_params, cache, g)
    return value, grads, probs


def generator_objective(gen, disc, clf, g_params, d_params, q_params, z, codes, labels,
                        lam, fool_mode="random_wrong_label", wrong_codes=None):
    """Generator loss and its gradient w.r.t. ``g_params``; D and Q stay fixed."""
    x_fake, cache_g = gen.forward(g_params, z, codes, labels)
    a, cache_d = disc.forward(d_params, x_fake, codes, labels)
    d_fake = sigmoid(a[:, 0])
    m = d_fake.size
    g_a = -(1 - d_fake) * _inside(d_fake) / m
    _, grad_x = disc.backward(d_params, cache_d, g_a[:, None])
    probs = None
    if clf is not None:
        b, cache_q = clf.forward(q_params, x_fake)
        probs = softmax(b)
        rows = np.arange(m)
        target = wrong_codes if fool_mode == "random_wrong_label" else codes
        sign = -1.0 if fool_mode == "random_wrong_label" else 1.0
        onehot = np.zeros_like(probs)
        onehot[rows, np.asarray(target) - 1] = 1.0
        keep = _inside(probs[rows, np.asarray(target) - 1])
        g_b = lam * sign * (onehot - probs) * keep[:, None] / m
        _, grad_xq = clf.backward(q_params, cache_q, g_b)
        grad_x = grad_x + grad_xq
    elif lam != 0:
        raise ValidationError("a non-zero lam needs a classifier")
    value = generator_value(d_fake, probs, codes, lam, fool_mode, wrong_codes)
    grads, _ = gen.backward(g_params, cache_g, grad_x)
    return value, grads


# --- training loops ---------------------------------------------------------

@dataclass
class TrainedModel:
    generator: object
    discriminator: object
    classifier: object
    g_params: dict
    d_params: dict
    q_params: dict
    history: TrainHistory
    weights: np.ndarray
    label_probs: np.ndarray
    config: TrainConfig

    def __iter__(self):
        yield from (self.g_params, self.d_params, self.q_params, self.history)

    def sample(self, n, rng, codes=None, labels=None):
        """Draw ``n`` synthetic rows; returns (X, codes, labels)."""
        nz = self.config.noise_dim
        z = rng.standard_normal((n, nz))
        if codes is None:
            codes = rng.choice(self.weights.size, size=n, p=self.weights) + 1
        if self.generator.n_classes and labels is None:
            labels = rng.choice(self.label_probs.size, size=n, p=self.label_probs)
        lab = labels if self.generator.n_classes else None
        X = self.generator.predict(self.g_params, z, codes, lab)
        return X, np.asarray(codes), labels


def _check_partition(config, data, need_codes=True):
    if not isinstance(data, PartitionedDataset):
        raise ValidationError("training needs a PartitionedDataset")
    if need_codes and data.n_subsets != config.n_subsets:
        raise ValidationError(
            f"config has n_subsets={config.n_subsets} but data has {data.n_subsets}"
        )
    if len(data.data) == 0:
        raise ValidationError("training set is empty")


def pretrain_classifier(clf, q_params, data, epochs, config, rng=None):
    """Supervised code prediction on real (x, c) pairs; updates q_params in place."""
    codes = np.asarray(data.c)
    if codes.size == 0 or codes.min() < 1:
        raise ValidationError("every training sample needs an assigned membership code")
    if rng is None:
        rng = _streams(config.seed)["pretrain"]
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    n = codes.size
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            value, grads, _ = classifier_objective(clf, q_params, data.X[idx], codes[idx])
            if not np.isfinite(value):
                raise TrainingDivergedError("classifier pre-training diverged")
            opt.step(q_params, grads, ascend=True)
    return q_params


def _label_probs(data):
    counts = np.bincount(data.y, minlength=data.data.n_classes)
    return counts / counts.sum()


def _adversarial_run(config, data, n_codes, weights, with_classifier, callback=None):
    rngs = _streams(config.seed)
    dim = data.X.shape[1]
    n_classes = data.data.n_classes if config.conditional else 0
    gen = build_generator(config.noise_dim, dim, n_codes, n_classes, config.hidden, config.embed_dim)
    disc = build_discriminator(dim, n_codes, n_classes, config.hidden, config.embed_dim)
    g_params = gen.init_params(rngs["init_g"])
    d_params = disc.init_params(rngs["init_d"])
    clf, q_params = None, {}
    if with_classifier:
        clf = build_classifier(dim, n_codes, config.hidden)
        q_params = clf.init_params(rngs["init_q"])
        pretrain_classifier(clf, q_params, data, config.pretrain_epochs, config, rngs["pretrain"])

    label_probs = _label_probs(data)
    codes_real = data.c
    labels_real = data.y if n_classes else None
    real_target = 1.0 - config.label_smoothing
    opt_d = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    opt_g = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    opt_q = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    history = TrainHistory()
    n = len(data.data)
    lam = config.lam if with_classifier else 0.0

    def noise_batch(rng, m):
        z = rng.standard_normal((m, config.noise_dim))
        c = rng.choice(n_codes, size=m, p=weights) + 1
        y = rng.choice(label_probs.size, size=m, p=label_probs) if n_classes else None
        return z, c, y

    for epoch in range(1, config.epochs + 1):
        train_q = with_classifier and config.update_classifier and epoch > config.warmup
        d_vals, g_vals, q_vals, q_accs = [], [], [], []
        perm = rngs["shuffle"].permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            m = idx.size
            z, c_fake, y_fake = noise_batch(rngs["noise_d"], m)
            x_fake = gen.predict(g_params, z, c_fake, y_fake)
            d_val, d_grads = discriminator_objective(
                disc, d_params, data.X[idx], codes_real[idx], x_fake, c_fake,
                None if labels_real is None else labels_real[idx], y_fake, real_target,
            )
            opt_d.step(d_params, d_grads, ascend=True)
            d_vals.append(d_val)

            if with_classifier:
                q_val, q_grads, probs = classifier_objective(clf, q_params, x_fake, c_fake)
                q_vals.append(q_val)
                q_accs.append(float(np.mean(probs.argmax(axis=1) + 1 == c_fake)))
                if train_q:
                    opt_q.step(q_params, q_grads, ascend=True)

            z, c_gen, y_gen = noise_batch(rngs["noise_g"], m)
            wrong = None
            if with_classifier and config.fool_mode == "random_wrong_label":
                wrong = sample_wrong_codes(c_gen, n_codes, rngs["wrong"])
            g_val, g_grads = generator_objective(
                gen, disc, clf, g_params, d_params, q_params, z, c_gen, y_gen,
                lam, config.fool_mode, wrong,
            )
            if not (np.isfinite(d_val) and np.isfinite(g_val)):
                raise TrainingDivergedError(f"epoch {epoch}: non-finite loss (d={d_val}, g={g_val})")
            opt_g.step(g_params, g_grads)
            g_vals.append(g_val)

        history.append(
            epoch, float(np.mean(d_vals)), float(np.mean(g_vals)),
            float(np.mean(q_vals)) if q_vals else None,
            float(np.mean(q_accs)) if q_accs else None,
        )
        if callback is not None:
            callback(epoch, g_params, d_params, q_params)

    return TrainedModel(gen, disc, clf, g_params, d_params, q_params, history,
                        np.asarray(weights, dtype=np.float64), label_probs, config)


def train_pigan(config, data, callback=None):
    """Train generator, discriminator and membership classifier on a partition.

    ``callback(epoch, g_params, d_params, q_params)`` runs after every epoch.
    """
    _check_partition(config, data)
    if config.fool_mode == "random_wrong_label" and config.n_subsets < 2:
        raise ValidationError("random_wrong_label needs at least 2 subsets")
    return _adversarial_run(config, data, config.n_subsets, data.weights, True, callback)


def train_gan_baseline(config, data, callback=None):
    """Plain GAN training with the same networks, optimizer and RNG streams.

    On a :class:`PartitionedDataset` the networks are conditioned on its
    membership codes; otherwise every sample carries the single code 1.
    """
    if isinstance(data, PartitionedDataset):
        n_codes, weights = data.n_subsets, data.weights
    else:
        if len(data) == 0:
            raise ValidationError("training set is empty")
        data = _SingleCode(data)
        n_codes, weights = 1, np.ones(1)
    return _adversarial_run(config, data, n_codes, weights, False, callback)


class _SingleCode:
    """Adapter presenting an unpartitioned dataset with every code equal to 1."""

    def __init__(self, data):
        self.data = data
        self.X = data.X
        self.y = data.y
        self.c = np.ones(len(data), dtype=np.int64)


# --- exact training of an enumerable generator -----------------------------

@dataclass
class TabularRun:
    generator: TabularGenerator
    d_logits: np.ndarray
    q_logits: np.ndarray
    weights: np.ndarray
    history: TrainHistory

    @property
    def mutual_information(self):
        return mutual_information(self.generator.table, self.weights)


def empirical_conditionals(symbols, codes, alphabet_size, n_codes):
    table = np.zeros((n_codes, alphabet_size))
    np.add.at(table, (np.asarray(codes) - 1, np.asarray(symbols)), 1.0)
    counts = table.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise ValidationError("every code needs at least one sample")
    return table / counts, counts[:, 0] / counts.sum()


def _tabular_q_grad(q_logits, dist_by_code, weights):
    """Gradient of sum_c w_c sum_x dist_c(x) ln Q_c(x) w.r.t. the (K, N) logits."""
    q = softmax(q_logits)
    mass = weights[:, None] * dist_by_code            # (N, K)
    keep = _inside(q).T                               # (N, K)
    kept = mass * keep
    grad = kept.T - q * kept.sum(axis=0)[:, None]
    value = float(np.sum(mass * _clog(q.T)))
    return value, grad


def exact_value(p_data, p_gen, d_table, weights, real_target=1.0):
    """Adversarial value sum_c w_c E[ln D] + w_c E[ln(1 - D)] by enumeration.

    All tables are (N, K): one row per code over a K-symbol alphabet.
    """
    p_data, p_gen, d = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (p_data, p_gen, d_table))
    if not p_data.shape == p_gen.shape == d.shape:
        raise ValidationError("data, generator and discriminator tables must share a shape")
    w = np.asarray(weights, dtype=np.float64)[:, None]
    real = real_target * _clog(d) + (1 - real_target) * _clog(1 - d)
    return float(np.sum(w * (p_data * real + p_gen * _clog(1 - d))))


def optimal_discriminator(p_data, p_gen):
    """Pointwise p_data / (p_data + p_gen); 1/2 where both vanish."""
    p_data = np.asarray(p_data, dtype=np.float64)
    p_gen = np.asarray(p_gen, dtype=np.float64)
    total = p_data + p_gen
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, p_data / np.where(total > 0, total, 1.0), 0.5)


def train_tabular_pigan(config, symbols, codes, alphabet_size, init_scale=0.1):
    """Algorithm-1 style training of a tabular generator on exact expectations.

    Every epoch takes one full-batch step of D, Q (after warmup) and G, with
    expectations over the generator computed by enumeration instead of
    sampling. D is a (N, K) logit table, Q a (K, N) logit table.
    """
    n_codes = config.n_subsets
    p_data, weights = empirical_conditionals(symbols, codes, alphabet_size, n_codes)
    rngs = _streams(config.seed)
    gen = TabularGenerator(init_scale * rngs["init_g"].standard_normal((n_codes, alphabet_size)))
    d_logits = init_scale * rngs["init_d"].standard_normal((n_codes, alphabet_size))
    q_logits = init_scale * rngs["init_q"].standard_normal((alphabet_size, n_codes))
    opt = {k: Adam(config.learning_rate, config.beta1, config.beta2, config.eps) for k in "dqg"}
    wrap = lambda arr: {"w": arr}

    for _ in range(config.pretrain_epochs):
        _, grad = _tabular_q_grad(q_logits, p_data, weights)
        opt["q"].step(wrap(q_logits), wrap(grad), ascend=True)
    opt["q"] = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)

    history = TrainHistory()
    real_target = 1.0 - config.label_smoothing
    lam = config.lam
    for epoch in range(1, config.epochs + 1):
        p_gen = gen.table
        d = sigmoid(d_logits)
        w = weights[:, None]
        d_val = exact_value(p_data, p_gen, d, weights, real_target)
        keep = _inside(d)
        d_grad = w * keep * (p_data * (real_target - d) - p_gen * d)
        opt["d"].step(wrap(d_logits), wrap(d_grad), ascend=True)

        q_val, q_grad = _tabular_q_grad(q_logits, p_gen, weights)
        q = softmax(q_logits)
        q_acc = float(np.sum(weights[:, None] * p_gen * (q.argmax(axis=1)[None, :] == np.arange(n_codes)[:, None])))
        if config.update_classifier and epoch > config.warmup:
            opt["q"].step(wrap(q_logits), wrap(q_grad), ascend=True)
            q = softmax(q_logits)

        d = sigmoid(d_logits)
        f = -_clog(d)                                  # (N, K)
        log_q = _clog(q.T)                             # (N, K): ln Q_c(x)
        if config.fool_mode == "random_wrong_label":
            # expectation over a uniformly drawn wrong code
            reg = (-(log_q.sum(axis=0, keepdims=True) - log_q)) / (n_codes - 1)
        else:
            reg = log_q
        f = f + lam * reg
        g_val = float(np.sum(w * p_gen * f))
        g_grad = w * p_gen * (f - np.sum(p_gen * f, axis=1, keepdims=True))
        opt["g"].step(wrap(gen.logits), wrap(g_grad))
        history.append(epoch, d_val, g_val, q_val, q_acc)

    return TabularRun(gen, d_logits, q_logits, weights, history)
