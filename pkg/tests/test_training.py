import math

import numpy as np
import pytest

from pigan.data import LabeledDataset, make_gaussian_mixture, partition_uniform
from pigan.divergence import mutual_information
from pigan.exceptions import TrainingDivergedError, ValidationError
from pigan.gradcheck import numerical_gradient, relative_error
from pigan.models import build_classifier, build_discriminator, build_generator
from pigan.nn import copy_params, n_parameters, params_equal
from pigan.training import (TrainConfig, TrainHistory, _streams, _tabular_q_grad,
                            classifier_objective, classifier_value, discriminator_objective,
                            discriminator_value, empirical_conditionals, exact_value, generator_objective, generator_value,
                            optimal_discriminator, pretrain_classifier, sample_wrong_codes,
                            train_gan_baseline, train_pigan, train_tabular_pigan)

LN2 = math.log(2)


def _toy(n=64, seed=0, n_subsets=2):
    data = make_gaussian_mixture(4, [[0.5, 0.5], [-0.5, 0.5], [0.5, -0.5], [-0.5, -0.5]], 0.1, n, seed)
    return partition_uniform(data, n_subsets, seed)


def _small_config(**kw):
    base = dict(epochs=3, batch_size=16, hidden=(8,), noise_dim=3, embed_dim=2,
                pretrain_epochs=1, learning_rate=1e-3)
    base.update(kw)
    return TrainConfig(**base)


class TestObjectiveValues:
    def test_discriminator_half(self):
        assert discriminator_value([0.5], [0.5]) == pytest.approx(-2 * LN2, abs=1e-12)

    def test_discriminator_perfect_limit(self):
        value = discriminator_value([1 - 1e-12], [1e-12])
        assert -1e-6 < value < 0

    def test_discriminator_single_sample(self):
        assert discriminator_value([0.8], [0.3]) == pytest.approx(math.log(0.8) + math.log(0.7), abs=1e-12)
        assert discriminator_value([0.8], [0.3]) == pytest.approx(-0.5798, abs=1e-4)

    def test_discriminator_label_smoothing(self):
        value = discriminator_value([0.8], [0.3], real_target=0.9)
        assert value == pytest.approx(0.9 * math.log(0.8) + 0.1 * math.log(0.2) + math.log(0.7), abs=1e-12)

    def test_classifier_uniform(self):
        assert classifier_value([[0.5, 0.5]] * 3, [1, 2, 1]) == pytest.approx(-LN2, abs=1e-12)

    def test_classifier_perfect(self):
        assert classifier_value([[1.0, 0.0], [0.0, 1.0]], [1, 2]) == pytest.approx(0.0, abs=1e-6)

    def test_classifier_point_nine(self):
        assert classifier_value([[0.9, 0.1], [0.1, 0.9]], [1, 2]) == pytest.approx(math.log(0.9), abs=1e-12)

    def test_generator_adversarial_only(self):
        assert generator_value([0.5, 0.5], None, [1, 2], lam=0.0) == pytest.approx(LN2, abs=1e-12)

    def test_generator_minimize_true_logprob(self):
        value = generator_value([0.5], [[0.5, 0.5]], [1], lam=1.0, fool_mode="minimize_true_logprob")
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_generator_random_wrong_label(self):
        value = generator_value([0.5], [[0.5, 0.5]], [1], lam=1.0, wrong_codes=[2])
        assert value == pytest.approx(2 * LN2, abs=1e-12)

    def test_negative_lambda(self):
        with pytest.raises(ValidationError):
            generator_value([0.5], [[0.5, 0.5]], [1], lam=-1.0, wrong_codes=[2])

    def test_empty_batch(self):
        with pytest.raises(ValidationError):
            discriminator_value([], [0.5])


class TestWrongCodes:
    def test_never_true_and_uniform(self):
        rng = np.random.default_rng(0)
        codes = np.full(30000, 2)
        wrong = sample_wrong_codes(codes, 3, rng)
        assert not np.any(wrong == 2)
        frac = np.mean(wrong == 1)
        assert abs(frac - 0.5) < 0.02

    def test_single_code(self):
        with pytest.raises(ValidationError):
            sample_wrong_codes([1], 1, np.random.default_rng(0))


class TestExactValue:
    def test_equal_distributions_at_half(self):
        p = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]])
        value = exact_value(p, p, np.full_like(p, 0.5), [0.4, 0.6])
        assert abs(value + math.log(4)) < 1e-9

    def test_optimal_discriminator_never_beats_minus_ln4(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p_data = rng.dirichlet(np.ones(5), size=3)
            p_gen = rng.dirichlet(np.ones(5), size=3)
            w = rng.dirichlet(np.ones(3))
            assert exact_value(p_data, p_gen, optimal_discriminator(p_data, p_gen), w) >= -math.log(4) - 1e-12

    def test_optimal_discriminator_on_matching_tables(self):
        p = np.array([[0.25, 0.75, 0.0]])
        np.testing.assert_allclose(optimal_discriminator(p, p), [[0.5, 0.5, 0.5]])


def _grad_fixture(conditional=False):
    rng = np.random.default_rng(7)
    n_classes = 3 if conditional else 0
    gen = build_generator(3, 2, n_codes=2, n_classes=n_classes, hidden=(8, 6), embed_dim=2)
    disc = build_discriminator(2, n_codes=2, n_classes=n_classes, hidden=(8, 6), embed_dim=2)
    clf = build_classifier(2, n_codes=2, hidden=(8, 6))
    params = [net.init_params(rng) for net in (gen, disc, clf)]
    for p in params:
        assert n_parameters(p) <= 1000
    m = 7
    batch = dict(
        x_real=rng.uniform(-1, 1, (m, 2)), c_real=rng.integers(1, 3, m),
        z=rng.normal(size=(m, 3)), c_fake=rng.integers(1, 3, m),
        y=rng.integers(0, 3, m) if conditional else None,
    )
    batch["wrong"] = 3 - batch["c_fake"]
    batch["x_fake"] = gen.predict(params[0], batch["z"], batch["c_fake"], batch["y"])
    return (gen, disc, clf), params, batch


class TestGradients:
    @pytest.mark.parametrize("real_target", [1.0, 0.9])
    @pytest.mark.parametrize("conditional", [False, True])
    def test_discriminator(self, real_target, conditional):
        (_, disc, _), (_, d_params, _), b = _grad_fixture(conditional)
        args = (b["x_real"], b["c_real"], b["x_fake"], b["c_fake"], b["y"], b["y"], real_target)
        _, grads = discriminator_objective(disc, d_params, *args)
        num = numerical_gradient(lambda p: discriminator_objective(disc, p, *args)[0], d_params)
        assert relative_error(grads, num) < 1e-4

    def test_classifier(self):
        (_, _, clf), (_, _, q_params), b = _grad_fixture()
        _, grads, _ = classifier_objective(clf, q_params, b["x_fake"], b["c_fake"])
        num = numerical_gradient(lambda p: classifier_objective(clf, p, b["x_fake"], b["c_fake"])[0], q_params)
        assert relative_error(grads, num) < 1e-4

    @pytest.mark.parametrize("fool_mode", ["random_wrong_label", "minimize_true_logprob"])
    @pytest.mark.parametrize("conditional", [False, True])
    def test_generator(self, fool_mode, conditional):
        (gen, disc, clf), (g_params, d_params, q_params), b = _grad_fixture(conditional)

        def objective(p):
            return generator_objective(gen, disc, clf, p, d_params, q_params, b["z"], b["c_fake"],
                                       b["y"], 1.7, fool_mode, b["wrong"])

        _, grads = objective(g_params)
        num = numerical_gradient(lambda p: objective(p)[0], g_params)
        assert relative_error(grads, num) < 1e-4

    def test_generator_without_classifier(self):
        (gen, disc, _), (g_params, d_params, _), b = _grad_fixture()

        def objective(p):
            return generator_objective(gen, disc, None, p, d_params, {}, b["z"], b["c_fake"],
                                       None, 0.0)

        _, grads = objective(g_params)
        assert relative_error(grads, numerical_gradient(lambda p: objective(p)[0], g_params)) < 1e-4

    def test_tabular_classifier_gradient(self):
        rng = np.random.default_rng(0)
        q_logits = rng.normal(size=(4, 3))
        dist = rng.dirichlet(np.ones(4), size=3)
        w = rng.dirichlet(np.ones(3))
        _, grad = _tabular_q_grad(q_logits, dist, w)
        num = numerical_gradient(lambda p: _tabular_q_grad(p["q"], dist, w)[0], {"q": q_logits})
        assert relative_error({"q": grad}, num) < 1e-6


class TestConfig:
    def test_default_warmup(self):
        assert TrainConfig(epochs=300).warmup == 200
        assert TrainConfig(epochs=10).warmup == 7

    @pytest.mark.parametrize("kw", [dict(lam=-1), dict(epochs=-1), dict(batch_size=0),
                                    dict(fool_mode="nope"), dict(label_smoothing=1.0),
                                    dict(epochs=5, warmup_epochs=6)])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            TrainConfig(**kw)


class TestHistory:
    def test_non_finite_rejected(self):
        with pytest.raises(TrainingDivergedError):
            TrainHistory().append(1, float("nan"), 0.0)

    def test_csv(self, tmp_path):
        h = TrainHistory()
        h.append(1, -1.2, 0.7)
        h.append(2, -1.3, 0.6, -0.6, 0.5)
        h.to_csv(tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "epoch,d_loss,g_loss,q_loss,q_accuracy"
        assert len(lines) == 3


class TestPretrain:
    def test_zero_epochs_keeps_params(self):
        data = _toy()
        clf = build_classifier(2, 2, hidden=(8,))
        q = clf.init_params(np.random.default_rng(0))
        before = copy_params(q)
        pretrain_classifier(clf, q, data, 0, _small_config())
        assert params_equal(q, before)

    def test_separable_subsets(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(-1, 0.2, (40, 2)), rng.normal(1, 0.2, (40, 2))])
        data = LabeledDataset(X, np.zeros(80, dtype=int), np.repeat([1, 2], 40))
        from pigan.data import PartitionedDataset
        part = PartitionedDataset(data, 2)
        clf = build_classifier(2, 2, hidden=(8,))
        q = clf.init_params(np.random.default_rng(1))
        pretrain_classifier(clf, q, part, 200, _small_config(learning_rate=1e-2))
        assert np.mean(clf.predict(q, X).argmax(axis=1) + 1 == part.c) == 1.0

    def test_identical_subsets_are_chance(self):
        train = _toy(n=200, seed=1)
        held = _toy(n=2000, seed=2)
        clf = build_classifier(2, 2, hidden=(16,))
        q = clf.init_params(np.random.default_rng(1))
        pretrain_classifier(clf, q, train, 50, _small_config(learning_rate=1e-2))
        acc = np.mean(clf.predict(q, held.X).argmax(axis=1) + 1 == held.c)
        assert abs(acc - 0.5) <= 0.1


class TestTraining:
    def test_zero_epochs_returns_post_pretrain_state(self):
        cfg = _small_config(epochs=0, pretrain_epochs=2)
        data = _toy()
        model = train_pigan(cfg, data)
        rngs = _streams(cfg.seed)
        assert params_equal(model.g_params, model.generator.init_params(rngs["init_g"]))
        assert params_equal(model.d_params, model.discriminator.init_params(rngs["init_d"]))
        q = model.classifier.init_params(rngs["init_q"])
        pretrain_classifier(model.classifier, q, data, 2, cfg, rngs["pretrain"])
        assert params_equal(model.q_params, q)
        assert len(model.history) == 0

    def test_baseline_zero_epochs(self):
        cfg = _small_config(epochs=0)
        model = train_gan_baseline(cfg, _toy().data)
        assert params_equal(model.g_params, model.generator.init_params(_streams(0)["init_g"]))

    def test_baseline_reproducible(self):
        a = train_gan_baseline(_small_config(), _toy().data)
        b = train_gan_baseline(_small_config(), _toy().data)
        assert a.history.records == b.history.records
        assert params_equal(a.g_params, b.g_params)

    def test_lambda_zero_matches_baseline(self):
        data = _toy()
        traj = {"pigan": [], "gan": []}
        cfg = _small_config(epochs=4, lam=0.0, update_classifier=False)
        train_pigan(cfg, data, lambda e, g, d, q: traj["pigan"].append((copy_params(g), copy_params(d))))
        train_gan_baseline(cfg, data, lambda e, g, d, q: traj["gan"].append((copy_params(g), copy_params(d))))
        for (g1, d1), (g2, d2) in zip(traj["pigan"], traj["gan"]):
            assert params_equal(g1, g2) and params_equal(d1, d2)

    def test_classifier_frozen_during_warmup(self):
        snaps = []
        cfg = _small_config(epochs=6, warmup_epochs=3, lam=1.0)
        model = train_pigan(cfg, _toy(), lambda e, g, d, q: snaps.append(copy_params(q)))
        assert all(params_equal(snaps[0], s) for s in snaps[:3])
        assert not params_equal(snaps[2], snaps[3])
        assert np.all(np.isfinite(model.history.column("q_loss")))

    def test_partition_mismatch(self):
        with pytest.raises(ValidationError):
            train_pigan(_small_config(n_subsets=3), _toy())

    def test_requires_partition(self):
        with pytest.raises(ValidationError):
            train_pigan(_small_config(), _toy().data)

    def test_conditional_sampling(self):
        model = train_pigan(_small_config(conditional=True), _toy())
        X, codes, labels = model.sample(20, np.random.default_rng(0), labels=np.zeros(20, dtype=int))
        assert X.shape == (20, 2) and np.all(labels == 0) and set(codes) <= {1, 2}

    def test_baseline_learns_single_mode_mean(self):
        data = make_gaussian_mixture(1, [[0.3, -0.2]], 0.1, 256, seed=0)
        cfg = TrainConfig(epochs=300, batch_size=32, hidden=(32, 32), noise_dim=4,
                          learning_rate=1e-3, seed=0)
        model = train_gan_baseline(cfg, data)
        X, _, _ = model.sample(2000, np.random.default_rng(1))
        assert np.linalg.norm(X.mean(axis=0) - data.X.mean(axis=0)) < 0.2


def _tabular_problem(seed):
    # two subsets with clearly different symbol frequencies
    rng = np.random.default_rng(seed)
    p1, p2 = np.array([0.6, 0.2, 0.1, 0.1]), np.array([0.1, 0.1, 0.2, 0.6])
    symbols = np.concatenate([rng.choice(4, 200, p=p1), rng.choice(4, 200, p=p2)])
    codes = np.repeat([1, 2], 200)
    return symbols, codes


class TestTabular:
    def test_learns_conditionals_without_penalty(self):
        symbols, codes = _tabular_problem(0)
        cfg = TrainConfig(lam=0.0, epochs=3000, learning_rate=1e-2, pretrain_epochs=10, seed=0)
        run = train_tabular_pigan(cfg, symbols, codes, 4)
        p_data, w = empirical_conditionals(symbols, codes, 4, 2)
        assert run.mutual_information == pytest.approx(mutual_information(p_data, w), abs=0.02)

    def test_penalty_lowers_mutual_information(self):
        symbols, codes = _tabular_problem(0)
        common = dict(epochs=3000, learning_rate=1e-2, pretrain_epochs=10, seed=0)
        free = train_tabular_pigan(TrainConfig(lam=0.0, **common), symbols, codes, 4)
        tied = train_tabular_pigan(TrainConfig(lam=10.0, **common), symbols, codes, 4)
        assert tied.mutual_information < free.mutual_information
        assert np.allclose(tied.generator.table.sum(axis=1), 1.0)
