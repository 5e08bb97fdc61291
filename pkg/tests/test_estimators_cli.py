import json
import subprocess
import sys

import numpy as np
import pytest
from sklearn.base import clone

from pigan import GAN, PIGAN, harness
from pigan.cli import main
from pigan.data import make_gaussian_mixture, ring_means


def _xy():
    data = make_gaussian_mixture(4, ring_means(4, 0.6), 0.1, 80, seed=0)
    return data.X, data.y


SMALL = dict(epochs=2, batch_size=16, hidden=(8,), noise_dim=3, embed_dim=2)


class TestEstimators:
    def test_get_params_and_clone(self):
        est = PIGAN(lam=3.0, n_subsets=3, **SMALL)
        params = est.get_params()
        assert params["lam"] == 3.0 and params["hidden"] == (8,)
        assert clone(est).get_params() == params

    def test_fit_sample_score(self):
        X, y = _xy()
        est = PIGAN(pretrain_epochs=1, **SMALL).fit(X, y)
        samples, labels = est.sample(10, random_state=0)
        assert samples.shape == (10, 2) and labels is None
        scores = est.score_samples(X)
        assert scores.shape == (80,) and np.all((scores > 0) & (scores < 1))
        np.testing.assert_array_equal(scores, est.code_scores(X).max(axis=1))
        assert len(est.history_) == 2
        assert sorted(np.bincount(est.codes_)[1:].tolist()) == [40, 40]

    def test_explicit_codes(self):
        X, y = _xy()
        codes = np.repeat([1, 2], 40)
        est = PIGAN(pretrain_epochs=0, **SMALL).fit(X, y, codes=codes)
        np.testing.assert_array_equal(est.codes_, codes)

    def test_baseline(self):
        X, _ = _xy()
        est = GAN(**SMALL).fit(X)
        assert est.code_scores(X).shape == (80, 1)

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            PIGAN().sample(3)


def _write_config(tmp_path, **train):
    cfg = harness.toy_config().to_dict()
    cfg["dataset"].update(n_samples=300, train_fraction=0.2)
    cfg["train"].update(epochs=1, warmup_epochs=1, pretrain_epochs=1, hidden=[8], noise_dim=4, batch_size=32)
    cfg["train"].update(train)
    cfg["attack"].update(M=20, mc_repeats=2, n_generated=100, pca_components=2)
    cfg["fidelity"].update(n_generated=300, oracle_hidden=[6], oracle_epochs=1)
    cfg["sweep"].update(lambda_values=[0.0, 1.0], seeds=[0])
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestCli:
    def test_pipeline(self, tmp_path, capsys):
        cfg, out = _write_config(tmp_path), str(tmp_path / "res")
        common = ["--config", cfg, "--out", out, "--seed", "3"]
        assert main(["train", *common]) == 0
        assert main(["attack", *common]) == 0
        attack = json.loads((tmp_path / "res" / "attack_pigan_seed3.json").read_text())
        assert set(attack) == {"wb_accuracy", "tvd", "mc_set_accuracy", "mc_single_accuracy"}
        assert main(["evaluate", *common]) == 0
        assert main(["histogram", *common, "--bins", "5"]) == 0
        assert (tmp_path / "res" / "plots" / "scores_pigan_seed3.csv").exists()

    def test_sweep_then_plot(self, tmp_path):
        cfg, out = _write_config(tmp_path), str(tmp_path / "res")
        assert main(["sweep", "--config", cfg, "--out", out]) == 0
        assert main(["plot", "--config", cfg, "--out", out, "--x", "wb_accuracy", "--y", "tvd"]) == 0
        assert (tmp_path / "res" / "plots" / "tradeoff_wb_accuracy_vs_tvd.csv").exists()

    def test_validation_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"train": {"lam": -1}}))
        assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 1
        assert "lam" in capsys.readouterr().err

    def test_missing_checkpoint(self, tmp_path):
        assert main(["attack", "--config", _write_config(tmp_path), "--out", str(tmp_path / "none")]) == 1

    def test_unknown_metric(self, tmp_path):
        cfg, out = _write_config(tmp_path), str(tmp_path / "res")
        main(["sweep", "--config", cfg, "--out", out])
        assert main(["plot", "--out", out, "--x", "wb", "--y", "fid"]) == 1

    def test_runtime_failure_exit_code(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("disk on fire")
        monkeypatch.setattr(harness, "run_sweep", boom)
        assert main(["sweep", "--config", _write_config(tmp_path), "--out", str(tmp_path)]) == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "pigan", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "sweep" in proc.stdout
