"""Experiment orchestration: configs, seeded runs, sweeps and result files."""

import csv
import dataclasses
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import (AdversaryDataset, code_scores, mc_set_attack, mc_single_attack, tvd_attack,
                      wb_attack)
from .data import (LabeledDataset, PcaProjection, feasible_components, make_gaussian_mixture,
                   partition_uniform, read_tensor_file, ring_means, split_train_holdout)
from .exceptions import ValidationError
from .fidelity import MLPClassifier, downstream_accuracy, fid, inception_score, intra_fid
from .nn import Network, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainedModel, TrainHistory, train_gan_baseline, train_pigan

log = logging.getLogger(__name__)

MODELS = ("pigan", "gan")
METRICS = ("wb_accuracy", "tvd", "mc_set_accuracy", "mc_single_accuracy", "inception_score",
           "fid", "intra_fid", "downstream_accuracy")
RECORD_FIELDS = ("model_name", "seed", "lam", "n_subsets", *METRICS, "wall_time_seconds",
                 "failure_reason", "config")


# --- configuration ----------------------------------------------------------

@dataclass
class DatasetSpec:
    kind: str = "gaussian_mixture"
    n_modes: int = 8
    radius: float = 0.7
    mode_std: float = 0.3
    n_samples: int = 2000
    train_fraction: float = 0.1
    seed: int = 1234
    path: str = None
    scale_to_unit: bool = True

    def load(self):
        if self.kind == "gaussian_mixture":
            return make_gaussian_mixture(self.n_modes, ring_means(self.n_modes, self.radius),
                                         self.mode_std, self.n_samples, self.seed)
        if self.kind == "tensor_file":
            if not self.path:
                raise ValidationError("dataset.path is required for tensor_file datasets")
            return read_tensor_file(self.path, self.scale_to_unit)
        raise ValidationError(f"unknown dataset kind {self.kind!r}")


@dataclass
class AttackSpec:
    M: int = 100
    mc_repeats: int = 20
    n_generated: int = 2000
    pca_components: int = 40
    pca_fraction: float = 0.1
    tvd_bins: int = 100


@dataclass
class FidelitySpec:
    n_generated: int = 2000
    is_splits: int = 1
    oracle_hidden: tuple = (64, 32)
    oracle_epochs: int = 30
    oracle_learning_rate: float = 2e-3
    classifier_hidden: tuple = (64, 64)
    classifier_epochs: int = 20
    classifier_learning_rate: float = 2e-3
    classifier_batch_size: int = 64


@dataclass
class SweepSpec:
    models: list = field(default_factory=lambda: ["pigan"])
    lambda_values: list = field(default_factory=lambda: [0.0, 10.0])
    N_values: list = field(default_factory=lambda: [2])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def __post_init__(self):
        for name in ("models", "lambda_values", "N_values", "seeds"):
            if not getattr(self, name):
                raise ValidationError(f"sweep.{name} must be non-empty")
        unknown = set(self.models) - set(MODELS)
        if unknown:
            raise ValidationError(f"unknown models {sorted(unknown)}; choose from {MODELS}")


_SECTIONS = {"dataset": DatasetSpec, "train": TrainConfig, "attack": AttackSpec,
             "fidelity": FidelitySpec, "sweep": SweepSpec}


@dataclass
class ExperimentConfig:
    model: str = "pigan"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackSpec = field(default_factory=AttackSpec)
    fidelity: FidelitySpec = field(default_factory=FidelitySpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    record_wall_time: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kwargs = {}
        for name, klass in _SECTIONS.items():
            section = d.pop(name, {}) or {}
            known = {f.name for f in dataclasses.fields(klass)}
            unknown = set(section) - known
            if unknown:
                raise ValidationError(f"unknown keys in {name}: {sorted(unknown)}")
            kwargs[name] = klass(**section)
        unknown = set(d) - {"model", "record_wall_time"}
        if unknown:
            raise ValidationError(f"unknown top-level keys: {sorted(unknown)}")
        return cls(**d, **kwargs)

    def to_dict(self):
        out = {"model": self.model, "record_wall_time": self.record_wall_time}
        for name in _SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def with_cell(self, model, lam, n_subsets, seed):
        train = dataclasses.replace(self.train, lam=float(lam), n_subsets=int(n_subsets), seed=int(seed))
        return dataclasses.replace(self, model=model, train=train)


def toy_config():
    """Desk-scale defaults: 8-mode ring mixture, 200 training points."""
    train = TrainConfig(n_subsets=2, lam=10.0, epochs=1500, batch_size=64, learning_rate=2e-3,
                        pretrain_epochs=20, warmup_epochs=500, hidden=(128, 128), noise_dim=16)
    return ExperimentConfig(train=train)


# --- records ----------------------------------------------------------------

@dataclass
class ExperimentRecord:
    model_name: str
    seed: int
    lam: float
    n_subsets: int
    config: str
    wb_accuracy: float = None
    tvd: float = None
    mc_set_accuracy: float = None
    mc_single_accuracy: float = None
    inception_score: float = None
    fid: float = None
    intra_fid: float = None
    downstream_accuracy: float = None
    wall_time_seconds: float = None
    failure_reason: str = None

    def to_dict(self):
        return {k: getattr(self, k) for k in RECORD_FIELDS}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d.get(k) for k in RECORD_FIELDS})

    def add_failure(self, stage, fields, err):
        for name in fields:
            setattr(self, name, None)
        reason = f"{stage}: {type(err).__name__}: {err}"
        self.failure_reason = reason if not self.failure_reason else f"{self.failure_reason}; {reason}"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name, text):
    if text == "":
        return None
    if name in ("model_name", "failure_reason", "config"):
        return text
    if name in ("seed", "n_subsets"):
        return int(text)
    return float(text)


def write_records_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        for r in records:
            d = r.to_dict()
            writer.writerow([_fmt(d[k]) for k in RECORD_FIELDS])


def read_records_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
            raise ValidationError(f"{path}: header does not match the record schema")
        return [ExperimentRecord.from_dict({k: _parse(k, row[k]) for k in RECORD_FIELDS}) for row in reader]


def write_records_json(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in records], fh, indent=2)


def read_records_json(path):
    with open(path, encoding="utf-8") as fh:
        return [ExperimentRecord.from_dict(d) for d in json.load(fh)]


# --- model persistence ------------------------------------------------------

def save_model(model, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "config": model.config.to_dict(),
        "weights": model.weights.tolist(),
        "label_probs": model.label_probs.tolist(),
    }
    save_checkpoint(directory / "generator.ckpt", model.g_params, {**meta, "net": model.generator.config()})
    save_checkpoint(directory / "discriminator.ckpt", model.d_params, {"net": model.discriminator.config()})
    if model.classifier is not None:
        save_checkpoint(directory / "classifier.ckpt", model.q_params, {"net": model.classifier.config()})
    model.history.to_csv(directory / "history.csv")


def load_model(directory):
    directory = Path(directory)
    g_params, meta = load_checkpoint(directory / "generator.ckpt")
    d_params, d_meta = load_checkpoint(directory / "discriminator.ckpt")
    clf, q_params = None, {}
    if (directory / "classifier.ckpt").exists():
        q_params, q_meta = load_checkpoint(directory / "classifier.ckpt")
        clf = Network.from_config(q_meta["net"])
    return TrainedModel(
        Network.from_config(meta["net"]), Network.from_config(d_meta["net"]), clf,
        g_params, d_params, q_params, TrainHistory(),
        np.asarray(meta["weights"]), np.asarray(meta["label_probs"]), TrainConfig(**meta["config"]),
    )


# --- single experiment ------------------------------------------------------

@dataclass
class ExperimentData:
    full: LabeledDataset
    train: object
    holdout: LabeledDataset
    pca_fit: LabeledDataset
    mc_holdout: LabeledDataset


def prepare_data(config, seed):
    """Split, partition and carve out the PCA-fitting subset, all from ``seed``."""
    full = config.dataset.load()
    seeds = np.random.SeedSequence(seed).spawn(3)
    split_seed, part_seed, pca_seed = (int(s.generate_state(1)[0]) for s in seeds)
    train, holdout = split_train_holdout(full, config.dataset.train_fraction, split_seed)
    if config.model == "pigan":
        train = partition_uniform(train, config.train.n_subsets, part_seed)
    pca_part, mc_part = split_train_holdout(holdout, config.attack.pca_fraction, pca_seed)
    return ExperimentData(full, train, holdout, pca_part, mc_part)


def train_model(config, data):
    if config.model == "pigan":
        return train_pigan(config.train, data.train)
    cfg = dataclasses.replace(config.train, n_subsets=1, lam=0.0)
    return train_gan_baseline(cfg, data.train if isinstance(data.train, LabeledDataset) else data.train.data)


def _train_set(data):
    return data.train.data if hasattr(data.train, "data") else data.train


def discriminator_attacks(model, data, spec, seed):
    """White-box and TVD attacks: every train row against every holdout row."""
    train = _train_set(data)
    n_codes = model.weights.size
    disc, d_params = model.discriminator, model.d_params
    lab = (lambda ds: ds.y) if disc.n_classes else (lambda ds: None)
    s_train = code_scores(disc, d_params, train.X, n_codes, lab(train))
    s_hold = code_scores(disc, d_params, data.holdout.X, n_codes, lab(data.holdout))
    is_member = np.r_[np.ones(len(train), bool), np.zeros(len(data.holdout), bool)]
    adversary = AdversaryDataset(np.vstack([train.X, data.holdout.X]), is_member, m=len(train))
    wb = wb_attack(np.r_[s_train.max(axis=1), s_hold.max(axis=1)], adversary,
                   np.random.default_rng([seed, 1]))
    return {"wb_accuracy": wb.accuracy, "tvd": tvd_attack(s_train, s_hold, spec.tvd_bins)}


def run_attacks(model, data, spec, seed):
    out = discriminator_attacks(model, data, spec, seed)
    train = _train_set(data)
    rng = np.random.default_rng([seed, 3])
    generated, _, _ = model.sample(spec.n_generated, rng)
    k = feasible_components(spec.pca_components, len(data.pca_fit), data.pca_fit.X.shape[1])
    pca = PcaProjection(k).fit(data.pca_fit.X)
    M = min(spec.M, len(train), len(data.mc_holdout))
    pool = AdversaryDataset(np.vstack([train.X, data.mc_holdout.X]),
                            np.r_[np.ones(len(train), bool), np.zeros(len(data.mc_holdout), bool)], M=M)
    out["mc_set_accuracy"] = mc_set_attack(pool, generated, spec.mc_repeats, pca, rng).accuracy
    single = []
    for _ in range(spec.mc_repeats):
        idx = np.concatenate([rng.choice(pool.members, M, replace=False),
                              rng.choice(pool.non_members, M, replace=False)])
        draw = AdversaryDataset(pool.X[idx], pool.is_member[idx], M=M)
        single.append(mc_single_attack(draw, generated, pca, rng).accuracy)
    out["mc_single_accuracy"] = float(np.mean(single))
    return out


_ORACLES = {}


def fit_oracle(config, data):
    """Evaluation classifier trained once on all real data; cached per dataset."""
    spec = config.fidelity
    key = (json.dumps(dataclasses.asdict(config.dataset), sort_keys=True),
           json.dumps(dataclasses.asdict(spec), sort_keys=True, default=list))
    if key not in _ORACLES:
        oracle = MLPClassifier(hidden=tuple(spec.oracle_hidden), epochs=spec.oracle_epochs,
                               learning_rate=spec.oracle_learning_rate, random_state=0)
        _ORACLES[key] = oracle.fit(data.full.X, data.full.y, classes=np.arange(data.full.n_classes))
    return _ORACLES[key]


def run_fidelity(model, data, oracle, spec, seed):
    rng = np.random.default_rng([seed, 2])
    gen_X, _, gen_y = model.sample(spec.n_generated, rng)
    if not model.generator.n_classes:
        gen_y = oracle.predict(gen_X)
    results, errors = {}, {}
    metrics = {
        "inception_score": lambda: inception_score(gen_X, oracle, spec.is_splits),
        "fid": lambda: fid(data.holdout.X, gen_X, oracle),
        "intra_fid": lambda: intra_fid(data.holdout.X, data.holdout.y, gen_X, gen_y, oracle),
        "downstream_accuracy": lambda: downstream_accuracy(
            gen_X, gen_y, data.holdout.X, data.holdout.y, classes=np.arange(data.full.n_classes),
            hidden=tuple(spec.classifier_hidden), epochs=spec.classifier_epochs,
            learning_rate=spec.classifier_learning_rate, batch_size=spec.classifier_batch_size,
            random_state=seed),
    }
    for name, fn in metrics.items():
        try:
            results[name] = fn()
        except (ValidationError, ArithmeticError) as err:
            errors[name] = err
    return results, errors


def _snapshot(config):
    # the sweep grid is not part of a single cell's configuration
    d = config.to_dict()
    d.pop("sweep")
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def run_experiment(config, seed=None, out_dir=None, return_model=False):
    """split -> partition -> train -> attack -> fidelity, fully determined by ``seed``."""
    seed = config.train.seed if seed is None else int(seed)
    config = dataclasses.replace(config, train=dataclasses.replace(config.train, seed=seed))
    is_pigan = config.model == "pigan"
    record = ExperimentRecord(
        model_name=config.model, seed=seed, lam=float(config.train.lam) if is_pigan else 0.0,
        n_subsets=int(config.train.n_subsets) if is_pigan else 1,
        config=_snapshot(config),
    )
    start = time.perf_counter()
    model = None
    try:
        data = prepare_data(config, seed)
        model = train_model(config, data)
    except Exception as err:  # noqa: BLE001 - recorded, never swallowed silently
        record.add_failure("train", METRICS, err)
        log.warning("experiment %s seed %s failed to train: %s", config.model, seed, err)
    if model is not None:
        if out_dir is not None:
            save_model(model, Path(out_dir))
        try:
            for k, v in run_attacks(model, data, config.attack, seed).items():
                setattr(record, k, v)
        except (ValidationError, ArithmeticError) as err:
            record.add_failure("attack", METRICS[:4], err)
        try:
            oracle = fit_oracle(config, data)
            results, errors = run_fidelity(model, data, oracle, config.fidelity, seed)
            for k, v in results.items():
                setattr(record, k, v)
            for k, err in errors.items():
                record.add_failure(k, (k,), err)
        except (ValidationError, ArithmeticError) as err:
            record.add_failure("fidelity", METRICS[4:], err)
    if config.record_wall_time:
        record.wall_time_seconds = time.perf_counter() - start
    if return_model:
        return record, model, (data if model is not None else None)
    return record


# --- sweeps -----------------------------------------------------------------

def sweep_cells(config):
    s = config.sweep
    cells = []
    for model in s.models:
        if model == "gan":
            cells += [("gan", 0.0, 1, seed) for seed in s.seeds]
        else:
            cells += [("pigan", float(lam), int(n), int(seed))
                      for lam, n, seed in itertools.product(s.lambda_values, s.N_values, s.seeds)]
    return sorted(cells)


def _run_cell(args):
    config, cell, ckpt_root = args
    model, lam, n, seed = cell
    cfg = config.with_cell(model, lam, n if model == "pigan" else config.train.n_subsets, seed)
    out = None if ckpt_root is None else Path(ckpt_root) / f"{model}_lam{lam:g}_N{n}_seed{seed}"
    return run_experiment(cfg, seed, out)


def aggregate(records):
    """Mean and n-1 standard deviation of every metric per (model, lam, N)."""
    groups = {}
    for r in records:
        groups.setdefault((r.model_name, r.lam, r.n_subsets), []).append(r)
    rows = []
    for key in sorted(groups):
        group = groups[key]
        row = {"model_name": key[0], "lam": key[1], "n_subsets": key[2], "n": len(group)}
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in group if getattr(r, m) is not None], dtype=float)
            row[f"{m}_mean"] = float(vals.mean()) if vals.size else None
            row[f"{m}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else None
        rows.append(row)
    return rows


def write_aggregate_csv(rows, path):
    fields = ["model_name", "lam", "n_subsets", "n"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fields])


def run_sweep(config, out_dir=None, n_jobs=1):
    """One record per (model, lam, N, seed) cell, in sorted cell order."""
    cells = sweep_cells(config)
    ckpt_root = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "plots").mkdir(parents=True, exist_ok=True)
        ckpt_root = out_dir / "checkpoints"
    jobs = [(config, cell, ckpt_root) for cell in cells]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_run_cell, jobs))
    else:
        records = [_run_cell(job) for job in jobs]
    if out_dir is not None:
        write_records_csv(records, out_dir / "records.csv")
        write_records_json(records, out_dir / "records.json")
        write_aggregate_csv(aggregate(records), out_dir / "aggregate.csv")
    return records


# --- figures ----------------------------------------------------------------

def emit_tradeoff_plot(records, x_metric, y_metric, path):
    """Aggregate records per (model, lam, N) and plot y against x; CSV twin at ``.csv``."""
    for name in (x_metric, y_metric):
        if name not in METRICS:
            raise ValidationError(f"unknown metric {name!r}; valid metrics: {', '.join(METRICS)}")
    rows = [r for r in aggregate(records)
            if r[f"{x_metric}_mean"] is not None and r[f"{y_metric}_mean"] is not None]
    if len(rows) < 2:
        raise ValidationError(f"need at least 2 aggregated points, got {len(rows)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_path = path.with_suffix(".csv")
    fields = ["model_name", "lam", "n_subsets", "n", "x_mean", "x_std", "y_mean", "y_std"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for r in rows:
            writer.writerow([_fmt(v) for v in (r["model_name"], r["lam"], r["n_subsets"], r["n"],
                                               r[f"{x_metric}_mean"], r[f"{x_metric}_std"],
                                               r[f"{y_metric}_mean"], r[f"{y_metric}_std"])])
    _plot_tradeoff(rows, x_metric, y_metric, path)
    return csv_path


def _plot_tradeoff(rows, x_metric, y_metric, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for model in sorted({r["model_name"] for r in rows}):
        pts = [r for r in rows if r["model_name"] == model]
        xs = [r[f"{x_metric}_mean"] for r in pts]
        ys = [r[f"{y_metric}_mean"] for r in pts]
        ax.plot(xs, ys, "o-", label=model)
        for r, x, y in zip(pts, xs, ys):
            ax.annotate(f"λ={r['lam']:g}", (x, y), fontsize=7)
    ax.set_xlabel(x_metric)
    ax.set_ylabel(y_metric)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def histogram_counts(train_scores, holdout_scores, n_bins=20):
    train_scores = np.asarray(train_scores, dtype=float)
    holdout_scores = np.asarray(holdout_scores, dtype=float)
    if train_scores.size == 0 or holdout_scores.size == 0:
        raise ValidationError("histogram inputs must be non-empty")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return edges, np.histogram(train_scores, edges)[0], np.histogram(holdout_scores, edges)[0]


def tvd_from_counts(train_counts, holdout_counts):
    a = np.asarray(train_counts, dtype=float)
    b = np.asarray(holdout_counts, dtype=float)
    return float(0.5 * np.abs(a / a.sum() - b / b.sum()).sum())


def emit_score_histogram(model, train, holdout, path, n_bins=20):
    """Histogram of max-over-code discriminator scores on train vs holdout rows."""
    if len(train) == 0 or len(holdout) == 0:
        raise ValidationError("train and holdout sets must be non-empty")
    n_codes = model.weights.size
    disc = model.discriminator
    lab = (lambda ds: ds.y) if disc.n_classes else (lambda ds: None)
    s_train = code_scores(disc, model.d_params, train.X, n_codes, lab(train)).max(axis=1)
    s_hold = code_scores(disc, model.d_params, holdout.X, n_codes, lab(holdout)).max(axis=1)
    edges, c_train, c_hold = histogram_counts(s_train, s_hold, n_bins)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "train_count", "holdout_count"])
        for lo, hi, a, b in zip(edges[:-1], edges[1:], c_train, c_hold):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(a), int(b)])

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(s_train, edges, alpha=0.5, density=True, label="train")
    ax.hist(s_hold, edges, alpha=0.5, density=True, label="holdout")
    ax.set_xlabel("max over codes of D(x, c)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return csv_path
