"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .exceptions import ValidationError


def _load_config(args):
    config = harness.ExperimentConfig.load(args.config) if args.config else harness.toy_config()
    if getattr(args, "model", None):
        config = harness.ExperimentConfig.from_dict({**config.to_dict(), "model": args.model})
    return config


def _model_dir(args, config, seed):
    return Path(args.out) / "checkpoints" / f"{config.model}_seed{seed}"


def _seed(args, config):
    return config.train.seed if args.seed is None else args.seed


def cmd_train(args):
    config = _load_config(args)
    seed = _seed(args, config)
    config = harness.ExperimentConfig.from_dict(
        {**config.to_dict(), "train": {**config.to_dict()["train"], "seed": seed}})
    data = harness.prepare_data(config, seed)
    model = harness.train_model(config, data)
    target = _model_dir(args, config, seed)
    harness.save_model(model, target)
    print(f"saved {config.model} checkpoints to {target}")
    return 0


def _trained(args):
    config = _load_config(args)
    seed = _seed(args, config)
    target = _model_dir(args, config, seed)
    if not (target / "generator.ckpt").exists():
        raise ValidationError(f"no checkpoints in {target}; run `train` first")
    config = harness.ExperimentConfig.from_dict(
        {**config.to_dict(), "train": {**config.to_dict()["train"], "seed": seed}})
    return config, seed, harness.load_model(target), harness.prepare_data(config, seed)


def cmd_attack(args):
    config, seed, model, data = _trained(args)
    result = harness.run_attacks(model, data, config.attack, seed)
    _dump(result, Path(args.out) / f"attack_{config.model}_seed{seed}.json")
    return 0


def cmd_evaluate(args):
    config, seed, model, data = _trained(args)
    oracle = harness.fit_oracle(config, data)
    results, errors = harness.run_fidelity(model, data, oracle, config.fidelity, seed)
    results.update({k: None for k in errors})
    results["errors"] = {k: str(v) for k, v in errors.items()}
    _dump(results, Path(args.out) / f"fidelity_{config.model}_seed{seed}.json")
    return 0


def cmd_sweep(args):
    config = _load_config(args)
    if args.seed is not None:
        config.sweep.seeds = [args.seed]
    records = harness.run_sweep(config, args.out, n_jobs=args.jobs)
    failed = [r for r in records if r.failure_reason]
    print(f"{len(records)} records written to {args.out} ({len(failed)} with failures)")
    return 0


def cmd_plot(args):
    records = harness.read_records_csv(Path(args.out) / "records.csv")
    path = Path(args.out) / "plots" / f"tradeoff_{args.x}_vs_{args.y}.png"
    csv_path = harness.emit_tradeoff_plot(records, args.x, args.y, path)
    print(f"wrote {path} and {csv_path}")
    return 0


def cmd_histogram(args):
    config, seed, model, data = _trained(args)
    train = data.train.data if hasattr(data.train, "data") else data.train
    path = Path(args.out) / "plots" / f"scores_{config.model}_seed{seed}.png"
    csv_path = harness.emit_score_histogram(model, train, data.holdout, path, args.bins)
    print(f"wrote {path} and {csv_path}")
    return 0


def _dump(obj, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
    print(json.dumps(obj, indent=2, sort_keys=True))


def build_parser():
    parser = argparse.ArgumentParser(prog="pigan", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (default: built-in toy config)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="results", help="results directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_text in (
        ("train", cmd_train, "train a model and save checkpoints"),
        ("attack", cmd_attack, "run membership attacks on saved checkpoints"),
        ("evaluate", cmd_evaluate, "compute fidelity metrics on saved checkpoints"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--model", choices=harness.MODELS)
        p.set_defaults(func=fn)

    p = sub.add_parser("sweep", parents=[common], help="run the lambda x N x seed grid")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", parents=[common], help="privacy-fidelity plot from records.csv")
    p.add_argument("--x", default="wb_accuracy")
    p.add_argument("--y", default="downstream_accuracy")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("histogram", parents=[common], help="discriminator score histograms")
    p.add_argument("--model", choices=harness.MODELS)
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001
        print(f"runtime failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
