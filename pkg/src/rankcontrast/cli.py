"""Command-line pipeline driver.

Four subcommands cover the full workflow:

* ``train``     fit the encoder with the rank loss, write a checkpoint
                and a one-line-per-epoch training log
* ``encode``    write eval-mode representations for a dataset
* ``evaluate``  fit the RBF SVM on train representations, score test
                representations, emit a metrics JSON document
* ``pipeline``  train -> encode -> evaluate once per seed, then write
                the per-seed table and seed-averaged metrics

Flags mirror the config field names in kebab-case; values may also come
from a ``key = value`` config file (``#`` starts a comment). Precedence
is flag > config file > built-in default. Exit codes: 0 success,
1 usage/config error, 2 data-format error, 3 numeric failure.
"""

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .data import (BatchPlan, NormStats, TimeSeriesDataset, clean_missing,
                   load_delimited, load_multivariate_jsonl, znormalize)
from .evaluation import metrics, predict, svm_fit_select
from .exceptions import (CheckpointError, ConfigError, ContractError,
                         DataFormatError, DimensionError, NumericError)
from .model import (EncoderConfig, check_input_features, encode, init_model,
                    load_checkpoint, load_checkpoint_norm_stats, save_checkpoint)
from .rankloss import RankLossConfig
from .training import train_encoder

CHECKPOINT_FILENAME = "encoder.ckpt"
TRAIN_LOG_FILENAME = "train_log.txt"
ENCODE_CHUNK = 256


@dataclass
class RunConfig:
    """All pipeline settings with their documented defaults."""

    train_data: str | None = None
    test_data: str | None = None
    data: str | None = None
    checkpoint: str | None = None
    train_reps: str | None = None
    test_reps: str | None = None
    output: str | None = None
    output_dir: str | None = None
    format: str = "delimited"                 # delimited | jsonl
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-4
    weight_decay: float = 5e-4
    num_augments: int = 5
    jitter_scales: tuple = (0.03, 0.05)
    loss_normalization: str = "mean"          # mean | sum
    negative_domain: str = "all"              # all | valid-only
    seed: int = 0
    seeds: tuple = (0, 1, 2, 3, 4)
    conv_channels: tuple = (128, 256, 128)
    kernel_sizes: tuple = (8, 5, 3)
    repr_dim: int = 320
    svm_folds: int = 5


def _parse_int_list(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip() != "")


def _parse_float_list(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip() != "")


_FIELD_PARSERS = {
    "epochs": int, "batch_size": int, "seed": int, "repr_dim": int, "svm_folds": int,
    "learning_rate": float, "weight_decay": float, "num_augments": int,
    "jitter_scales": _parse_float_list, "seeds": _parse_int_list,
    "conv_channels": _parse_int_list, "kernel_sizes": _parse_int_list,
}

_CHOICES = {
    "format": ("delimited", "jsonl"),
    "loss_normalization": ("mean", "sum"),
    "negative_domain": ("all", "valid-only"),
}


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_config(flag_values: dict, config_path=None) -> RunConfig:
    """Merge defaults, config-file values, and explicit flags (in that order)."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if config_path:
        for key, raw in parse_config_file(config_path).items():
            if key == "config":
                continue
            if key not in known:
                raise ConfigError(f"unknown config key: {key}")
            cfg = replace(cfg, **{key: _convert(key, raw)})
    for key, value in flag_values.items():
        if value is None or key == "config":
            continue
        if key in known:
            cfg = replace(cfg, **{key: _convert(key, value)})
    _validate(cfg)
    return cfg


def _convert(key, raw):
    try:
        if key in _FIELD_PARSERS:
            return _FIELD_PARSERS[key](raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {raw!r} ({exc})") from exc
    return raw


def _validate(cfg: RunConfig) -> None:
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise ConfigError(f"{key} must be one of {choices}, got {getattr(cfg, key)!r}")
    if cfg.epochs < 1:
        raise ConfigError("epochs must be >= 1")
    if cfg.batch_size < 2:
        raise ConfigError("batch_size must be >= 2")
    if cfg.num_augments < 0:
        raise ConfigError("num_augments must be >= 0")
    if len(cfg.conv_channels) != len(cfg.kernel_sizes):
        raise ConfigError("conv_channels and kernel_sizes must have equal length")


def _load_dataset(path, fmt) -> TimeSeriesDataset:
    if path is None:
        raise ConfigError("missing dataset path")
    if fmt == "delimited":
        return load_delimited(path)
    return load_multivariate_jsonl(path)


# ---------------------------------------------------------------------------
# Representation files: header "N D", then N rows of D decimal floats
# ---------------------------------------------------------------------------

def write_representations(path, reps: np.ndarray) -> None:
    reps = np.asarray(reps)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{reps.shape[0]} {reps.shape[1]}\n")
        for row in reps:
            fh.write(" ".join(f"{float(v):.9g}" for v in row) + "\n")


def read_representations(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty representation file")
    try:
        n, d = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise DataFormatError(f"{path}: line 1: bad header (expected 'N D')") from exc
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise DataFormatError(f"{path}: expected {n} rows, found {len(body)}")
    out = np.empty((n, d), dtype=np.float64)
    for i, line in enumerate(body):
        parts = line.split()
        if len(parts) != d:
            raise DataFormatError(f"{path}: line {i + 2}: expected {d} values, found {len(parts)}")
        out[i] = [float(p) for p in parts]
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> Path:
    """Train the encoder; returns the checkpoint path."""
    if cfg.train_data is None:
        raise ConfigError("train requires --train-data")
    if cfg.output_dir is None:
        raise ConfigError("train requires --output-dir")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset = clean_missing(znormalize(_load_dataset(cfg.train_data, cfg.format)))
    if dataset.num_instances < 2:
        raise ConfigError("training needs at least 2 instances")
    encoder_config = EncoderConfig(
        in_features=dataset.num_features,
        conv_channels=cfg.conv_channels,
        kernel_sizes=cfg.kernel_sizes,
        repr_dim=cfg.repr_dim,
    )
    model = init_model(encoder_config, seed=cfg.seed,
                       learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    plan = BatchPlan(batch_size=max(2, min(cfg.batch_size, dataset.num_instances)),
                     rng_seed=cfg.seed)
    augment_config = AugmentConfig(num_augments_per_instance=cfg.num_augments,
                                   scales=tuple(cfg.jitter_scales), rng_seed=cfg.seed)
    loss_config = RankLossConfig(normalization=cfg.loss_normalization,
                                 negative_domain=cfg.negative_domain)

    log_path = out_dir / TRAIN_LOG_FILENAME
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def log(stats):
            log_fh.write(f"{stats.epoch}\t{stats.mean_loss:.6f}\t{stats.wall_time:.3f}\n")

        train_encoder(model, dataset, epochs=cfg.epochs, batch_plan=plan,
                      augment_config=augment_config, loss_config=loss_config, log=log)

    ckpt_path = out_dir / CHECKPOINT_FILENAME
    stats = dataset.norm_stats
    save_checkpoint(model, ckpt_path, norm_stats={
        "mean": [float(v) for v in stats.mean],
        "std": [float(v) for v in stats.std],
    })
    return ckpt_path


def cmd_encode(cfg: RunConfig) -> Path:
    """Write eval-mode representations of a dataset; returns the output path."""
    if cfg.checkpoint is None or cfg.data is None or cfg.output is None:
        raise ConfigError("encode requires --checkpoint, --data, and --output")
    model = load_checkpoint(cfg.checkpoint)
    dataset = _load_dataset(cfg.data, cfg.format)
    check_input_features(model, dataset.num_features)
    stats_dict = load_checkpoint_norm_stats(cfg.checkpoint)
    stats = None
    if stats_dict is not None:
        stats = NormStats(mean=np.asarray(stats_dict["mean"], dtype=np.float64),
                          std=np.asarray(stats_dict["std"], dtype=np.float64))
    dataset = clean_missing(znormalize(dataset, stats=stats))
    x = np.ascontiguousarray(dataset.x.transpose(0, 2, 1)).astype(np.float32)
    chunks = [encode(model, x[i:i + ENCODE_CHUNK], mode="eval")
              for i in range(0, len(x), ENCODE_CHUNK)]
    reps = np.concatenate(chunks, axis=0)
    write_representations(cfg.output, reps)
    return Path(cfg.output)


def cmd_evaluate(cfg: RunConfig) -> dict:
    """Fit/select the SVM on train reps, score test reps, write metrics JSON."""
    for name in ("train_reps", "train_data", "test_reps", "test_data", "output"):
        if getattr(cfg, name) is None:
            raise ConfigError(f"evaluate requires --{name.replace('_', '-')}")
    train_reps = read_representations(cfg.train_reps)
    test_reps = read_representations(cfg.test_reps)
    if train_reps.shape[1] != test_reps.shape[1]:
        raise DimensionError(
            f"representation dim mismatch: train D={train_reps.shape[1]}, "
            f"test D={test_reps.shape[1]}"
        )
    train_labels = _load_dataset(cfg.train_data, cfg.format).labels
    test_labels = _load_dataset(cfg.test_data, cfg.format).labels
    if len(train_labels) != len(train_reps):
        raise DataFormatError("train representation count does not match train dataset size")
    if len(test_labels) != len(test_reps):
        raise DataFormatError("test representation count does not match test dataset size")
    svm = svm_fit_select(train_reps, train_labels, folds=cfg.svm_folds, seed=cfg.seed)
    report = metrics(test_labels, predict(svm, test_reps))
    doc = report.to_dict()
    _write_json(cfg.output, doc)
    return doc


def cmd_pipeline(cfg: RunConfig) -> dict:
    """Run train -> encode -> evaluate per seed and aggregate the metrics."""
    if cfg.train_data is None or cfg.test_data is None:
        raise ConfigError("pipeline requires --train-data and --test-data")
    if cfg.output_dir is None:
        raise ConfigError("pipeline requires --output-dir")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    seed_entries = []
    completed = []
    for seed in cfg.seeds:
        seed_dir = out_dir / f"seed_{seed}"
        try:
            run_cfg = replace(cfg, seed=int(seed), output_dir=str(seed_dir))
            ckpt = cmd_train(run_cfg)
            train_reps_path = seed_dir / "train_reps.txt"
            test_reps_path = seed_dir / "test_reps.txt"
            cmd_encode(replace(run_cfg, checkpoint=str(ckpt), data=cfg.train_data,
                               output=str(train_reps_path)))
            cmd_encode(replace(run_cfg, checkpoint=str(ckpt), data=cfg.test_data,
                               output=str(test_reps_path)))
            doc = cmd_evaluate(replace(run_cfg, train_reps=str(train_reps_path),
                                       test_reps=str(test_reps_path),
                                       output=str(seed_dir / "metrics.json")))
        except (ConfigError, DataFormatError, CheckpointError, DimensionError,
                NumericError, ContractError, OSError) as exc:
            seed_entries.append({"seed": int(seed), "error": str(exc)})
            continue
        entry = {"seed": int(seed)}
        entry.update({k: doc[k] for k in ("accuracy", "macro_precision",
                                          "macro_recall", "macro_f1", "per_class")})
        seed_entries.append(entry)
        completed.append(entry)

    if not completed:
        raise NumericError("pipeline: every seed failed; see the seeds list in the output")

    aggregate = {
        key: float(np.mean([e[key] for e in completed]))
        for key in ("accuracy", "macro_precision", "macro_recall", "macro_f1")
    }
    aggregate["per_class"] = _mean_per_class([e["per_class"] for e in completed])
    aggregate["seeds"] = seed_entries
    _write_json(out_dir / "metrics.json", aggregate)
    return aggregate


def _mean_per_class(tables: list[dict]) -> dict:
    keys = sorted({k for t in tables for k in t})
    out = {}
    for k in keys:
        rows = [t[k] for t in tables if k in t]
        out[k] = {
            "precision": float(np.mean([r["precision"] for r in rows])),
            "recall": float(np.mean([r["recall"] for r in rows])),
            "f1": float(np.mean([r["f1"] for r in rows])),
            "support": float(np.mean([r["support"] for r in rows])),
        }
    return out


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class UsageError(Exception):
    """Carries the exit code for a bad command line."""

    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}", 1)


def _add_common_flags(p: _Parser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--format", choices=("delimited", "jsonl"),
                   help="dataset file format (default delimited)")


def _add_training_flags(p: _Parser) -> None:
    p.add_argument("--epochs", help="training epochs (default 100)")
    p.add_argument("--batch-size", dest="batch_size", help="batch size (default 128, capped at N)")
    p.add_argument("--learning-rate", dest="learning_rate", help="Adam learning rate (default 1e-4)")
    p.add_argument("--weight-decay", dest="weight_decay", help="decoupled weight decay (default 5e-4)")
    p.add_argument("--num-augments", dest="num_augments",
                   help="jittered copies per instance (default 5)")
    p.add_argument("--jitter-scales", dest="jitter_scales",
                   help="comma-separated noise scales (default 0.03,0.05)")
    p.add_argument("--loss-normalization", dest="loss_normalization", choices=("mean", "sum"),
                   help="pair-loss normalization (default mean)")
    p.add_argument("--negative-domain", dest="negative_domain", choices=("all", "valid-only"),
                   help="negatives summed in the soft rank (default all)")
    p.add_argument("--conv-channels", dest="conv_channels",
                   help="encoder conv channels (default 128,256,128)")
    p.add_argument("--kernel-sizes", dest="kernel_sizes",
                   help="encoder kernel sizes (default 8,5,3)")
    p.add_argument("--repr-dim", dest="repr_dim", help="representation width (default 320)")


def make_parser() -> _Parser:
    parser = _Parser(prog="rankcontrast",
                     description="Rank-weighted contrastive training and SVM evaluation "
                                 "for time series classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the encoder")
    _add_common_flags(p)
    _add_training_flags(p)
    p.add_argument("--train-data", dest="train_data", help="training dataset file")
    p.add_argument("--seed", help="run seed (default 0)")
    p.add_argument("--output-dir", dest="output_dir", help="directory for checkpoint and log")

    p = sub.add_parser("encode", help="export representations for a dataset")
    _add_common_flags(p)
    p.add_argument("--checkpoint", help="trained checkpoint file")
    p.add_argument("--data", help="dataset file to encode")
    p.add_argument("--output", help="representation file to write")

    p = sub.add_parser("evaluate", help="SVM fit/selection on train reps, metrics on test reps")
    _add_common_flags(p)
    p.add_argument("--train-reps", dest="train_reps", help="training representation file")
    p.add_argument("--train-data", dest="train_data", help="training dataset file (labels)")
    p.add_argument("--test-reps", dest="test_reps", help="test representation file")
    p.add_argument("--test-data", dest="test_data", help="test dataset file (labels)")
    p.add_argument("--svm-folds", dest="svm_folds", help="CV folds for C selection (default 5)")
    p.add_argument("--seed", help="solver seed (default 0)")
    p.add_argument("--output", help="metrics JSON file to write")

    p = sub.add_parser("pipeline", help="train, encode, and evaluate once per seed")
    _add_common_flags(p)
    _add_training_flags(p)
    p.add_argument("--train-data", dest="train_data", help="training dataset file")
    p.add_argument("--test-data", dest="test_data", help="test dataset file")
    p.add_argument("--seeds", help="comma-separated seed list (default 0,1,2,3,4)")
    p.add_argument("--svm-folds", dest="svm_folds", help="CV folds for C selection (default 5)")
    p.add_argument("--output-dir", dest="output_dir", help="directory for per-seed artifacts")

    return parser


_COMMANDS = {
    "train": cmd_train,
    "encode": cmd_encode,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = vars(parser.parse_args(argv))
        command = args.pop("command")
        cfg = build_config(args, config_path=args.get("config"))
        result = _COMMANDS[command](cfg)
        if command == "evaluate" or command == "pipeline":
            print(json.dumps({k: result[k] for k in
                              ("accuracy", "macro_precision", "macro_recall", "macro_f1")},
                             sort_keys=True))
        return 0
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, CheckpointError, DimensionError, ContractError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
