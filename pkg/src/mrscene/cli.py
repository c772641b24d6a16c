"""Command-line entry point.

Subcommands: generate-data, train, evaluate, predict, attn-dump, gradcheck.
Exit codes: 0 success, 1 gradient-check failure, 2 usage or config error.
Every report embeds the resolved run configuration for reproducibility.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import gradcheck as gradcheck_mod
from .checkpoint import load_parameters, read_checkpoint
from .dataset import DatasetManifest, generate_synthetic, load_split
from .errors import ConfigError, FormatError, MrsceneError, UsageError
from .head import predict
from .metrics import aggregate
from .model import Model, ModelConfig
from .trainer import TrainConfig, evaluate_model, train


def _parse_fractions(text: str) -> tuple:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--split must be three comma-separated numbers, got {text!r}") from exc
    if len(parts) != 3 or abs(sum(parts) - 1.0) > 1e-9 or any(p < 0 for p in parts):
        raise UsageError(f"--split fractions must be nonnegative and sum to 1, got {text!r}")
    return parts


def _load_file_config(path) -> dict:
    if path is None:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return payload


def _load_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise UsageError(f"no manifest.json under {data_dir}")
    return DatasetManifest.load(path)


def _resolve_configs(args, manifest: DatasetManifest):
    """Merge defaults, config file, and flags (flags win)."""
    file_cfg = _load_file_config(getattr(args, "config", None))
    model_payload = dict(file_cfg.get("model", {}))
    train_payload = dict(file_cfg.get("train", {}))

    for field, value in (("subset_shapes", [list(s) for s in manifest.subset_shapes]),
                         ("n_classes", manifest.n_classes)):
        if field in model_payload and model_payload[field] != value:
            raise ConfigError(
                f"config field model.{field} = {model_payload[field]} "
                f"does not match dataset manifest value {value}"
            )
        model_payload[field] = value

    flag_map = {
        "lr": "learning_rate", "epochs": "epochs", "batch_size": "batch_size",
        "optimizer": "optimizer", "seed": "seed", "threshold": "threshold",
        "checkpoint_every": "checkpoint_every",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            train_payload[key] = value

    model_cfg = ModelConfig.from_dict(model_payload)
    if "threshold" in train_payload:
        model_cfg.threshold = train_payload["threshold"]
    model_cfg.validate()
    train_cfg = TrainConfig.from_dict(train_payload)
    train_cfg.validate()
    echo = {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "data": str(args.data)}
    return model_cfg, train_cfg, echo


def _format_echo(echo: dict) -> str:
    return "config: " + json.dumps(echo, sort_keys=True)


def _model_from_checkpoint(checkpoint_path, manifest: DatasetManifest):
    data = read_checkpoint(checkpoint_path)
    if "model" not in data.config:
        raise ConfigError(f"{checkpoint_path}: checkpoint carries no model config echo")
    model_cfg = ModelConfig.from_dict(data.config["model"])
    stored_shapes = [tuple(s) for s in model_cfg.subset_shapes]
    manifest_shapes = [tuple(s) for s in manifest.subset_shapes]
    if stored_shapes != manifest_shapes:
        raise ConfigError(
            f"checkpoint subset_shapes {stored_shapes} do not match dataset {manifest_shapes}"
        )
    if model_cfg.n_classes != manifest.n_classes:
        raise ConfigError(
            f"checkpoint n_classes {model_cfg.n_classes} does not match dataset {manifest.n_classes}"
        )
    model = Model(model_cfg, seed=0)
    load_parameters(model, data.params)
    return model, data


def cmd_generate_data(args) -> int:
    manifest = generate_synthetic(
        args.out, seed=args.seed, n_samples=args.n, profile=args.profile,
        noise=args.noise, n_classes=args.classes, split_fractions=_parse_fractions(args.split),
    )
    counts = {name: len(ids) for name, ids in manifest.splits.items()}
    print(f"wrote {args.n} samples ({args.profile}, seed {args.seed}) to {args.out}")
    print(f"splits: {counts}")
    return 0


def cmd_train(args) -> int:
    manifest = _load_manifest(args.data)
    model_cfg, train_cfg, echo = _resolve_configs(args, manifest)
    print(_format_echo(echo))
    train_samples = load_split(manifest, "train", args.data)
    model = Model(model_cfg, seed=train_cfg.seed)
    result = train(model, train_samples, train_cfg, out_dir=args.out, run_config=echo)
    print(f"trained {train_cfg.epochs} epochs; final loss {result.loss_trajectory[-1]:.6f}")
    print(f"checkpoint: {result.final_checkpoint}")
    if manifest.splits.get("val"):
        val_samples = load_split(manifest, "val", args.data)
        report = evaluate_model(model, val_samples, threshold=model_cfg.threshold,
                                batch_size=train_cfg.batch_size)
        print("validation metrics:")
        print(report.format())
        print(report.key_value_block())
    return 0


def cmd_evaluate(args) -> int:
    manifest = _load_manifest(args.data)
    model, data = _model_from_checkpoint(args.checkpoint, manifest)
    samples = load_split(manifest, args.split, args.data)
    report = evaluate_model(model, samples, threshold=args.threshold, batch_size=args.batch_size)
    print(_format_echo(data.config))
    print(f"split: {args.split}  threshold: {args.threshold}")
    print(report.format())
    print(report.key_value_block())
    return 0


def cmd_predict(args) -> int:
    manifest = _load_manifest(args.data)
    model, data = _model_from_checkpoint(args.checkpoint, manifest)
    samples = load_split(manifest, args.split, args.data)
    probs = model.predict_probabilities(samples, args.batch_size)
    print(_format_echo(data.config))
    for i, sample in enumerate(samples):
        chosen = predict(probs[i], args.threshold)
        names = [manifest.class_names[j] for j in np.flatnonzero(chosen)]
        print(f"{sample.id}\t{', '.join(names) if names else '<none>'}")
    return 0


def cmd_attn_dump(args) -> int:
    manifest = _load_manifest(args.data)
    model, data = _model_from_checkpoint(args.checkpoint, manifest)
    samples = load_split(manifest, args.split, args.data)
    if args.limit:
        samples = samples[: args.limit]
    print(_format_echo(data.config))
    for start in range(0, len(samples), args.batch_size):
        batch = samples[start : start + args.batch_size]
        attn = model.forward_samples(batch).attention.data
        for i, sample in enumerate(batch):
            print(f"sample {sample.id} attention ({attn.shape[1]} scores x {attn.shape[2]} patches):")
            for row in attn[i]:
                print("  " + " ".join(f"{v:.6f}" for v in row))
    return 0


def cmd_gradcheck(args) -> int:
    reports = gradcheck_mod.run_all(seed=args.seed, step=args.step)
    for report in reports:
        print(report.format())
    ok = all(r.passed for r in reports)
    print(f"overall: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrscene",
        description="Multi-attention CNN+BiLSTM multi-label scene classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--profile", default="tiny", help="tiny or bigearthnet-shaped")
    p.add_argument("--noise", type=float, default=0.1, help="pixel noise sigma")
    p.add_argument("--classes", type=int, default=None, help="override class count")
    p.add_argument("--split", default="0.6,0.2,0.2", help="train,val,test fractions")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--config", default=None, help="JSON run configuration file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (
        ("evaluate", cmd_evaluate, "metrics of a checkpoint on a split"),
        ("predict", cmd_predict, "per-sample label predictions"),
        ("attn-dump", cmd_attn_dump, "per-sample attention score tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--split", default="test")
        p.add_argument("--threshold", type=float, default=0.5)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
        if name == "attn-dump":
            p.add_argument("--limit", type=int, default=0, help="dump at most this many samples")
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="finite-difference verification of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MrsceneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
