"""Command-line entry point.

Subcommands: ``prepare`` (parse + preprocess + cache), ``gradcheck``
(finite-difference suite), ``train`` (one configuration), ``grid`` (the
ablation sweep).  Exit codes: 0 success, 1 usage error, 2 data error, 3
numeric failure.  Every run is deterministic given flags, seed, and
input bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .data import (UCI_HAR_CLASSES, features_to_labeled, kfold_split,
                   load_manifest, parse_canonical_csv, parse_ucihar_features,
                   parse_ucihar_raw, recordings_to_labeled, windows_to_labeled)
from .errors import (CheckpointError, ConfigError, NumericError,
                     ParameterError, ParseError)
from .evaluate import (FixedSplitDataset, FoldedDataset, emit_report,
                       report_dir, run_grid, run_single)
from .gradcheck import layer_suite, stage_suite
from .model import (FEATURE_VECTOR, RAW_DUAL, ModelConfig, NetKind,
                    enumerate_architectures)
from .optim import LabeledData, TrainConfig, batch_size
PAPER_EPOCHS = 500  # fixed training budget of the reference setup
DESK_EPOCHS = 50

_NORM_FLAGS = {"zscore": "zscore", "l2": "unit_l2"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="harfusion",
                     description="Two-level fusion networks for "
                                 "inertial-sensor activity recognition.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[], help="parse, preprocess, and "
                       "cache a dataset")
    p.add_argument("--dataset-kind", required=True,
                   choices=["usc-had", "ucihar-raw", "ucihar-features"])
    p.add_argument("--data-dir", required=True, help="archive or canonical-CSV "
                   "directory")
    p.add_argument("--out", required=True, help="cache directory")
    p.add_argument("--cutoff-hz", type=float, default=20.0,
                   help="low-pass cutoff for raw signals (default 20)")
    p.add_argument("--norm", choices=["zscore", "l2"], default="zscore",
                   help="per-channel normalization (default zscore)")
    p.add_argument("--target-len", type=int, default=1024,
                   help="standardized recording length (default 1024)")
    p.set_defaults(func=cmd_prepare)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    g.add_argument("--scale", choices=["tiny", "small"], default="tiny",
                   help="tiny: 5 instances per layer; small: 20")
    g.set_defaults(func=cmd_gradcheck)

    t = sub.add_parser("train", help="train one configuration")
    _add_run_flags(t)
    t.add_argument("--first", required=True, help="first-level network kind")
    t.add_argument("--second", required=True, help="second-level network kind")
    t.add_argument("--fusion", choices=["on", "off"], required=True,
                   help="intermediate feature fusion")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("grid", help="run the architecture ablation grid")
    _add_run_flags(r)
    r.add_argument("--only", default=None,
                   help="restrict to pairs, e.g. 'cnn1d,cnn1d' or "
                        "'cnn1d,lstm;lstm,cnn2d'")
    r.add_argument("--workers", type=int, default=1,
                   help="parallel grid entries (default 1)")
    r.add_argument("--paper-scale", action="store_true",
                   help=f"train the full {PAPER_EPOCHS} epochs instead of "
                        f"the desk-scale {DESK_EPOCHS}")
    r.set_defaults(func=cmd_grid)
    return parser


def _add_run_flags(p):
    p.add_argument("--prepared", required=True, help="cache from `prepare`")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--epochs", type=int, default=None,
                   help=f"training epochs (default {PAPER_EPOCHS} for train, "
                        f"{DESK_EPOCHS} for grid)")
    p.add_argument("--lr", type=float, default=1e-3,
                   help="Adam learning rate (default 1e-3)")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--folds", type=int, default=5,
                   help="fold count for canonical recording sets (default 5)")
    p.add_argument("--clstm-steps", type=int, default=8,
                   help="time steps for recurrent convolutions (default 8)")


# ---------------------------------------------------------------------------
# prepare


def _hash_files(paths, extra: str) -> str:
    digest = hashlib.sha256(extra.encode())
    for path in sorted(Path(p) for p in paths):
        digest.update(str(path.name).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def _input_files(kind: str, data_dir: Path) -> list:
    if kind == "usc-had":
        manifest = load_manifest(data_dir)
        base = Path(data_dir)
        if base.is_dir():
            base = base / "manifest.json"
        return [base] + [r["path"] for r in manifest.recordings]
    root = data_dir
    if not (root / "train").is_dir() and (root / "UCI HAR Dataset").is_dir():
        root = root / "UCI HAR Dataset"
    if kind == "ucihar-features":
        return [root / s / f"{n}_{s}.txt" for s in ("train", "test")
                for n in ("X", "y")]
    files = []
    for s in ("train", "test"):
        files.append(root / s / f"y_{s}.txt")
        for prefix in ("total_acc", "body_gyro"):
            for ax in "xyz":
                files.append(root / s / "Inertial Signals" / f"{prefix}_{ax}_{s}.txt")
    return files


def cmd_prepare(args) -> int:
    data_dir = Path(args.data_dir)
    out = Path(args.out)
    norm = _NORM_FLAGS[args.norm]
    params = {"dataset_kind": args.dataset_kind, "cutoff_hz": args.cutoff_hz,
              "norm": norm, "target_len": args.target_len}
    files = _input_files(args.dataset_kind, data_dir)
    missing = [str(f) for f in files if not Path(f).exists()]
    if missing:
        raise ParseError(f"missing input file {missing[0]}")
    content_hash = _hash_files(files, json.dumps(params, sort_keys=True))
    meta_path, npz_path = out / "meta.json", out / "data.npz"
    if meta_path.exists() and npz_path.exists():
        meta = json.loads(meta_path.read_text())
        if meta.get("content_hash") == content_hash:
            print(f"cache hit: {out} is up to date (hash {content_hash[:12]})")
            return 0
    out.mkdir(parents=True, exist_ok=True)

    arrays = {}
    if args.dataset_kind == "ucihar-features":
        train, test = parse_ucihar_features(data_dir)
        tr, te = features_to_labeled(train), features_to_labeled(test)
        arrays = {"x_train": tr.inputs[0], "y_train": tr.labels,
                  "x_test": te.inputs[0], "y_test": te.labels}
        meta_extra = {"classes": UCI_HAR_CLASSES, "input_kind": FEATURE_VECTOR,
                      "counts": {"train": len(tr), "test": len(te)}}
    elif args.dataset_kind == "ucihar-raw":
        splits = {}
        for split in ("train", "test"):
            windows = parse_ucihar_raw(data_dir, split)
            splits[split] = windows_to_labeled(
                windows, cutoff_hz=args.cutoff_hz, sample_rate=50.0, norm=norm)
        arrays = {"acc_train": splits["train"].inputs[0],
                  "gyro_train": splits["train"].inputs[1],
                  "y_train": splits["train"].labels,
                  "acc_test": splits["test"].inputs[0],
                  "gyro_test": splits["test"].inputs[1],
                  "y_test": splits["test"].labels}
        meta_extra = {"classes": UCI_HAR_CLASSES, "input_kind": RAW_DUAL,
                      "counts": {"train": len(splits["train"]),
                                 "test": len(splits["test"])}}
    else:  # usc-had canonical CSVs
        manifest = load_manifest(data_dir)
        recordings = parse_canonical_csv(manifest)
        pool = recordings_to_labeled(recordings, cutoff_hz=args.cutoff_hz,
                                     norm=norm, target_len=args.target_len)
        arrays = {"accel": pool.inputs[0], "gyro": pool.inputs[1],
                  "labels": pool.labels}
        meta_extra = {"classes": manifest.classes, "input_kind": RAW_DUAL,
                      "counts": {"recordings": len(pool)}}

    np.savez(npz_path, **arrays)
    meta = {"content_hash": content_hash, **params, **meta_extra}
    meta_path.write_text(json.dumps(meta, indent=1) + "\n")
    print(f"prepared {args.dataset_kind}: "
          f"{json.dumps(meta_extra['counts'])} -> {out}")
    return 0


def load_prepared(cache_dir):
    """(meta dict, dataset object) from a `prepare` cache."""
    cache_dir = Path(cache_dir)
    meta_path, npz_path = cache_dir / "meta.json", cache_dir / "data.npz"
    if not meta_path.exists() or not npz_path.exists():
        raise ParseError(f"no prepared cache at {cache_dir}; run `harfusion prepare`")
    meta = json.loads(meta_path.read_text())
    blobs = np.load(npz_path)
    kind = meta["dataset_kind"]
    classes = meta["classes"]
    if kind == "ucihar-features":
        ds = FixedSplitDataset(
            name=kind,
            train=LabeledData((blobs["x_train"],), blobs["y_train"]),
            test=LabeledData((blobs["x_test"],), blobs["y_test"]),
            class_count=len(classes), input_kind=FEATURE_VECTOR)
    elif kind == "ucihar-raw":
        ds = FixedSplitDataset(
            name=kind,
            train=LabeledData((blobs["acc_train"], blobs["gyro_train"]),
                              blobs["y_train"]),
            test=LabeledData((blobs["acc_test"], blobs["gyro_test"]),
                             blobs["y_test"]),
            class_count=len(classes), input_kind=RAW_DUAL)
    else:
        pool = LabeledData((blobs["accel"], blobs["gyro"]), blobs["labels"])
        ds = FoldedDataset(name=kind, data=pool, folds=[],
                           class_count=len(classes), input_kind=RAW_DUAL)
    return meta, ds


def _with_folds(ds, meta, k: int, seed: int):
    if isinstance(ds, FoldedDataset):
        ds.folds = kfold_split(ds.data.labels, k=k, seed=seed)
    return ds


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(args) -> int:
    instances = 5 if args.scale == "tiny" else 20
    tolerance = 1e-4
    print(f"layer suite ({instances} instances per layer, tolerance {tolerance:g}):")
    worst_overall = 0.0
    for name, worst in layer_suite(instances=instances, tolerance=tolerance).items():
        status = "PASS" if worst < tolerance else "FAIL"
        print(f"  {name:10s} worst rel err {worst:.3e}  {status}")
        worst_overall = max(worst_overall, worst)
    print("stage suite (whole-model, one per network kind):")
    for name, worst in stage_suite(tolerance=tolerance).items():
        status = "PASS" if worst < tolerance else "FAIL"
        print(f"  {name:10s} worst rel err {worst:.3e}  {status}")
        worst_overall = max(worst_overall, worst)
    if worst_overall >= tolerance:
        print("gradient check FAILED")
        return 3
    print("all gradient checks passed")
    return 0


# ---------------------------------------------------------------------------
# train / grid


def _train_config(args, default_epochs: int) -> TrainConfig:
    epochs = args.epochs
    if epochs is None:
        epochs = default_epochs
        print(f"epochs: {epochs} (default)")
    if epochs < 1:
        raise ConfigError("--epochs must be >= 1")
    return TrainConfig(learning_rate=args.lr, epochs=epochs, seed=args.seed)


def cmd_train(args) -> int:
    meta, ds = load_prepared(args.prepared)
    train_config = _train_config(args, PAPER_EPOCHS)
    config = ModelConfig(
        first=NetKind.parse(args.first), second=NetKind.parse(args.second),
        intermediate_fusion=args.fusion == "on",
        input_kind=ds.input_kind, class_count=ds.class_count,
        clstm_steps=args.clstm_steps)
    if isinstance(ds, FoldedDataset):
        ds = _with_folds(ds, meta, args.folds, args.seed)
        fold = ds.folds[0]
        train_data, test_data = ds.subset(fold.train_ids), ds.subset(fold.test_ids)
        split = "fold0"
    else:
        train_data, test_data, split = ds.train, ds.test, "fixed"
    print(f"training {config.label()} on {meta['dataset_kind']} "
          f"({len(train_data)} train / {len(test_data)} test, "
          f"batch {batch_size(len(train_data))})")
    out = Path(args.out) if args.out else Path("runs") / config.label()
    out.mkdir(parents=True, exist_ok=True)
    report = run_single(config, train_data, test_data, train_config, split,
                        checkpoint_to=out / "checkpoint")
    if report.error is not None:
        raise NumericError(report.error)
    emit_report([report], "json", out / "report.json")
    emit_report([report], "csv", out / "report.csv")
    print(f"test accuracy: {report.accuracy_pct:.2f}%  -> {out}")
    return 0


def _parse_only(only: str):
    pairs = []
    for chunk in only.split(";"):
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"--only expects 'first,second' pairs, got {chunk!r}")
        pairs.append((NetKind.parse(parts[0]), NetKind.parse(parts[1])))
    return pairs


def cmd_grid(args) -> int:
    meta, ds = load_prepared(args.prepared)
    default_epochs = PAPER_EPOCHS if args.paper_scale else DESK_EPOCHS
    train_config = _train_config(args, default_epochs)
    configs = enumerate_architectures(ds.input_kind, class_count=ds.class_count,
                                      clstm_steps=args.clstm_steps)
    if args.only:
        wanted = set(_parse_only(args.only))
        configs = [c for c in configs if (c.first, c.second) in wanted]
        if not configs:
            raise ConfigError(f"--only {args.only!r} matches no enumerated pair")
    if isinstance(ds, FoldedDataset):
        ds = _with_folds(ds, meta, args.folds, args.seed)
    out_base = Path(args.out) if args.out else Path("reports")
    entry_tag = hashlib.sha256(json.dumps(
        {**train_config.hyperparams(), "folds": args.folds,
         "steps": args.clstm_steps, "hash": meta["content_hash"]},
        sort_keys=True).encode()).hexdigest()[:16]
    cache_dir = Path(args.prepared) / "grid_entries" / entry_tag
    print(f"grid: {len(configs)} configurations on {meta['dataset_kind']} "
          f"({train_config.epochs} epochs, seed {train_config.seed}, "
          f"workers {args.workers})")

    def progress(report):
        acc = "failed" if report.accuracy_pct is None else f"{report.accuracy_pct:.2f}%"
        print(f"  {report.config.label():34s} {report.split:6s} {acc}")

    reports = run_grid(ds, configs, train_config, workers=args.workers,
                       cache_dir=cache_dir, progress=progress)
    out = report_dir(out_base, meta["dataset_kind"])
    emit_report(reports, "csv", out / "grid.csv")
    emit_report(reports, "json", out / "grid.json")
    failures = sum(1 for r in reports if r.error is not None)
    print(f"wrote {out / 'grid.csv'} ({len(reports)} rows, {failures} failures)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse --help or usage error
        return int(e.code or 0)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ParameterError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (NumericError, CheckpointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3



if __name__ == "__main__":
    sys.exit(main())
