"""Metrics, the ablation grid runner, and report serialization.

The grid trains every requested configuration (per fold for canonical
recording sets, on the fixed split otherwise) and emits one CSV row plus
one JSON record per run.  Reports embed every hyperparameter actually
used, including defaults, so paper-gap choices stay auditable.  Given
identical seeds the CSV bytes are identical across invocations.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import LabelError, ParameterError
from .model import Model, ModelConfig, build_model
from .optim import LabeledData, TrainConfig, batch_size, evaluate, train
from .tensor import Rng


def confusion(predicted, truth, class_count: int) -> np.ndarray:
    """Counts per (true class, predicted class) pair."""
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape:
        raise LabelError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    if predicted.size == 0:
        return cm
    if (min(predicted.min(), truth.min()) < 0
            or max(predicted.max(), truth.max()) >= class_count):
        raise LabelError(f"labels must lie in [0, {class_count})")
    np.add.at(cm, (truth, predicted), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    """Overall accuracy percent: correct predictions over all predictions."""
    total = int(cm.sum())
    if total == 0:
        raise ParameterError("empty confusion matrix")
    return 100.0 * float(np.trace(cm)) / total


def per_class_accuracy(cm: np.ndarray) -> np.ndarray:
    """One-vs-rest accuracy percent per class: (TP+TN)/(TP+TN+FP+FN)."""
    total = int(cm.sum())
    if total == 0:
        raise ParameterError("empty confusion matrix")
    out = np.empty(cm.shape[0])
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        fn = cm[c].sum() - tp
        fp = cm[:, c].sum() - tp
        tn = total - tp - fn - fp
        out[c] = 100.0 * (tp + tn) / total
    return out


@dataclass
class RunReport:
    """Everything one trained configuration produced."""

    config: ModelConfig
    split: str  # "fixed", "fold0".., or "mean"
    seed: int
    hyperparams: dict
    confusion_matrix: list | None = None  # row-major counts, truth x predicted
    accuracy_pct: float | None = None
    fold_accuracies: list | None = None  # aggregate rows only
    history: dict | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "split": self.split,
                "seed": self.seed, "hyperparams": self.hyperparams,
                "confusion_matrix": self.confusion_matrix,
                "accuracy_pct": self.accuracy_pct,
                "fold_accuracies": self.fold_accuracies,
                "history": self.history, "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        d = dict(d)
        d["config"] = ModelConfig.from_dict(d["config"])
        return cls(**d)


@dataclass
class FixedSplitDataset:
    """A train/test split that is part of the dataset definition."""

    name: str
    train: LabeledData
    test: LabeledData
    class_count: int
    input_kind: str


@dataclass
class FoldedDataset:
    """One pool of samples evaluated under rotating fold splits."""

    name: str
    data: LabeledData
    folds: list  # FoldSplit
    class_count: int
    input_kind: str

    def subset(self, ids) -> LabeledData:
        return LabeledData(tuple(a[ids] for a in self.data.inputs),
                           self.data.labels[ids])


def derive_run_seed(base_seed: int, config: ModelConfig, split: str) -> int:
    """Stable per-run seed: every (config, split) trains independently."""
    tag = f"{config.label()}|{split}"
    h = Rng(base_seed)
    for ch in tag:
        h = h.derive(ord(ch))
    return int(h.raw(1)[0] % (2 ** 31))


def run_single(config: ModelConfig, train_data: LabeledData,
               test_data: LabeledData, train_config: TrainConfig,
               split: str, checkpoint_to=None) -> RunReport:
    seed = derive_run_seed(train_config.seed, config, split)
    run_cfg = replace(train_config, seed=seed)
    hp = run_cfg.hyperparams()
    hp["batch_size"] = (run_cfg.batch_size if run_cfg.batch_size is not None
                        else batch_size(len(train_data)))
    report = RunReport(config=config, split=split, seed=seed, hyperparams=hp)
    try:
        model = build_model(config, Rng(seed))
        history = train(model, train_data, config=run_cfg)
        preds, _ = evaluate(model, test_data)
        cm = confusion(preds, test_data.labels, config.class_count)
        report.confusion_matrix = cm.tolist()
        report.accuracy_pct = accuracy(cm)
        report.history = history.summary()
        if checkpoint_to is not None:
            from .model import save_checkpoint
            save_checkpoint(model, checkpoint_to)
    except Exception as e:  # a failing entry must not abort the grid
        report.error = f"{type(e).__name__}: {e}"
    return report


def _entry_key(config: ModelConfig, split: str) -> str:
    return f"{config.label()}__{split}"


def _run_task(args):
    return run_single(*args)


def run_grid(dataset, configs, train_config: TrainConfig = TrainConfig(),
             folds=None, progress=None, workers: int = 1,
             cache_dir=None) -> list:
    """Train and evaluate every config; never aborts on a single failure.

    Fixed-split datasets produce one report per config; folded datasets
    produce one per (config, fold) plus an aggregate ``mean`` row whose
    accuracy is the arithmetic mean over folds (per-fold values retained)
    and whose confusion matrix is the fold sum.

    Per-run seeds derive from (config, split), so report content is
    independent of ``workers`` and an interrupted grid resumes from the
    per-entry records in ``cache_dir``.  Report order is canonical:
    sorted by (first, second, fusion), folds before their mean row.
    """
    if not configs:
        raise ParameterError("no configurations to run")
    configs = sorted(configs, key=lambda c: (c.first.value, c.second.value,
                                             c.intermediate_fusion))
    configs = [replace(c, class_count=dataset.class_count,
                       input_kind=dataset.input_kind) for c in configs]
    fixed = isinstance(dataset, FixedSplitDataset)
    use_folds = None if fixed else (folds if folds is not None else dataset.folds)

    tasks = []  # (config, split, train_data, test_data)
    for config in configs:
        if fixed:
            tasks.append((config, "fixed", dataset.train, dataset.test))
        else:
            for fold in use_folds:
                tasks.append((config, f"fold{fold.fold}",
                              dataset.subset(fold.train_ids),
                              dataset.subset(fold.test_ids)))

    results: dict = {}
    pending = []
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
    for config, split, train_data, test_data in tasks:
        key = _entry_key(config, split)
        if cache_dir is not None and (cache_dir / f"{key}.json").exists():
            results[key] = RunReport.from_dict(
                json.loads((cache_dir / f"{key}.json").read_text()))
            continue
        pending.append((config, train_data, test_data, train_config, split))

    def record(report: RunReport):
        key = _entry_key(report.config, report.split)
        results[key] = report
        if cache_dir is not None:
            (cache_dir / f"{key}.json").write_text(json.dumps(report.to_dict()))
        if progress:
            progress(report)

    if workers > 1 and len(pending) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for report in pool.map(_run_task, pending):
                record(report)
    else:
        for args in pending:
            record(run_single(*args))

    reports = []
    for config in configs:
        if fixed:
            reports.append(results[_entry_key(config, "fixed")])
            continue
        fold_reports = [results[_entry_key(config, f"fold{f.fold}")]
                        for f in use_folds]
        reports.extend(fold_reports)
        good = [r for r in fold_reports if r.error is None]
        agg = RunReport(config=config, split="mean", seed=train_config.seed,
                        hyperparams=fold_reports[0].hyperparams)
        if good:
            agg.fold_accuracies = [r.accuracy_pct for r in good]
            agg.accuracy_pct = float(np.mean(agg.fold_accuracies))
            agg.confusion_matrix = np.sum(
                [np.asarray(r.confusion_matrix) for r in good], axis=0).tolist()
        if len(good) < len(fold_reports):
            agg.error = "; ".join(r.error for r in fold_reports if r.error)
        reports.append(agg)
    return reports


CSV_COLUMNS = ["first", "second", "fusion", "split", "seed",
               "accuracy_pct", "epochs", "lr"]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([
            r.config.first.value, r.config.second.value,
            "on" if r.config.intermediate_fusion else "off",
            r.split, r.seed,
            "" if r.accuracy_pct is None else f"{r.accuracy_pct:.6f}",
            r.hyperparams.get("epochs", ""),
            r.hyperparams.get("learning_rate", ""),
        ])
    return buf.getvalue()


def emit_report(reports, fmt: str, path) -> Path:
    """Write the grid as ``csv`` (summary rows) or ``json`` (full records)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path.write_text(reports_to_csv(reports))
    elif fmt == "json":
        path.write_text(json.dumps([r.to_dict() for r in reports], indent=1) + "\n")
    else:
        raise ParameterError(f"format must be 'csv' or 'json', got {fmt!r}")
    return path


def parse_report_json(path) -> list:
    return [RunReport.from_dict(d) for d in json.loads(Path(path).read_text())]


def report_dir(base, dataset_name: str, timestamp: str | None = None) -> Path:
    """Canonical layout: <base>/<dataset>/<timestamp>/."""
    stamp = timestamp or time.strftime("%Y%m%d-%H%M%S")
    out = Path(base) / dataset_name / stamp
    out.mkdir(parents=True, exist_ok=True)
    return out
