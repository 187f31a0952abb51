"""Dataset parsing, signal preprocessing, and fold construction.

Two dataset families are supported:

* the published smartphone HAR archive ("UCI HAR Dataset" layout): either
  the 561-column engineered feature matrices or the 9 per-axis
  128-sample raw signal files, with fixed train/test splits;
* canonical recording CSVs converted from the hip-worn IMU archive
  (USC-HAD layout): one CSV per recording with header
  ``t,ax,ay,az,gx,gy,gz`` (seconds, accelerometer g-units, gyroscope
  deg/s), indexed by a ``manifest.json``:

      {"dataset": ..., "sample_rate_hz": 100,
       "classes": ["walking-forward", ...],
       "recordings": [{"id", "subject", "activity", "trial", "path"}, ...]}

  Recording paths are relative to the manifest's directory; ``activity``
  is a name from ``classes``.

Preprocessing order is filter -> normalize -> standardize length.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import butter, filtfilt

from .errors import ConfigError, ParameterError, ParseError
from .model import (NetKind, StepSplit1D, StepSplit2D, ToHeightWidth)
from .optim import LabeledData
from .tensor import Rng

USC_HAD_CLASSES = [
    "walking-forward", "walking-left", "walking-right", "walking-upstairs",
    "walking-downstairs", "running-forward", "jumping", "sitting",
    "standing", "sleeping", "elevator-up", "elevator-down",
]

UCI_HAR_CLASSES = ["walking", "walking-upstairs", "walking-downstairs",
                   "sitting", "standing", "laying"]

FEATURE_DIM = 561
RAW_WINDOW = 128


class DegenerateChannelWarning(UserWarning):
    """A zero-variance channel was left at zero during normalization."""


class StratificationWarning(UserWarning):
    """A class has fewer members than folds; it cannot reach every fold."""


@dataclass
class Recording:
    """One subject/activity trial: paired tri-axial sensor blocks."""

    subject: int
    label: int  # 0-based class index
    accel: np.ndarray  # [T, 3], g-units
    gyro: np.ndarray  # [T, 3], deg/s
    sample_rate: float

    def __post_init__(self):
        if self.accel.shape != self.gyro.shape or self.accel.shape[1:] != (3,):
            raise ParseError(f"accel {self.accel.shape} and gyro {self.gyro.shape} "
                             f"must both be [T, 3]")


@dataclass
class FeatureSample:
    features: np.ndarray  # [561]
    label: int

    def __post_init__(self):
        if self.features.shape != (FEATURE_DIM,):
            raise ParseError(f"feature vector must have length {FEATURE_DIM}, "
                             f"got {self.features.shape}")


@dataclass
class FoldSplit:
    fold: int
    train_ids: np.ndarray
    test_ids: np.ndarray


@dataclass
class CanonicalManifest:
    dataset: str
    sample_rate_hz: float
    classes: list
    recordings: list  # dicts: {id, subject, activity, trial, path}


# ---------------------------------------------------------------------------
# published-archive parsers


def _read_float_matrix(path: Path, n_cols: int) -> np.ndarray:
    """Whitespace-separated float matrix with exact column count."""
    if not path.exists():
        raise ParseError("missing data file", path=path)
    try:
        frame = pd.read_csv(path, sep=r"\s+", header=None, dtype=np.float64)
    except (ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"unparseable matrix: {e}", path=path) from None
    values = frame.to_numpy()
    if values.shape[1] != n_cols:
        raise ParseError(f"expected {n_cols} columns, found {values.shape[1]}",
                         path=path, line=1)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise ParseError("non-finite or missing value", path=path, line=row + 1)
    return values


def _read_labels(path: Path, n_classes: int) -> np.ndarray:
    if not path.exists():
        raise ParseError("missing label file", path=path)
    raw = pd.read_csv(path, sep=r"\s+", header=None).to_numpy().ravel()
    labels = raw.astype(np.int64)
    if not np.array_equal(labels, raw):
        raise ParseError("labels must be integers", path=path)
    out_of_range = (labels < 1) | (labels > n_classes)
    if out_of_range.any():
        row = int(np.argmax(out_of_range))
        raise ParseError(f"label {labels[row]} outside 1..{n_classes}",
                         path=path, line=row + 1)
    return labels - 1  # 0-based


def _ucihar_root(directory) -> Path:
    root = Path(directory)
    if not (root / "train").is_dir() and (root / "UCI HAR Dataset" / "train").is_dir():
        root = root / "UCI HAR Dataset"
    return root


def parse_ucihar_features(directory):
    """(train, test) lists of 561-feature samples from the published archive."""
    root = _ucihar_root(directory)
    out = []
    for split in ("train", "test"):
        x = _read_float_matrix(root / split / f"X_{split}.txt", FEATURE_DIM)
        y = _read_labels(root / split / f"y_{split}.txt", len(UCI_HAR_CLASSES))
        if len(x) != len(y):
            raise ParseError(f"{len(x)} feature rows vs {len(y)} labels",
                             path=root / split)
        out.append([FeatureSample(row, int(lbl)) for row, lbl in zip(x, y)])
    return out[0], out[1]


_RAW_AXES = ("x", "y", "z")


def parse_ucihar_raw(directory, split: str = "train"):
    """Per-window (accel [128, 3], gyro [128, 3], label) triples.

    The accelerometer block comes from the total-acceleration axis files,
    the gyroscope block from the body-gyroscope ones.
    """
    if split not in ("train", "test"):
        raise ParameterError(f"split must be 'train' or 'test', got {split!r}")
    root = _ucihar_root(directory)
    signals = root / split / "Inertial Signals"
    blocks = {}
    for prefix, name in (("total_acc", "accel"), ("body_gyro", "gyro")):
        axes = []
        for ax in _RAW_AXES:
            axes.append(_read_float_matrix(
                signals / f"{prefix}_{ax}_{split}.txt", RAW_WINDOW))
        counts = {a.shape[0] for a in axes}
        if len(counts) != 1:
            raise ParseError(f"axis files for {prefix} disagree on row count {counts}",
                             path=signals)
        blocks[name] = np.stack(axes, axis=2)  # [N, 128, 3]
    labels = _read_labels(root / split / f"y_{split}.txt", len(UCI_HAR_CLASSES))
    if not (len(labels) == len(blocks["accel"]) == len(blocks["gyro"])):
        raise ParseError("window counts and labels disagree", path=root / split)
    return [(blocks["accel"][i], blocks["gyro"][i], int(labels[i]))
            for i in range(len(labels))]


# ---------------------------------------------------------------------------
# canonical CSV ingestion

_CANONICAL_COLUMNS = ["t", "ax", "ay", "az", "gx", "gy", "gz"]


def load_manifest(manifest_path) -> CanonicalManifest:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ParseError("missing manifest", path=path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"manifest is not valid JSON: {e}", path=path) from None
    for key in ("dataset", "sample_rate_hz", "classes", "recordings"):
        if key not in doc:
            raise ParseError(f"manifest lacks {key!r}", path=path)
    ids = [r.get("id") for r in doc["recordings"]]
    if len(ids) != len(set(ids)):
        raise ParseError("recording ids are not unique", path=path)
    base = path.parent
    for rec in doc["recordings"]:
        for key in ("id", "subject", "activity", "trial", "path"):
            if key not in rec:
                raise ParseError(f"recording entry lacks {key!r}", path=path)
        if not (base / rec["path"]).exists():
            raise ParseError(f"recording file missing: {rec['path']}", path=path)
    return CanonicalManifest(dataset=doc["dataset"],
                             sample_rate_hz=float(doc["sample_rate_hz"]),
                             classes=list(doc["classes"]),
                             recordings=[dict(r, path=str(base / r["path"]))
                                         for r in doc["recordings"]])


def parse_canonical_csv(manifest) -> list:
    """All recordings named by a manifest (path or loaded manifest)."""
    if not isinstance(manifest, CanonicalManifest):
        manifest = load_manifest(manifest)
    recordings = []
    for entry in manifest.recordings:
        path = Path(entry["path"])
        frame = pd.read_csv(path)
        missing = [c for c in _CANONICAL_COLUMNS if c not in frame.columns]
        if missing:
            raise ParseError(f"missing column {missing[0]!r}", path=path, line=1)
        values = frame[_CANONICAL_COLUMNS].to_numpy(dtype=np.float64)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.argwhere(bad)[0, 0])
            raise ParseError("non-finite value", path=path, line=row + 2)
        activity = entry["activity"]
        if activity not in manifest.classes:
            raise ParseError(f"activity {activity!r} not in manifest classes",
                             path=path)
        recordings.append(Recording(
            subject=int(entry["subject"]),
            label=manifest.classes.index(activity),
            accel=values[:, 1:4], gyro=values[:, 4:7],
            sample_rate=manifest.sample_rate_hz))
    return recordings


# ---------------------------------------------------------------------------
# preprocessing


def lowpass_filter(signal: np.ndarray, sample_rate: float, cutoff: float) -> np.ndarray:
    """Zero-phase (forward + reverse) 3rd-order Butterworth low-pass."""
    if not 0.0 < cutoff < sample_rate / 2.0:
        raise ParameterError(
            f"cutoff must lie in (0, {sample_rate / 2}), got {cutoff}")
    b, a = butter(3, cutoff / (sample_rate / 2.0), btype="low")
    return filtfilt(b, a, np.asarray(signal, dtype=np.float64), axis=0)


def normalize(signal: np.ndarray, mode: str = "zscore") -> np.ndarray:
    """Per-channel centering plus unit standard deviation (``zscore``) or
    unit Euclidean norm (``unit_l2``); constant channels become zeros with
    a `DegenerateChannelWarning`."""
    if mode not in ("zscore", "unit_l2"):
        raise ParameterError(f"mode must be 'zscore' or 'unit_l2', got {mode!r}")
    x = np.asarray(signal, dtype=np.float64)
    centered = x - x.mean(axis=0)
    scale = centered.std(axis=0) if mode == "zscore" else np.linalg.norm(centered, axis=0)
    dead = scale == 0.0
    if dead.any():
        warnings.warn(f"channel(s) {np.flatnonzero(dead).tolist()} are constant; "
                      f"left at zero", DegenerateChannelWarning)
        scale = np.where(dead, 1.0, scale)
    return centered / scale


def standardize_length(signal: np.ndarray, target: int = 1024) -> np.ndarray:
    """Truncate to the first ``target`` samples, or cyclically replicate
    the signal from its start until ``target`` samples."""
    x = np.asarray(signal, dtype=np.float64)
    t = x.shape[0]
    if t >= target:
        return x[:target].copy()
    return x[np.arange(target) % t]


def kfold_split(recordings, k: int = 5, seed: int = 0) -> list:
    """Seeded, activity-stratified folds over recordings (or raw labels).

    Ids are positions in the input list.  Each class's members are dealt
    round-robin to folds with a carried offset, so fold sizes differ by
    at most one and per-fold class counts stay balanced.
    """
    labels = np.asarray([r.label if isinstance(r, Recording) else int(r)
                         for r in recordings], dtype=np.int64)
    n = len(labels)
    if k < 2:
        raise ConfigError("need k >= 2 folds")
    if n < k:
        raise ConfigError(f"cannot split {n} recordings into {k} folds")
    order = Rng(seed).permutation(n)
    folds = [[] for _ in range(k)]
    offset = 0
    for cls in sorted(set(labels.tolist())):
        members = [int(i) for i in order if labels[i] == cls]
        if len(members) < k:
            warnings.warn(f"class {cls} has {len(members)} < {k} members; "
                          f"it cannot appear in every fold", StratificationWarning)
        for j, idx in enumerate(members):
            folds[(offset + j) % k].append(idx)
        offset += len(members)
    everything = set(range(n))
    splits = []
    for f in range(k):
        test = np.array(sorted(folds[f]), dtype=np.int64)
        train = np.array(sorted(everything - set(folds[f])), dtype=np.int64)
        splits.append(FoldSplit(fold=f, train_ids=train, test_ids=test))
    return splits


def reshape_for_model(block: np.ndarray, target: NetKind, clstm_steps: int = 8) -> np.ndarray:
    """Model-ready layout for one sensor block [T, C].

    1-D kinds pass through; 2-D kinds become [C, T, 1]; recurrent
    convolutions get the time axis split into ``clstm_steps`` equal
    subsequences (the length must divide exactly).
    """
    x = np.asarray(block, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"block must be [T, channels], got {x.shape}")
    if target in (NetKind.CNN1D, NetKind.LSTM):
        return x
    if target == NetKind.CNN2D:
        return ToHeightWidth().forward(x[None])[0]
    if target == NetKind.CLSTM1D:
        return StepSplit1D(clstm_steps, strict=True).forward(x[None])[0]
    if target == NetKind.CLSTM2D:
        return StepSplit2D(clstm_steps, strict=True).forward(x[None])[0]
    raise ConfigError(f"unhandled target kind {target}")


# ---------------------------------------------------------------------------
# model-ready assembly


def preprocess_recording(rec: Recording, cutoff_hz: float = 20.0,
                         norm: str = "zscore", target_len: int = 1024):
    """(accel, gyro) blocks after filter -> normalize -> standardize."""
    out = []
    for block in (rec.accel, rec.gyro):
        block = lowpass_filter(block, rec.sample_rate, cutoff_hz)
        block = normalize(block, norm)
        out.append(standardize_length(block, target_len))
    return out[0], out[1]


def recordings_to_labeled(recordings, cutoff_hz: float = 20.0,
                          norm: str = "zscore", target_len: int = 1024) -> LabeledData:
    accel, gyro, labels = [], [], []
    for rec in recordings:
        a, g = preprocess_recording(rec, cutoff_hz, norm, target_len)
        accel.append(a)
        gyro.append(g)
        labels.append(rec.label)
    return LabeledData((np.stack(accel), np.stack(gyro)), np.asarray(labels))


def windows_to_labeled(windows, cutoff_hz: float | None = None,
                       sample_rate: float = 50.0, norm: str | None = None) -> LabeledData:
    """Stack raw-window triples; optional filtering and normalization."""
    accel, gyro, labels = [], [], []
    for a, g, label in windows:
        if cutoff_hz is not None:
            a = lowpass_filter(a, sample_rate, cutoff_hz)
            g = lowpass_filter(g, sample_rate, cutoff_hz)
        if norm is not None:
            a = normalize(a, norm)
            g = normalize(g, norm)
        accel.append(a)
        gyro.append(g)
        labels.append(label)
    return LabeledData((np.stack(accel), np.stack(gyro)), np.asarray(labels))


def features_to_labeled(samples) -> LabeledData:
    x = np.stack([s.features for s in samples])
    y = np.asarray([s.label for s in samples])
    return LabeledData((x,), y)
