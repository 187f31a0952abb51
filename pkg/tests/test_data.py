import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from harfusion.data import (DegenerateChannelWarning, FeatureSample, Recording,
                            StratificationWarning, UCI_HAR_CLASSES,
                            USC_HAD_CLASSES, features_to_labeled, kfold_split,
                            load_manifest, lowpass_filter, normalize,
                            parse_canonical_csv, parse_ucihar_features,
                            parse_ucihar_raw, preprocess_recording,
                            recordings_to_labeled, reshape_for_model,
                            standardize_length, windows_to_labeled)
from harfusion.errors import ConfigError, ParameterError, ParseError
from harfusion.model import NetKind
from harfusion.tensor import Rng

FIXTURE = Path(__file__).parent / "fixtures" / "canonical_synthetic"


# ---------------------------------------------------------------------------
# synthetic published-archive layout


def write_ucihar_archive(root: Path, n_train=6, n_test=4, n_features=561):
    rng = Rng(123)
    for split, n in (("train", n_train), ("test", n_test)):
        d = root / split
        (d / "Inertial Signals").mkdir(parents=True)
        x = rng.normal((n, n_features))
        _write_matrix(d / f"X_{split}.txt", x)
        labels = (np.arange(n) % 6) + 1
        (d / f"y_{split}.txt").write_text("\n".join(map(str, labels)) + "\n")
        for prefix in ("total_acc", "body_acc", "body_gyro"):
            for ax in "xyz":
                _write_matrix(d / "Inertial Signals" / f"{prefix}_{ax}_{split}.txt",
                              rng.normal((n, 128)))
    return root


def _write_matrix(path: Path, values: np.ndarray):
    path.write_text("\n".join(" ".join(f"{v: .7e}" for v in row)
                              for row in values) + "\n")


def test_parse_ucihar_features_counts_and_labels(tmp_path):
    root = write_ucihar_archive(tmp_path)
    train, test = parse_ucihar_features(root)
    assert len(train) == 6 and len(test) == 4
    assert all(isinstance(s, FeatureSample) for s in train)
    assert {s.label for s in train} <= set(range(6))
    stacked = features_to_labeled(train)
    assert stacked.inputs[0].shape == (6, 561)


def test_parse_ucihar_features_short_row_names_line(tmp_path):
    root = write_ucihar_archive(tmp_path)
    path = root / "train" / "X_train.txt"
    lines = path.read_text().splitlines()
    lines[2] = " ".join(lines[2].split()[:560])  # drop one column from row 3
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        parse_ucihar_features(root)
    assert err.value.line == 3


def test_parse_ucihar_features_bad_label_rejected(tmp_path):
    root = write_ucihar_archive(tmp_path)
    ypath = root / "train" / "y_train.txt"
    lines = ypath.read_text().splitlines()
    lines[1] = "7"
    ypath.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        parse_ucihar_features(root)
    assert err.value.line == 2


def test_parse_ucihar_raw_window_shapes(tmp_path):
    root = write_ucihar_archive(tmp_path)
    windows = parse_ucihar_raw(root, "train")
    assert len(windows) == 6
    accel, gyro, label = windows[0]
    assert accel.shape == (128, 3) and gyro.shape == (128, 3)
    assert 0 <= label < 6
    again = parse_ucihar_raw(root, "train")
    assert np.array_equal(windows[0][0], again[0][0])
    stacked = windows_to_labeled(windows)
    assert stacked.inputs[0].shape == (6, 128, 3)


def test_parse_ucihar_raw_axis_disagreement(tmp_path):
    root = write_ucihar_archive(tmp_path)
    bad = root / "train" / "Inertial Signals" / "total_acc_y_train.txt"
    lines = bad.read_text().splitlines()
    bad.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError):
        parse_ucihar_raw(root, "train")


def test_parse_ucihar_missing_label_file(tmp_path):
    root = write_ucihar_archive(tmp_path)
    (root / "test" / "y_test.txt").unlink()
    with pytest.raises(ParseError, match="label"):
        parse_ucihar_features(root)


# ---------------------------------------------------------------------------
# canonical CSVs (bundled fixture)


def test_fixture_parses_to_ten_recordings():
    recs = parse_canonical_csv(FIXTURE)
    assert len(recs) == 10
    assert all(isinstance(r, Recording) for r in recs)
    assert all(r.sample_rate == 100.0 for r in recs)
    assert len({r.label for r in recs}) == 10  # distinct activities


def test_fixture_rereads_identically():
    a = parse_canonical_csv(FIXTURE)
    b = parse_canonical_csv(FIXTURE)
    assert np.array_equal(a[0].accel, b[0].accel)


def test_canonical_missing_column_rejected(tmp_path):
    manifest = json.loads((FIXTURE / "manifest.json").read_text())
    entry = manifest["recordings"][0]
    src = (FIXTURE / entry["path"]).read_text().splitlines()
    header = src[0].replace(",gz", "")
    broken = [",".join(line.split(",")[:6]) for line in src[1:]]
    (tmp_path / entry["path"]).write_text("\n".join([header] + broken) + "\n")
    manifest["recordings"] = [entry]
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ParseError, match="gz"):
        parse_canonical_csv(tmp_path)


def test_canonical_nonfinite_value_rejected(tmp_path):
    manifest = json.loads((FIXTURE / "manifest.json").read_text())
    entry = manifest["recordings"][0]
    lines = (FIXTURE / entry["path"]).read_text().splitlines()
    parts = lines[3].split(",")
    parts[2] = "nan"
    lines[3] = ",".join(parts)
    (tmp_path / entry["path"]).write_text("\n".join(lines) + "\n")
    manifest["recordings"] = [entry]
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ParseError) as err:
        parse_canonical_csv(tmp_path)
    assert err.value.line == 4


def test_manifest_validation(tmp_path):
    with pytest.raises(ParseError, match="manifest"):
        load_manifest(tmp_path)
    doc = {"dataset": "x", "sample_rate_hz": 100, "classes": [],
           "recordings": [{"id": "a", "subject": 1, "activity": "w",
                           "trial": 1, "path": "missing.csv"}]}
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ParseError, match="missing"):
        load_manifest(tmp_path)


# ---------------------------------------------------------------------------
# preprocessing


def test_lowpass_passes_dc():
    x = np.full((400, 3), 2.0)
    y = lowpass_filter(x, 100.0, 20.0)
    assert np.abs(y - 2.0).max() < 1e-9


def test_lowpass_attenuation_matches_butterworth_magnitude():
    # T long enough that edge transients are negligible in the middle
    t = np.arange(4000) / 100.0
    hi = np.sin(2 * np.pi * 45.0 * t)[:, None].repeat(3, axis=1)
    lo = np.sin(2 * np.pi * 1.0 * t)[:, None].repeat(3, axis=1)
    mid = slice(500, 3500)

    def rms(v):
        return float(np.sqrt((v[mid] ** 2).mean()))

    hi_out = lowpass_filter(hi, 100.0, 20.0)
    assert rms(hi_out) / rms(hi) < 0.05  # analog double-pass: ~0.0076
    lo_out = lowpass_filter(lo, 100.0, 20.0)
    assert abs(rms(lo_out) / rms(lo) - 1.0) < 0.02


def test_lowpass_rejects_cutoff_at_or_above_nyquist():
    x = np.zeros((100, 3))
    with pytest.raises(ParameterError):
        lowpass_filter(x, 100.0, 50.0)
    with pytest.raises(ParameterError):
        lowpass_filter(x, 100.0, 0.0)


def test_normalize_zscore_stats():
    x = Rng(1).normal((500, 3), scale=7.0) + 3.0
    y = normalize(x, "zscore")
    assert np.abs(y.mean(axis=0)).max() < 1e-12
    assert np.abs(y.std(axis=0) - 1.0).max() < 1e-10


def test_normalize_unit_l2_stats():
    x = Rng(2).normal((300, 3), scale=2.0) - 1.0
    y = normalize(x, "unit_l2")
    assert np.abs(y.mean(axis=0)).max() < 1e-12
    assert np.abs(np.linalg.norm(y, axis=0) - 1.0).max() < 1e-12


def test_normalize_idempotent():
    x = Rng(3).normal((200, 3), scale=4.0)
    for mode in ("zscore", "unit_l2"):
        once = normalize(x, mode)
        twice = normalize(once, mode)
        assert np.abs(once - twice).max() < 1e-10


def test_normalize_constant_channel_warns_and_zeroes():
    x = Rng(4).normal((50, 3))
    x[:, 1] = 5.0
    with pytest.warns(DegenerateChannelWarning):
        y = normalize(x, "zscore")
    assert not y[:, 1].any()


def test_standardize_length_rules():
    x = Rng(5).normal((1024, 3))
    assert np.array_equal(standardize_length(x), x)
    long = Rng(6).normal((2000, 3))
    out = standardize_length(long)
    assert out.shape == (1024, 3) and np.array_equal(out, long[:1024])
    short = Rng(7).normal((600, 3))
    rep = standardize_length(short)
    assert rep.shape == (1024, 3)
    assert np.array_equal(rep[:600], short)
    assert np.array_equal(rep[600:], short[:424])  # cyclic from the start


def test_preprocess_recording_shapes():
    recs = parse_canonical_csv(FIXTURE)
    a, g = preprocess_recording(recs[0])
    assert a.shape == (1024, 3) and g.shape == (1024, 3)
    stacked = recordings_to_labeled(recs[:4])
    assert stacked.inputs[0].shape == (4, 1024, 3)


# ---------------------------------------------------------------------------
# folds


def test_kfold_usc_had_protocol():
    labels = np.repeat(np.arange(12), 70)  # 14 subjects x 5 trials per class
    splits = kfold_split(labels, k=5, seed=3)
    assert len(splits) == 5
    union = np.concatenate([s.test_ids for s in splits])
    assert len(union) == 840 and len(set(union.tolist())) == 840
    for s in splits:
        assert len(s.test_ids) == 168
        assert len(s.train_ids) == 672
        assert not set(s.test_ids) & set(s.train_ids)
        per_class = np.bincount(labels[s.test_ids], minlength=12)
        assert np.abs(per_class - 14).max() <= 2


def test_kfold_deterministic_and_seed_sensitive():
    labels = np.arange(50) % 5
    a = kfold_split(labels, k=5, seed=9)
    b = kfold_split(labels, k=5, seed=9)
    c = kfold_split(labels, k=5, seed=10)
    assert all(np.array_equal(x.test_ids, y.test_ids) for x, y in zip(a, b))
    assert any(not np.array_equal(x.test_ids, y.test_ids) for x, y in zip(a, c))


def test_kfold_small_class_warns():
    labels = np.array([0] * 20 + [1] * 3)
    with pytest.warns(StratificationWarning):
        splits = kfold_split(labels, k=5, seed=0)
    sizes = [len(s.test_ids) for s in splits]
    assert max(sizes) - min(sizes) <= 1


def test_kfold_validation():
    with pytest.raises(ConfigError):
        kfold_split(np.arange(3) % 2, k=5)
    with pytest.raises(ConfigError):
        kfold_split(np.arange(10) % 2, k=1)


# ---------------------------------------------------------------------------
# model-ready reshaping


def test_reshape_for_model_rules():
    block = Rng(8).normal((1024, 3))
    clstm = reshape_for_model(block, NetKind.CLSTM1D, clstm_steps=8)
    assert clstm.shape == (8, 128, 3)
    assert np.array_equal(clstm.reshape(1024, 3), block)
    small = Rng(9).normal((128, 3))
    two_d = reshape_for_model(small, NetKind.CNN2D)
    assert two_d.shape == (3, 128, 1)
    assert np.array_equal(two_d[:, :, 0].T, small)
    deep = reshape_for_model(block, NetKind.CLSTM2D, clstm_steps=8)
    assert deep.shape == (8, 3, 128, 1)
    for kind in (NetKind.CNN1D, NetKind.LSTM):
        assert reshape_for_model(block, kind).shape == (1024, 3)


def test_reshape_for_model_element_count_preserved():
    block = Rng(10).normal((256, 3))
    for kind in NetKind:
        out = reshape_for_model(block, kind, clstm_steps=8)
        assert out.size == block.size


def test_reshape_for_model_rejects_indivisible():
    with pytest.raises(ConfigError):
        reshape_for_model(np.zeros((100, 3)), NetKind.CLSTM1D, clstm_steps=8)


def test_class_name_tables():
    assert len(USC_HAD_CLASSES) == 12
    assert len(UCI_HAR_CLASSES) == 6
