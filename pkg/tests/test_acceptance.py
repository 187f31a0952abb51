"""Acceptance suite: one test per gate, each printing a PASS/FAIL line.

The real smartphone-HAR archive is not redistributable with the package;
the full-scale accuracy gate looks for it under ``$UCI_HAR_DIR`` or
``data/UCI HAR Dataset`` and reports a loud skip when absent.  Everything
else runs on synthetic data or the bundled canonical-CSV fixture.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from harfusion import layers as L
from harfusion.cli import main as cli_main
from harfusion.data import (features_to_labeled, kfold_split,
                            parse_canonical_csv, parse_ucihar_features)
from harfusion.gradcheck import grad_check_model, kink_safe_instance, layer_suite
from harfusion.layers import conv_out_len, one_hot, softmax_cross_entropy
from harfusion.model import (FEATURE_VECTOR, RAW_DUAL, ModelConfig, NetKind,
                             build_model, enumerate_architectures)
from harfusion.optim import LabeledData, TrainConfig, batch_size, evaluate, train
from harfusion.tensor import Rng

from test_data import write_ucihar_archive

FIXTURE = Path(__file__).parent / "fixtures" / "canonical_synthetic"


def announce(name: str, ok: bool, detail: str = ""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------


def test_gradient_suite_all_layers():
    started = time.perf_counter()
    results = layer_suite(instances=20, tolerance=1e-4, step=1e-5)
    elapsed = time.perf_counter() - started
    expected = {"conv1d", "conv2d", "batchnorm", "dense", "lstm",
                "clstm1d", "clstm2d", "gap+head"}
    worst = max(results.values())
    ok = set(results) == expected and worst < 1e-4 and elapsed < 60.0
    announce("gradient suite (8 layers x 20 instances, rel err < 1e-4)",
             ok, f"worst {worst:.2e}, {elapsed:.1f}s")


def test_degenerate_clstm_equals_lstm():
    rng = Rng(404)
    d, u, t = 3, 4, 5
    worst = 0.0
    for _ in range(100):
        lp = L.LstmParams.init(d, u, rng)
        reshape = lambda w: w.reshape(1, d + u, u).copy()
        cp = L.ClstmParams(
            f=L.ConvParams(reshape(lp.w_f), lp.b_f.copy()),
            i=L.ConvParams(reshape(lp.w_i), lp.b_i.copy()),
            c=L.ConvParams(reshape(lp.w_c), lp.b_c.copy()),
            o=L.ConvParams(reshape(lp.w_o), lp.b_o.copy()),
            units=u)
        x = rng.normal((2, t, d), scale=1.5)
        h_seq, _ = L.lstm_forward(x, lp)
        _, h_all = L.clstm_forward(x[:, :, None, :], cp)
        worst = max(worst, float(np.abs(h_all[:, :, 0, :] - h_seq).max()))
    ok = worst <= 1e-10
    announce("degenerate equivalence (CLSTM spatial 1 kernel 1 vs LSTM, 100 draws)",
             ok, f"max abs diff {worst:.2e}")


def test_conv_sizing_law():
    rng = Rng(77)
    checked = 0
    ok = conv_out_len(1024, 16, 8, 0) == 127
    while checked < 1000:
        draw = rng.uniform(4)
        n = 1 + int(draw[0] * 256)
        k = 1 + int(draw[1] * 16)
        s = 1 + int(draw[2] * 8)
        p = int(draw[3] * 4)
        span = n - k + 2 * p
        if span < 0 or span % s:
            continue
        ok = ok and conv_out_len(n, k, s, p) == span // s + 1
        checked += 1
    announce("output sizing law (1000 random geometries; 1024 -> 127)", ok)


def test_fresh_model_loss_sanity():
    worst = 0.0
    for k, cfg, mk in [
        (6, ModelConfig(NetKind.CNN1D, NetKind.CNN1D, True, FEATURE_VECTOR, 6),
         lambda r: (r.normal((32, 561)),)),
        (12, ModelConfig(NetKind.CNN1D, NetKind.CNN1D, True, RAW_DUAL, 12),
         lambda r: (r.normal((32, 1024, 3)), r.normal((32, 1024, 3)))),
    ]:
        model = build_model(cfg, Rng(1))
        batch = mk(Rng(2))
        labels = one_hot(np.arange(32) % k, k)
        loss, _, grad = softmax_cross_entropy(model.forward(batch), labels)
        worst = max(worst, abs(loss - np.log(k)))
        assert np.abs(grad.sum(axis=1)).max() < 1e-12
    ok = worst < 0.05
    announce("loss sanity (fresh-model loss = ln K +- 0.05 for K in {6, 12}; "
             "per-sample softmax gradient sums to 0 +- 1e-12)",
             ok, f"worst deviation {worst:.4f}")


def test_convergence_smoke():
    rng = Rng(5)
    x = rng.normal((32, 64), scale=0.3)
    labels = np.arange(32) % 2
    x[labels == 0, :8] += 2.0
    x[labels == 1, 8:16] += 2.0
    data = LabeledData((x,), labels)
    cfg = ModelConfig(NetKind.CNN1D, NetKind.CNN1D, True, FEATURE_VECTOR,
                      class_count=2, width_first=8, width_second=8)
    model = build_model(cfg, Rng(6))
    started = time.perf_counter()
    # the n/32 rule would give singleton batches, which train-mode batchnorm
    # rejects by contract; full batches keep the 32-sample set trainable
    history = train(model, data, config=TrainConfig(epochs=300, seed=7,
                                                    batch_size=16))
    elapsed = time.perf_counter() - started
    reached = next((i for i, a in enumerate(history.train_accuracy)
                    if a == 100.0), None)
    ok = reached is not None and elapsed < 60.0
    announce("convergence smoke (32-sample separable set to 100% in 300 epochs)",
             ok, f"reached at epoch {reached}, {elapsed:.1f}s")


def test_fusion_structure():
    on = build_model(ModelConfig(NetKind.CNN1D, NetKind.CNN1D, True, RAW_DUAL), Rng(1))
    off = build_model(ModelConfig(NetKind.CNN1D, NetKind.CNN1D, False, RAW_DUAL), Rng(1))
    batch = (Rng(2).normal((2, 1024, 3)), Rng(3).normal((2, 1024, 3)))
    t_on = dict(on.trace_shapes(batch))
    t_off = dict(off.trace_shapes(batch))
    shared_diff = {k for k in t_on.keys() & t_off.keys() if t_on[k] != t_off[k]}
    ok = (on.dense_input_dim == 384 and off.dense_input_dim == 128
          and shared_diff == {"fused_features"}
          and t_on.keys() - t_off.keys() == {"gap.branch0", "gap.branch1"})
    announce("fusion structure (dense input 384 with fusion, 128 without; "
             "graph-diff shows no other change)", ok)


def test_batch_rule():
    ok = (batch_size(7352), batch_size(672), batch_size(10)) == (229, 21, 1)
    announce("batch rule (7352 -> 229, 672 -> 21, 10 -> 1)", ok)


def test_end_to_end_gradients_all_nine_feature_pairs():
    kinds = (NetKind.CNN1D, NetKind.LSTM, NetKind.CLSTM1D)
    worst = 0.0
    for first in kinds:
        for second in kinds:
            cfg = ModelConfig(first, second, True, FEATURE_VECTOR, class_count=3,
                              width_first=4, width_second=4, clstm_steps=8)
            model, batch = kink_safe_instance(cfg, seed=11)
            report = grad_check_model(model, batch, tolerance=1e-4,
                                      step=5e-5, seed=5)
            worst = max(worst, report.max_rel_error)
    ok = worst < 1e-4
    announce("end-to-end gradients (all 9 single-feature pairs, down-scaled)",
             ok, f"worst {worst:.2e}")


def test_grid_determinism_byte_identical(tmp_path):
    archive = write_ucihar_archive(tmp_path / "archive", n_train=80, n_test=20)

    def run(tag):
        cache = tmp_path / f"cache_{tag}"
        out = tmp_path / f"out_{tag}"
        assert cli_main(["prepare", "--dataset-kind", "ucihar-features",
                         "--data-dir", str(archive), "--out", str(cache)]) == 0
        assert cli_main(["grid", "--prepared", str(cache),
                         "--only", "cnn1d,cnn1d;cnn1d,lstm", "--epochs", "2",
                         "--seed", "3", "--out", str(out)]) == 0
        (path,) = Path(out).glob("*/*/grid.csv")
        return path.read_bytes()

    first = run("a")
    second = run("b")  # fresh cache: full recompute, not a cache replay
    ok = first == second and first.count(b"\n") == 5
    announce("determinism (two identical grid invocations, byte-identical CSV)",
             ok, f"{len(first)} bytes")


def test_fold_protocol_840_recordings():
    labels = np.repeat(np.arange(12), 70)
    splits = kfold_split(labels, k=5, seed=1)
    union = np.concatenate([s.test_ids for s in splits])
    ok = (len(splits) == 5
          and all(len(s.test_ids) == 168 for s in splits)
          and all(len(s.train_ids) == 672 for s in splits)
          and all(not set(s.test_ids) & set(s.train_ids) for s in splits)
          and len(set(union.tolist())) == 840)
    announce("fold protocol (840 recordings -> 5 disjoint folds of 168, "
             "union-complete)", ok)


def test_bundled_fixture_replaces_converter():
    recs = parse_canonical_csv(FIXTURE)
    ok = len(recs) == 10 and all(r.accel.shape[1] == 3 for r in recs)
    announce("bundled canonical fixture (10 synthetic recordings parse without "
             "the converter)", ok)


# ---------------------------------------------------------------------------
# full-scale run on the real archive, when present


def _find_ucihar():
    candidates = [os.environ.get("UCI_HAR_DIR", "")]
    here = Path(__file__).resolve().parents[1]
    candidates += [str(here / "data" / "UCI HAR Dataset"), str(here / "data" / "ucihar")]
    for c in candidates:
        if c and (Path(c) / "train" / "X_train.txt").exists():
            return Path(c)
        if c and (Path(c) / "UCI HAR Dataset" / "train" / "X_train.txt").exists():
            return Path(c) / "UCI HAR Dataset"
    return None


def test_ucihar_features_desk_run():
    root = _find_ucihar()
    if root is None:
        print("\n[SKIP] desk run (cnn1d+cnn1d+fusion on published features, "
              "50 epochs, accuracy >= 85%): archive not found; set UCI_HAR_DIR "
              "or place it under data/UCI HAR Dataset")
        pytest.skip("published feature archive unavailable in this environment")
    started = time.perf_counter()
    train_samples, test_samples = parse_ucihar_features(root)
    counts_ok = (len(train_samples), len(test_samples)) == (7352, 2947)
    announce("desk run: published split counts (7352 train / 2947 test)", counts_ok)
    train_data = features_to_labeled(train_samples)
    test_data = features_to_labeled(test_samples)
    cfg = ModelConfig(NetKind.CNN1D, NetKind.CNN1D, True, FEATURE_VECTOR,
                      class_count=6)
    model = build_model(cfg, Rng(42))
    train(model, train_data, config=TrainConfig(epochs=50, seed=42))
    preds, _ = evaluate(model, test_data)
    acc = 100.0 * float((preds == test_data.labels).mean())
    elapsed = time.perf_counter() - started
    ok = acc >= 85.0 and elapsed < 1800.0
    announce("desk run (cnn1d+cnn1d+fusion, 50 epochs, fixed seed, "
             "accuracy >= 85% on the 2947-sample split)",
             ok, f"accuracy {acc:.2f}%, {elapsed / 60:.1f} min")
