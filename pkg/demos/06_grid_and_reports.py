# The ablation grid, end to end (desk scale)
#
# Trains a subset of the architecture grid on a synthetic stand-in for
# the feature-vector dataset and writes the CSV/JSON reports.  With real
# archives, `harfusion prepare` + `harfusion grid` do the same at scale.

import tempfile
from pathlib import Path

import numpy as np

from harfusion import (FixedSplitDataset, LabeledData, ModelConfig, NetKind,
                       Rng, TrainConfig, accuracy, confusion, emit_report,
                       run_grid)

rng = Rng(11)


def separable(n, seed, k=3):
    r = Rng(seed)
    x = r.normal((n, 64), scale=0.4)
    labels = np.arange(n) % k
    for c in range(k):
        x[labels == c, 8 * c:8 * (c + 1)] += 1.5
    return LabeledData((x,), labels)


dataset = FixedSplitDataset(name="synthetic", train=separable(96, 1),
                            test=separable(48, 2), class_count=3,
                            input_kind="single-feature-vector")

configs = [ModelConfig(NetKind.CNN1D, NetKind.CNN1D, fusion,
                       "single-feature-vector", class_count=3,
                       width_first=8, width_second=8)
           for fusion in (False, True)]

reports = run_grid(dataset, configs, TrainConfig(epochs=15, seed=4, batch_size=16))
for r in reports:
    print(f"{r.config.label():32s} {r.split}: {r.accuracy_pct:.1f}%")

# the confusion matrix is the ground truth for every accuracy figure
cm = np.asarray(reports[-1].confusion_matrix)
print("confusion:\n", cm)
print("accuracy recomputed from it:", round(accuracy(cm), 4))

out = Path(tempfile.mkdtemp()) / "grid"
emit_report(reports, "csv", out / "grid.csv")
emit_report(reports, "json", out / "grid.json")
print("wrote", out / "grid.csv")
print((out / "grid.csv").read_text().splitlines()[0])
