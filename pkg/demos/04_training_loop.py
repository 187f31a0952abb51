# Training with Adam
#
# The batch size follows the fixed rule n_train // 32 (minimum 1); runs
# are deterministic given the seed.  A tiny separable problem converges
# to 100% train accuracy in a handful of epochs.

import numpy as np

from harfusion import (LabeledData, ModelConfig, NetKind, Rng, TrainConfig,
                       batch_size, build_model, evaluate_model, train)

print("batch sizes:", batch_size(7352), batch_size(672), batch_size(10))

rng = Rng(5)
x = rng.normal((32, 64), scale=0.3)
labels = np.arange(32) % 2
x[labels == 0, :8] += 2.0
x[labels == 1, 8:16] += 2.0
data = LabeledData((x,), labels)

cfg = ModelConfig(NetKind.CNN1D, NetKind.CNN1D, True, "single-feature-vector",
                  class_count=2, width_first=8, width_second=8)
model = build_model(cfg, Rng(6))

# 32 samples under the /32 rule would mean singleton batches, which
# batchnorm statistics cannot use; override the batch size instead
history = train(model, data, config=TrainConfig(epochs=40, seed=7, batch_size=16))
print("loss: first", round(history.losses[0], 4), "last", round(history.losses[-1], 4))
print("train accuracy per epoch:", [int(a) for a in history.train_accuracy[:10]], "...")

preds, loss = evaluate_model(model, data)
print("final train accuracy:", 100.0 * float((preds == labels).mean()), "%")

# same seed, same history -- bit for bit
rerun = train(build_model(cfg, Rng(6)), data,
              config=TrainConfig(epochs=40, seed=7, batch_size=16))
print("deterministic:", rerun.losses == history.losses)
