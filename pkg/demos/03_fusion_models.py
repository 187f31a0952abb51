# Building the two-level fusion models
#
# Two first-level branches (accelerometer, gyroscope) feed a late-fusion
# join, a second-level network, and global average pooling; intermediate
# fusion additionally concatenates the pooled branch features before the
# dense head.  15 raw-data pairs and 9 feature-vector pairs enumerate the
# whole ablation, each with fusion on and off.

import numpy as np

from harfusion import (ModelConfig, NetKind, Rng, build_model,
                       enumerate_architectures, load_checkpoint,
                       save_checkpoint)

raw = enumerate_architectures("raw-dual-branch")
feat = enumerate_architectures("single-feature-vector")
print(f"raw grid: {len(raw)} configs ({len(raw) // 2} pairs x fusion on/off)")
print(f"feature grid: {len(feat)} configs")

# with intermediate fusion the head sees 128 + 128 + 128 = 384 features
cfg = ModelConfig(NetKind.CNN1D, NetKind.CNN1D, intermediate_fusion=True,
                  input_kind="raw-dual-branch", class_count=12)
model = build_model(cfg, Rng(0))
print("dense input width, fusion on:", model.dense_input_dim)

rng = Rng(1)
batch = (rng.normal((4, 1024, 3)), rng.normal((4, 1024, 3)))
logits = model.forward(batch)
print("logits shape:", logits.shape)

# the forward pass records every intermediate shape
for name, shape in model.trace_shapes(batch):
    print(f"  {name:22s} {shape}")

# checkpoints round-trip bit-exactly (params.json + little-endian params.bin)
save_checkpoint(model, "/tmp/harfusion-demo-ckpt")
clone = load_checkpoint("/tmp/harfusion-demo-ckpt")
print("checkpoint roundtrip bit-exact:",
      np.array_equal(model.forward(batch), clone.forward(batch)))

# a hybrid pair with a 2-D second stage: branch maps are stacked on a new
# height axis (2 rows) so the 2x8 kernel spans both branches
hybrid = build_model(ModelConfig(NetKind.LSTM, NetKind.CNN2D, False,
                                 "raw-dual-branch", class_count=12,
                                 width_first=16, width_second=16), Rng(2))
small = (rng.normal((2, 128, 3)), rng.normal((2, 128, 3)))
print("lstm+cnn2d logits:", hybrid.forward(small).shape)
