# Tensors and deterministic randomness
#
# Everything in harfusion is a float64 numpy array in row-major order.
# Randomness comes from a counter-mode splitmix64 stream, so a seed pins
# the entire run bit-for-bit, on any machine.

import numpy as np

from harfusion import Rng
from harfusion.tensor import concat, matmul, randn, reduce_mean, reshape, slice_axis

rng = Rng(2024)

# normal draws: mean 0, std = scale
w = randn([10000], rng, scale=0.1)
print("sample mean", round(w.mean(), 5), "sample std", round(w.std(), 5))

# same seed, same stream -- always
again = randn([10000], Rng(2024), scale=0.1)
print("bit-identical:", np.array_equal(w, again))

# the stream position only depends on how many values were drawn
r1, r2 = Rng(7), Rng(7)
joined = r1.uniform(10)
split = np.concatenate([r2.uniform(4), r2.uniform(6)])
print("grouping-independent:", np.array_equal(joined, split))

# shape plumbing used throughout the engine
a = reshape(np.arange(1.0, 7.0), [2, 3])
b = reshape(np.arange(10.0, 16.0), [2, 3])
both = concat([a, b], axis=1)            # [2, 6]
left = slice_axis(both, 1, 0, 3)         # recovers a exactly
print("concat/slice roundtrip:", np.array_equal(left, a))
print("matmul:", matmul(a, b.T))
print("mean over all axes:", reduce_mean(both))
