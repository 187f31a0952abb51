# Every layer, and how each one is verified
#
# Layers carry hand-written backward passes.  The gradient checker
# compares them against central finite differences; relative error is
# |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).

import numpy as np

from harfusion import Rng, grad_check
from harfusion.layers import (BatchNorm, Conv1D, ConvLSTM1D, ConvSpec, Dense,
                              LSTM, conv_forward, ConvParams, gap,
                              lstm_forward, LstmParams, softmax_cross_entropy)

rng = Rng(3)

# a strided 1-D convolution: (16-sample kernel, stride 8 is the standard
# geometry; here a toy one).  Output length is (n - k + 2p)/s + 1.
spec = ConvSpec(kernel=(2,), stride=(2,), in_channels=1, out_channels=1)
params = ConvParams(np.ones((2, 1, 1)), np.zeros(1))
print("conv [1,2,3,4] * [1,1], stride 2 ->", conv_forward(np.array([1., 2., 3., 4.]), spec, params))

# finite differences on a random instance
conv = Conv1D(ConvSpec((4,), (2,), 2, 3, padding=1), rng)
report = grad_check(conv, rng.normal((2, 8, 2)))
print("conv1d gradcheck:", report.passed, f"worst {report.max_rel_error:.2e}")

bn = BatchNorm(3)
report = grad_check(bn, rng.normal((5, 4, 3)) * 2 + 1)
print("batchnorm gradcheck:", report.passed, f"worst {report.max_rel_error:.2e}")

# the gate recurrence: sigma(0) = 0.5 everywhere when weights are zero
p = LstmParams.init(1, 1, rng)
p.b_f[:] = p.b_i[:] = p.b_o[:] = 0.0
p.b_c[:] = 50.0  # candidate tanh saturates to 1
h, c = lstm_forward(np.zeros((1, 1)), p)
print("single-step hidden state:", h[0, 0], "(0.5 * tanh(0.5) =", 0.5 * np.tanh(0.5), ")")

lstm = LSTM(2, 3, rng)
report = grad_check(lstm, rng.normal((2, 5, 2)))
print("lstm gradcheck (through time):", report.passed, f"worst {report.max_rel_error:.2e}")

# the convolutional recurrence keeps the spatial axis alive at every step
clstm = ConvLSTM1D(in_channels=2, units=3, kernel=(3,), rng=rng)
report = grad_check(clstm, rng.normal((1, 3, 8, 2)))
print("clstm1d gradcheck:", report.passed, f"worst {report.max_rel_error:.2e}")

# pooling collapses spatial positions to one value per channel
print("gap of a 2x2 map [1,2,3,4]:", gap(np.array([[1., 2.], [3., 4.]])[:, :, None]))

# classifier head loss: uniform logits give ln(K)
loss, probs, grad = softmax_cross_entropy(np.zeros((1, 6)), np.eye(6)[[2]])
print("uniform 6-way loss:", loss, "= ln 6 =", np.log(6))
