"""Finite-difference verification of analytic gradients.

Any layer exposing ``params``/``grads`` dicts and ``forward``/``backward``
can be checked: the scalar probe loss is the inner product of the layer
output with a fixed random projection, so a full backward pass is
compared against central differences for the input and every parameter.
Relative error uses ``|a - n| / max(|a|, |n|, 1e-8)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .tensor import Rng


@dataclass
class GradCheckReport:
    step: float
    tolerance: float
    max_rel_error: float
    per_tensor: dict = field(default_factory=dict)  # tensor name -> max relative error
    passed: bool = False

    def worst(self) -> str:
        if not self.per_tensor:
            return "(no tensors)"
        name = max(self.per_tensor, key=self.per_tensor.get)
        return f"{name}: {self.per_tensor[name]:.3e}"


def _central_diff(arr: np.ndarray, loss, step: float) -> np.ndarray:
    """Central differences of ``loss()`` wrt ``arr``, mutating it in place."""
    num = np.zeros_like(arr)
    flat, nflat = arr.ravel(), num.ravel()
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + step
        lp = loss()
        flat[j] = orig - step
        lm = loss()
        flat[j] = orig
        nflat[j] = (lp - lm) / (2.0 * step)
    return num


def _max_rel(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    return float(rel.max()) if rel.size else 0.0


def grad_check(layer, x: np.ndarray, tolerance: float = 1e-4,
               step: float = 1e-5, seed: int = 0, train: bool = True) -> GradCheckReport:
    """Compare ``layer.backward`` against central differences.

    Checks the gradient with respect to the input and to every entry of
    ``layer.params``; the layer must be deterministic given its inputs.
    """
    if not (1e-7 < step < 1e-3):
        raise ParameterError(f"step must lie in (1e-7, 1e-3), got {step}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    rng = Rng(seed)
    y = layer.forward(x, train=train)
    proj = rng.normal(y.shape)

    def loss() -> float:
        return float(np.sum(layer.forward(x, train=train) * proj))

    grad_in = layer.backward(proj)
    analytic = {"input": np.asarray(grad_in), **{k: v.copy() for k, v in layer.grads.items()}}

    report = GradCheckReport(step=step, tolerance=tolerance, max_rel_error=0.0)
    targets = [("input", x)] + list(layer.params.items())
    for name, arr in targets:
        numeric = _central_diff(arr, loss, step)
        report.per_tensor[name] = _max_rel(analytic[name], numeric)
    report.max_rel_error = max(report.per_tensor.values())
    report.passed = report.max_rel_error < tolerance
    return report


class GapHead:
    """Pooling plus classifier head, checked as one composite."""

    def __init__(self, channels: int, classes: int, rng: Rng):
        from .layers import Dense, GlobalAveragePool
        self.pool = GlobalAveragePool()
        self.dense = Dense(channels, classes, rng)
        self.params = {f"dense.{k}": v for k, v in self.dense.params.items()}
        self.grads: dict = {}

    def forward(self, x, train: bool = False):
        return self.dense.forward(self.pool.forward(x), train=train)

    def backward(self, grad_out):
        gx = self.dense.backward(grad_out)
        self.grads = {f"dense.{k}": v for k, v in self.dense.grads.items()}
        return self.pool.backward(gx)


def _layer_factories():
    from . import layers as L

    def pick(rng, lo, hi):  # integer in [lo, hi]
        return lo + int(rng.uniform(1)[0] * (hi - lo + 1e-9))

    def conv1d(rng):
        k, s, p = pick(rng, 2, 5), pick(rng, 1, 3), pick(rng, 0, 1)
        cin, cout = pick(rng, 1, 3), pick(rng, 1, 3)
        n = k + s * pick(rng, 3, 6) - 2 * p
        spec = L.ConvSpec((k,), (s,), cin, cout, padding=p)
        return L.Conv1D(spec, rng), rng.normal((pick(rng, 1, 2), n, cin))

    def conv2d(rng):
        kh, kw = pick(rng, 2, 3), pick(rng, 2, 4)
        sh, sw = pick(rng, 1, 2), pick(rng, 1, 2)
        cin, cout = pick(rng, 1, 2), pick(rng, 1, 3)
        h = kh + sh * pick(rng, 1, 3)
        w = kw + sw * pick(rng, 1, 3)
        spec = L.ConvSpec((kh, kw), (sh, sw), cin, cout)
        return L.Conv2D(spec, rng), rng.normal((pick(rng, 1, 2), h, w, cin))

    def batchnorm(rng):
        c = pick(rng, 2, 4)
        x = rng.normal((pick(rng, 3, 6), pick(rng, 3, 5), c), scale=2.0) + 1.0
        return L.BatchNorm(c), x

    def dense(rng):
        d, k = pick(rng, 3, 6), pick(rng, 2, 4)
        return L.Dense(d, k, rng), rng.normal((pick(rng, 2, 4), d))

    def lstm(rng):
        d, u = pick(rng, 1, 3), pick(rng, 2, 4)
        return L.LSTM(d, u, rng), rng.normal((pick(rng, 1, 2), pick(rng, 3, 5), d))

    def clstm1d(rng):
        c, u, k = pick(rng, 1, 2), pick(rng, 2, 3), pick(rng, 3, 4)
        return (L.ConvLSTM1D(c, u, (k,), rng),
                rng.normal((1, pick(rng, 2, 3), pick(rng, 5, 8), c)))

    def clstm2d(rng):
        c, u = pick(rng, 1, 2), 2
        return (L.ConvLSTM2D(c, u, (2, 3), rng),
                rng.normal((1, 2, 3, pick(rng, 3, 5), c)))

    def gap_head(rng):
        c, k = pick(rng, 2, 4), pick(rng, 2, 3)
        return GapHead(c, k, rng), rng.normal((pick(rng, 2, 3), pick(rng, 4, 7), c))

    return {"conv1d": conv1d, "conv2d": conv2d, "batchnorm": batchnorm,
            "dense": dense, "lstm": lstm, "clstm1d": clstm1d,
            "clstm2d": clstm2d, "gap+head": gap_head}


def layer_suite(instances: int = 20, tolerance: float = 1e-4,
                step: float = 1e-5, seed: int = 0) -> dict:
    """Worst relative error per layer kind over random instances.

    Every layer in the model inventory is exercised: both convolution
    ranks, batch normalization, the dense head, the dense and the two
    convolutional recurrences, and pooling+head as a composite.
    """
    results = {}
    for name, make in _layer_factories().items():
        worst = 0.0
        for i in range(instances):
            rng = Rng(seed).derive(sum(map(ord, name)), i)
            layer, x = make(rng)
            report = grad_check(layer, x, tolerance=tolerance, step=step, seed=i)
            worst = max(worst, report.max_rel_error)
        results[name] = worst
    return results


def stage_suite(tolerance: float = 1e-4, step: float = 5e-5, seed: int = 0,
                widths: int = 3) -> dict:
    """Whole-model checks covering all five stage kinds.

    The step is larger than the layer suite's because dead parameters
    (an always-positive ReLU channel feeding train-mode batchnorm) have
    exactly-zero gradients, and probe noise at 1e-5 can exceed the 1e-8
    relative-error floor.  Seeds sweep until ReLU pre-activations sit
    clear of the kink, where central differences are invalid.
    """
    from .model import FEATURE_VECTOR, RAW_DUAL, ModelConfig, NetKind

    cases = [
        ("cnn1d", ModelConfig(NetKind.CNN1D, NetKind.CNN1D, True, FEATURE_VECTOR,
                              3, widths, widths, 4)),
        ("lstm", ModelConfig(NetKind.LSTM, NetKind.LSTM, True, FEATURE_VECTOR,
                             3, widths, widths, 4)),
        ("clstm1d", ModelConfig(NetKind.CLSTM1D, NetKind.CLSTM1D, True,
                                FEATURE_VECTOR, 3, widths, widths, 4)),
        ("cnn2d", ModelConfig(NetKind.CNN1D, NetKind.CNN2D, True, RAW_DUAL,
                              3, widths, widths, 4)),
        ("clstm2d", ModelConfig(NetKind.CNN1D, NetKind.CLSTM2D, True, RAW_DUAL,
                                3, widths, widths, 4)),
    ]
    results = {}
    for name, config in cases:
        model, batch = kink_safe_instance(config, seed=seed)
        report = grad_check_model(model, batch, tolerance=tolerance,
                                  step=step, seed=seed)
        results[name] = report.max_rel_error
    return results


def kink_safe_instance(config, seed: int = 0, margin: float = 1e-3,
                       time_len: int = 32, batch: int = 2, attempts: int = 30):
    """Model + batch whose ReLU pre-activations stay clear of zero."""
    from .model import RAW_DUAL, build_model

    for s in range(seed, seed + attempts):
        rng = Rng(1000 + s)
        model = build_model(config, Rng(s))
        if config.input_kind == RAW_DUAL:
            data = (rng.normal((batch, time_len, 3)), rng.normal((batch, time_len, 3)))
        else:
            data = (rng.normal((batch, time_len)),)
        model.forward(data, train=True)
        if model.relu_kink_margin() > margin:
            return model, data
    raise RuntimeError(f"no kink-safe instance found for {config.label()} "
                       f"in {attempts} attempts")


def grad_check_model(model, batch, tolerance: float = 1e-4, step: float = 1e-5,
                     seed: int = 0) -> GradCheckReport:
    """Whole-model check: every registry parameter plus each input array."""
    if not (1e-7 < step < 1e-3):
        raise ParameterError(f"step must lie in (1e-7, 1e-3), got {step}")
    batch = tuple(np.ascontiguousarray(b, dtype=np.float64) for b in batch)
    rng = Rng(seed)
    logits = model.forward(batch, train=True)
    proj = rng.normal(logits.shape)

    def loss() -> float:
        return float(np.sum(model.forward(batch, train=True) * proj))

    model.forward(batch, train=True)
    input_grads = model.backward(proj)
    param_grads = {k: v.copy() for k, v in model.param_grads.items()}

    report = GradCheckReport(step=step, tolerance=tolerance, max_rel_error=0.0)
    for bi, arr in enumerate(batch):
        numeric = _central_diff(arr, loss, step)
        report.per_tensor[f"input{bi}"] = _max_rel(np.asarray(input_grads[bi]), numeric)
    for name, arr in model.registry.items():
        numeric = _central_diff(arr, loss, step)
        report.per_tensor[name] = _max_rel(param_grads[name], numeric)
    report.max_rel_error = max(report.per_tensor.values())
    report.passed = report.max_rel_error < tolerance
    return report
