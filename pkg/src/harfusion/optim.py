"""Adam optimization and the training loop.

The batch size follows the fixed rule ``max(1, n_train // 32)``; the last
short batch of an epoch is kept.  Everything is deterministic given the
seed in `TrainConfig`: shuffling uses the package RNG and parameter
updates are plain float64 arithmetic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .layers import one_hot, softmax_cross_entropy
from .model import Model
from .tensor import Rng


def batch_size(n_train: int) -> int:
    """Training-set size divided by 32, floored, never below 1."""
    if n_train < 1:
        raise ConfigError("need at least one training sample")
    return max(1, n_train // 32)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 500
    seed: int = 0
    shuffle: bool = True
    batch_size: int | None = None  # None: the n_train // 32 rule

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ConfigError("learning_rate and epsilon must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size override must be >= 1")

    def hyperparams(self) -> dict:
        return {"learning_rate": self.learning_rate, "beta1": self.beta1,
                "beta2": self.beta2, "epsilon": self.epsilon,
                "epochs": self.epochs, "seed": self.seed, "shuffle": self.shuffle,
                "batch_size": self.batch_size}


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)  # mean training loss per epoch
    train_accuracy: list = field(default_factory=list)  # percent
    valid_accuracy: list = field(default_factory=list)  # percent; empty w/o valid set
    epoch_seconds: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"losses": self.losses, "train_accuracy": self.train_accuracy,
                "valid_accuracy": self.valid_accuracy,
                "epoch_seconds": self.epoch_seconds}


class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(params: dict, grads: dict, state: AdamState, t: int,
              config: TrainConfig) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    b1, b2, eps, lr = config.beta1, config.beta2, config.epsilon, config.learning_rate
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape "
                             f"{p.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p[...] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    state.t = t
    return state


@dataclass
class LabeledData:
    """Model-ready arrays: one or two input blocks plus integer labels."""

    inputs: tuple
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = tuple(np.asarray(a, dtype=np.float64) for a in self.inputs)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        sizes = {a.shape[0] for a in self.inputs} | {len(self.labels)}
        if len(sizes) != 1:
            raise ShapeError(f"inputs and labels disagree on sample count: {sizes}")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> tuple:
        return tuple(a[idx] for a in self.inputs), self.labels[idx]


def _first_nonfinite(model: Model, logits) -> str:
    if not np.all(np.isfinite(logits)):
        return "logits"
    for name, arr in model.registry.items():
        if not np.all(np.isfinite(arr)):
            return name
    for name, arr in (model.param_grads or {}).items():
        if not np.all(np.isfinite(arr)):
            return f"grad:{name}"
    return "loss"


def evaluate(model: Model, data: LabeledData, max_batch: int = 512):
    """(predicted labels, mean loss) over ``data`` in inference mode."""
    preds = np.empty(len(data), dtype=np.int64)
    total_loss = 0.0
    k = model.config.class_count
    for lo in range(0, len(data), max_batch):
        idx = np.arange(lo, min(lo + max_batch, len(data)))
        xb, yb = data.take(idx)
        logits = model.forward(xb, train=False)
        loss, probs, _ = softmax_cross_entropy(logits, one_hot(yb, k))
        preds[idx] = np.argmax(probs, axis=1)
        total_loss += loss * len(idx)
    return preds, total_loss / len(data)


def train(model: Model, train_set: LabeledData, valid_set: LabeledData | None = None,
          config: TrainConfig = TrainConfig()) -> TrainHistory:
    """Mini-batch Adam over ``config.epochs`` epochs.

    Shuffles with the seeded stream each epoch, keeps the trailing short
    batch, runs batchnorm in training mode, and aborts with the name of
    the first non-finite tensor if the loss ever leaves the reals.
    """
    n = len(train_set)
    if n == 0:
        raise ConfigError("training set is empty")
    k = model.config.class_count
    if train_set.labels.min() < 0 or train_set.labels.max() >= k:
        raise ConfigError(f"labels must lie in [0, {k})")
    bs = config.batch_size if config.batch_size is not None else batch_size(n)
    # every sample is visited once per epoch; a trailing singleton is folded
    # into the previous batch because batchnorm statistics need >= 2 samples
    bounds = list(range(0, n, bs)) + [n]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
        del bounds[-2]
    rng = Rng(config.seed)
    params = model.registry
    state = AdamState(params)
    history = TrainHistory()
    step = 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        epoch_loss = 0.0
        correct = 0
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = order[lo:hi]
            xb, yb = train_set.take(idx)
            logits = model.forward(xb, train=True)
            loss, probs, grad_logits = softmax_cross_entropy(logits, one_hot(yb, k))
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, step {step}; "
                    f"first bad tensor: {_first_nonfinite(model, logits)}")
            model.backward(grad_logits / len(idx))  # gradient of the mean loss
            step += 1
            adam_step(params, model.param_grads, state, step, config)
            epoch_loss += loss * len(idx)
            correct += int((np.argmax(probs, axis=1) == yb).sum())
        history.losses.append(epoch_loss / n)
        history.train_accuracy.append(100.0 * correct / n)
        if valid_set is not None:
            preds, _ = evaluate(model, valid_set)
            history.valid_accuracy.append(
                100.0 * float((preds == valid_set.labels).mean()))
        history.epoch_seconds.append(time.perf_counter() - started)
    return history
