"""Two-level fusion models.

A model is the fixed topology:

    branch inputs -> first-level stage per branch -> late-fusion join ->
    second-level stage -> global average pooling -> (optional pooled
    branch features concatenated in) -> dense head -> logits

First-level stages must emit 1-D feature maps ``[batch, length, width]``
(CNN1D / LSTM / CLSTM1D); the late-fusion join concatenates branch maps
along channels when the second stage is 1-D, and stacks them along a new
height axis when the second stage is 2-D.  With intermediate fusion on,
the pooled per-branch features are concatenated with the pooled
second-stage features before the head, so the head input width is
``n_branches * width_first + width_second`` (just ``width_second``
otherwise).

Stage geometry follows the fixed implementation table: 1-D convolutions
use kernel 16 / stride 8, 2-D ones kernel 2x8 / stride 2x4, and
recurrent gate convolutions always run stride 1 with shape-preserving
padding.  Where a strided convolution does not tile an incoming length
exactly, the tail is cropped (equivalently: only fully covered windows
are kept); inputs shorter than one kernel are zero-padded up to it.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError, ShapeError
from .layers import (BatchNorm, Conv1D, Conv2D, ConvLSTM1D, ConvLSTM2D,
                     ConvSpec, Dense, GlobalAveragePool, LSTM, ReLU)
from .tensor import Rng

KERNEL_1D, STRIDE_1D = 16, 8
KERNEL_2D, STRIDE_2D = (2, 8), (2, 4)
DEFAULT_WIDTH = 128
DEFAULT_CLSTM_STEPS = 8
HEAD_INIT_SCALE = 0.01  # keeps the fresh-model softmax near uniform

RAW_DUAL = "raw-dual-branch"
FEATURE_VECTOR = "single-feature-vector"

CHECKPOINT_VERSION = 1


class NetKind(Enum):
    CNN1D = "cnn1d"
    CNN2D = "cnn2d"
    LSTM = "lstm"
    CLSTM1D = "clstm1d"
    CLSTM2D = "clstm2d"

    @classmethod
    def parse(cls, name: str) -> "NetKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown network kind {name!r}; "
                              f"choose from {[k.value for k in cls]}") from None

    @property
    def emits_1d_map(self) -> bool:
        return self in (NetKind.CNN1D, NetKind.LSTM, NetKind.CLSTM1D)

    @property
    def is_2d(self) -> bool:
        return self in (NetKind.CNN2D, NetKind.CLSTM2D)


@dataclass(frozen=True)
class ModelConfig:
    first: NetKind
    second: NetKind
    intermediate_fusion: bool
    input_kind: str = RAW_DUAL
    class_count: int = 12
    width_first: int = DEFAULT_WIDTH
    width_second: int = DEFAULT_WIDTH
    clstm_steps: int = DEFAULT_CLSTM_STEPS

    def __post_init__(self):
        if self.input_kind not in (RAW_DUAL, FEATURE_VECTOR):
            raise ConfigError(f"unknown input kind {self.input_kind!r}")
        if self.class_count < 2:
            raise ConfigError("class_count must be >= 2")
        if min(self.width_first, self.width_second, self.clstm_steps) < 1:
            raise ConfigError("widths and clstm_steps must be >= 1")

    @property
    def branch_count(self) -> int:
        return 2 if self.input_kind == RAW_DUAL else 1

    def to_dict(self) -> dict:
        return {"first": self.first.value, "second": self.second.value,
                "intermediate_fusion": self.intermediate_fusion,
                "input_kind": self.input_kind, "class_count": self.class_count,
                "width_first": self.width_first, "width_second": self.width_second,
                "clstm_steps": self.clstm_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["first"] = NetKind.parse(d["first"])
        d["second"] = NetKind.parse(d["second"])
        return cls(**d)

    def label(self) -> str:
        return (f"{self.first.value}+{self.second.value}"
                f"+fusion-{'on' if self.intermediate_fusion else 'off'}")


def enumerate_architectures(input_kind: str, class_count: int | None = None,
                            width_first: int = DEFAULT_WIDTH,
                            width_second: int = DEFAULT_WIDTH,
                            clstm_steps: int = DEFAULT_CLSTM_STEPS) -> list:
    """Every dimensionally compatible (first, second) pair, fusion off and on.

    First-level stages must emit 1-D maps, so the raw dual-branch grid is
    3 firsts x 5 seconds = 15 pairs (30 configs); feature-vector input
    admits only the 1-D kinds on both levels: 9 pairs (18 configs).
    """
    firsts = [NetKind.CNN1D, NetKind.LSTM, NetKind.CLSTM1D]
    if input_kind == RAW_DUAL:
        seconds = list(NetKind)
        k = 12 if class_count is None else class_count
    elif input_kind == FEATURE_VECTOR:
        seconds = list(firsts)
        k = 6 if class_count is None else class_count
    else:
        raise ConfigError(f"unknown input kind {input_kind!r}")
    configs = []
    for first in firsts:
        for second in seconds:
            for fusion in (False, True):
                configs.append(ModelConfig(
                    first=first, second=second, intermediate_fusion=fusion,
                    input_kind=input_kind, class_count=k,
                    width_first=width_first, width_second=width_second,
                    clstm_steps=clstm_steps))
    return configs


# ---------------------------------------------------------------------------
# shape adapters (parameterless ops with exact adjoints)


class FitForConv:
    """Crop the tail of an axis so a strided kernel tiles it exactly;
    zero-pad up to one kernel when the axis is shorter than the kernel."""

    params: dict = {}
    grads: dict = {}

    def __init__(self, kernel: int, stride: int, axis: int):
        self.kernel, self.stride, self.axis = kernel, stride, axis
        self._orig = None

    def _target(self, n: int) -> int:
        if n < self.kernel:
            return self.kernel
        return self.kernel + self.stride * ((n - self.kernel) // self.stride)

    def forward(self, x, train: bool = False):
        n = x.shape[self.axis]
        t = self._target(n)
        self._orig = n
        if t == n:
            return x
        idx = [slice(None)] * x.ndim
        if t < n:
            idx[self.axis] = slice(0, t)
            return x[tuple(idx)]
        pad = [(0, 0)] * x.ndim
        pad[self.axis] = (0, t - n)
        return np.pad(x, pad)

    def backward(self, g):
        n = self._orig
        t = g.shape[self.axis]
        if t == n:
            return g
        if t < n:  # forward cropped: the dropped tail gets zero gradient
            pad = [(0, 0)] * g.ndim
            pad[self.axis] = (0, n - t)
            return np.pad(g, pad)
        idx = [slice(None)] * g.ndim
        idx[self.axis] = slice(0, n)
        return g[tuple(idx)]


class ToHeightWidth:
    """[batch, T, C] -> [batch, C, T, 1]: sensor axes as height, time as width."""

    params: dict = {}
    grads: dict = {}

    def forward(self, x, train: bool = False):
        return np.ascontiguousarray(x.transpose(0, 2, 1))[..., None]

    def backward(self, g):
        return np.ascontiguousarray(g[..., 0].transpose(0, 2, 1))


class StepSplit1D:
    """[batch, T, C] -> [batch, steps, T/steps, C].

    ``strict`` demands exact divisibility; otherwise the step count drops
    to T when T < steps and the tail remainder is cropped.
    """

    params: dict = {}
    grads: dict = {}

    def __init__(self, steps: int, strict: bool = False):
        self.steps, self.strict = steps, strict
        self._orig = None

    def _plan(self, t: int):
        s = self.steps
        if t % s or t < s:
            if self.strict:
                raise ConfigError(f"time length {t} is not divisible by {s} steps")
            s = min(s, t)
        return s, (t // s) * s

    def forward(self, x, train: bool = False):
        b, t, c = x.shape
        s, keep = self._plan(t)
        self._orig = (t, s, keep)
        return x[:, :keep, :].reshape(b, s, keep // s, c)

    def backward(self, g):
        t, s, keep = self._orig
        b, c = g.shape[0], g.shape[-1]
        flat = g.reshape(b, keep, c)
        if keep == t:
            return flat
        return np.pad(flat, ((0, 0), (0, t - keep), (0, 0)))


class StepSplit2D:
    """[batch, T, C] -> [batch, steps, C, T/steps, 1] (axes become height)."""

    params: dict = {}
    grads: dict = {}

    def __init__(self, steps: int, strict: bool = False):
        self._inner = StepSplit1D(steps, strict)

    def forward(self, x, train: bool = False):
        y = self._inner.forward(x)  # [b, s, L, c]
        return np.ascontiguousarray(y.transpose(0, 1, 3, 2))[..., None]

    def backward(self, g):
        return self._inner.backward(np.ascontiguousarray(g[..., 0].transpose(0, 1, 3, 2)))


class StepSplitWidth:
    """[batch, H, T, C] -> [batch, steps, H, T/steps, C] for 2-D recurrences."""

    params: dict = {}
    grads: dict = {}

    def __init__(self, steps: int, strict: bool = False):
        self.steps, self.strict = steps, strict
        self._orig = None

    def forward(self, x, train: bool = False):
        b, h, t, c = x.shape
        s = self.steps
        if t % s or t < s:
            if self.strict:
                raise ConfigError(f"width {t} is not divisible by {s} steps")
            s = min(s, t)
        keep = (t // s) * s
        self._orig = (t, s, keep)
        y = x[:, :, :keep, :].reshape(b, h, s, keep // s, c)
        return np.ascontiguousarray(y.transpose(0, 2, 1, 3, 4))

    def backward(self, g):
        t, s, keep = self._orig
        b, h, c = g.shape[0], g.shape[2], g.shape[-1]
        flat = np.ascontiguousarray(g.transpose(0, 2, 1, 3, 4)).reshape(b, h, keep, c)
        if keep == t:
            return flat
        return np.pad(flat, ((0, 0), (0, 0), (0, t - keep), (0, 0)))


class _Pipeline:
    """Named sequence of ops; backward runs them in reverse."""

    def __init__(self, steps):
        self.steps = steps  # list of (name, op)

    def forward(self, x, train: bool = False, trace=None, prefix: str = ""):
        for name, op in self.steps:
            x = op.forward(x, train=train)
            if trace is not None:
                trace.append((f"{prefix}{name}", tuple(x.shape)))
        return x

    def backward(self, g):
        for _, op in reversed(self.steps):
            g = op.backward(g)
        return g

    def named_params(self):
        for name, op in self.steps:
            for pname, arr in op.params.items():
                yield f"{name}.{pname}", arr

    def named_grads(self):
        for name, op in self.steps:
            for pname, arr in op.grads.items():
                yield f"{name}.{pname}", arr

    def named_buffers(self):
        for name, op in self.steps:
            if isinstance(op, BatchNorm):
                for bname, arr in op.buffers.items():
                    yield f"{name}.{bname}", arr


def _build_stage(kind: NetKind, in_channels: int, width: int, steps: int,
                 rng: Rng, second_level: bool) -> _Pipeline:
    if kind == NetKind.CNN1D:
        spec = ConvSpec((KERNEL_1D,), (STRIDE_1D,), in_channels, width)
        return _Pipeline([("fit", FitForConv(KERNEL_1D, STRIDE_1D, axis=1)),
                          ("conv", Conv1D(spec, rng)),
                          ("relu", ReLU()), ("bn", BatchNorm(width))])
    if kind == NetKind.CNN2D:
        ops = []
        if not second_level:
            ops.append(("to2d", ToHeightWidth()))
            in_channels = 1
        spec = ConvSpec(KERNEL_2D, STRIDE_2D, in_channels, width)
        ops += [("fit_h", FitForConv(KERNEL_2D[0], STRIDE_2D[0], axis=1)),
                ("fit_w", FitForConv(KERNEL_2D[1], STRIDE_2D[1], axis=2)),
                ("conv", Conv2D(spec, rng)),
                ("relu", ReLU()), ("bn", BatchNorm(width))]
        return _Pipeline(ops)
    if kind == NetKind.LSTM:
        return _Pipeline([("lstm", LSTM(in_channels, width, rng))])
    if kind == NetKind.CLSTM1D:
        return _Pipeline([("split", StepSplit1D(steps)),
                          ("clstm", ConvLSTM1D(in_channels, width, (KERNEL_1D,), rng))])
    if kind == NetKind.CLSTM2D:
        ops = [("split", StepSplit2D(steps))] if not second_level else \
              [("split", StepSplitWidth(steps))]
        ch = 1 if not second_level else in_channels
        ops.append(("clstm", ConvLSTM2D(ch, width, KERNEL_2D, rng)))
        return _Pipeline(ops)
    raise ConfigError(f"unhandled network kind {kind}")


class Model:
    """Parameterized two-level fusion graph with a named parameter registry."""

    def __init__(self, config: ModelConfig, rng: Rng):
        validate_pair(config)
        self.config = config
        nb = config.branch_count
        in_ch = 3 if config.input_kind == RAW_DUAL else 1
        self.branches = [_build_stage(config.first, in_ch, config.width_first,
                                      config.clstm_steps, rng, second_level=False)
                         for _ in range(nb)]
        self._join = "stack" if config.second.is_2d else "channels"
        second_in = config.width_first if self._join == "stack" else nb * config.width_first
        self.second = _build_stage(config.second, second_in, config.width_second,
                                   config.clstm_steps, rng, second_level=True)
        self.branch_gaps = [GlobalAveragePool() for _ in range(nb)] \
            if config.intermediate_fusion else []
        self.second_gap = GlobalAveragePool()
        head_in = config.width_second
        if config.intermediate_fusion:
            head_in += nb * config.width_first
        self.head = Dense(head_in, config.class_count, rng, init_scale=HEAD_INIT_SCALE)
        self.last_trace: list = []
        self.param_grads: "OrderedDict[str, np.ndarray]" = OrderedDict()

    # -- introspection ------------------------------------------------------

    @property
    def registry(self) -> "OrderedDict[str, np.ndarray]":
        reg = OrderedDict()
        for bi, stage in enumerate(self.branches):
            for name, arr in stage.named_params():
                reg[f"branch{bi}.{name}"] = arr
        for name, arr in self.second.named_params():
            reg[f"second.{name}"] = arr
        for name, arr in self.head.params.items():
            reg[f"head.{name}"] = arr
        return reg

    def state_items(self) -> "OrderedDict[str, np.ndarray]":
        """Registry plus non-trainable buffers (running statistics)."""
        items = self.registry
        for bi, stage in enumerate(self.branches):
            for name, arr in stage.named_buffers():
                items[f"branch{bi}.{name}"] = arr
        for name, arr in self.second.named_buffers():
            items[f"second.{name}"] = arr
        return items

    @property
    def dense_input_dim(self) -> int:
        return self.head.params["w"].shape[0]

    # -- execution ----------------------------------------------------------

    def _lift_inputs(self, batch) -> tuple:
        if not isinstance(batch, (tuple, list)):
            batch = (batch,)
        batch = tuple(np.asarray(b, dtype=np.float64) for b in batch)
        nb = self.config.branch_count
        if self.config.input_kind == RAW_DUAL:
            if len(batch) != 2:
                raise ShapeError(f"dual-branch input needs 2 blocks, got {len(batch)}")
            for b in batch:
                if b.ndim != 3 or b.shape[-1] != 3:
                    raise ShapeError(f"raw block must be [batch, T, 3], got {b.shape}")
            if batch[0].shape != batch[1].shape:
                raise ShapeError("accelerometer and gyroscope blocks must share shape")
            return batch
        if len(batch) != 1:
            raise ShapeError(f"feature input is a single array, got {len(batch)}")
        x = batch[0]
        if x.ndim != 2:
            raise ShapeError(f"feature input must be [batch, features], got {x.shape}")
        return (x[:, :, None],)

    def forward(self, batch, train: bool = False) -> np.ndarray:
        inputs = self._lift_inputs(batch)
        trace: list = []
        outs = []
        for bi, (stage, x) in enumerate(zip(self.branches, inputs)):
            trace.append((f"branch{bi}.input", tuple(x.shape)))
            outs.append(stage.forward(x, train=train, trace=trace, prefix=f"branch{bi}."))
        if self._join == "channels":
            fused = np.concatenate(outs, axis=2) if len(outs) > 1 else outs[0]
        else:
            fused = np.stack(outs, axis=1)
        trace.append(("late_fusion", tuple(fused.shape)))
        self._branch_out_shapes = [o.shape for o in outs]
        second_out = self.second.forward(fused, train=train, trace=trace, prefix="second.")
        pooled = []
        for bi, g in enumerate(self.branch_gaps):
            pooled.append(g.forward(outs[bi]))
            trace.append((f"gap.branch{bi}", tuple(pooled[-1].shape)))
        pooled.append(self.second_gap.forward(second_out))
        trace.append(("gap.second", tuple(pooled[-1].shape)))
        feat = np.concatenate(pooled, axis=1) if len(pooled) > 1 else pooled[0]
        trace.append(("fused_features", tuple(feat.shape)))
        logits = self.head.forward(feat, train=train)
        trace.append(("logits", tuple(logits.shape)))
        self.last_trace = trace
        return logits

    def backward(self, grad_logits: np.ndarray) -> tuple:
        """Propagates to every parameter (collected in ``param_grads``) and
        returns gradients with respect to the input arrays."""
        cfg = self.config
        gfeat = self.head.backward(grad_logits)
        nb = cfg.branch_count
        cuts, offset = [], 0
        widths = ([cfg.width_first] * nb if cfg.intermediate_fusion else []) + [cfg.width_second]
        pieces = []
        for w in widths:
            pieces.append(gfeat[:, offset:offset + w])
            offset += w
        g_second_pool = pieces[-1]
        g_second_out = self.second_gap.backward(g_second_pool)
        g_fused = self.second.backward(g_second_out)
        if self._join == "channels":
            g_branch = []
            offset = 0
            for shape in self._branch_out_shapes:
                g_branch.append(g_fused[:, :, offset:offset + shape[2]])
                offset += shape[2]
        else:
            g_branch = [g_fused[:, bi] for bi in range(nb)]
        if cfg.intermediate_fusion:
            for bi, g in enumerate(self.branch_gaps):
                g_branch[bi] = g_branch[bi] + g.backward(pieces[bi])
        input_grads = []
        for stage, gb in zip(self.branches, g_branch):
            input_grads.append(stage.backward(gb))
        grads = OrderedDict()
        for bi, stage in enumerate(self.branches):
            for name, arr in stage.named_grads():
                grads[f"branch{bi}.{name}"] = arr
        for name, arr in self.second.named_grads():
            grads[f"second.{name}"] = arr
        for name, arr in self.head.grads.items():
            grads[f"head.{name}"] = arr
        self.param_grads = grads
        if cfg.input_kind == FEATURE_VECTOR:
            return (input_grads[0][:, :, 0],)
        return tuple(input_grads)

    def trace_shapes(self, batch) -> list:
        self.forward(batch, train=False)
        return list(self.last_trace)

    def relu_kink_margin(self) -> float:
        """Smallest |pre-activation| any ReLU saw on the last forward.

        Finite-difference checks are only valid when this comfortably
        exceeds the probe step; callers can re-seed until it does.
        """
        margin = float("inf")
        for stage in [*self.branches, self.second]:
            for _, op in stage.steps:
                if isinstance(op, ReLU):
                    margin = min(margin, op.min_abs_input)
        return margin


def validate_pair(config: ModelConfig) -> None:
    """Dimensional compatibility under the fusion rules."""
    if config.input_kind == FEATURE_VECTOR:
        bad = [k for k in (config.first, config.second) if not k.emits_1d_map]
        if bad:
            raise ConfigError(
                f"feature-vector input supports only 1-D kinds on both levels; "
                f"got ({config.first.value}, {config.second.value})")
        return
    if not config.first.emits_1d_map:
        raise ConfigError(
            f"first-level {config.first.value} emits a 2-D map "
            f"[H x W x {config.width_first}], but late fusion joins 1-D branch maps "
            f"[T x {config.width_first}]; choose cnn1d, lstm, or clstm1d")


def build_model(config: ModelConfig, rng: Rng) -> Model:
    return Model(config, rng)


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(model: Model, path) -> None:
    """Directory checkpoint: params.json (order + shapes) and params.bin
    (little-endian float64, concatenated in the JSON's order)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    items = model.state_items()
    meta = {"format_version": CHECKPOINT_VERSION,
            "config": model.config.to_dict(),
            "params": [{"name": n, "shape": list(a.shape)} for n, a in items.items()]}
    (path / "params.json").write_text(json.dumps(meta, indent=1))
    with open(path / "params.bin", "wb") as fh:
        for arr in items.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expect_config: ModelConfig | None = None) -> Model:
    path = Path(path)
    meta_path, bin_path = path / "params.json", path / "params.bin"
    if not meta_path.exists() or not bin_path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint metadata: {e}") from None
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')}")
    config = ModelConfig.from_dict(meta["config"])
    if expect_config is not None and config != expect_config:
        raise CheckpointError(
            f"checkpoint was written for {config.label()} ({config.input_kind}), "
            f"refusing to load into {expect_config.label()} ({expect_config.input_kind})")
    raw = bin_path.read_bytes()
    expected = sum(int(np.prod(p["shape"])) for p in meta["params"])
    values = np.frombuffer(raw, dtype="<f8")
    if values.size != expected:
        raise CheckpointError(
            f"checkpoint holds {values.size} values, metadata promises {expected}")
    model = Model(config, Rng(0))
    items = model.state_items()
    names = [p["name"] for p in meta["params"]]
    if names != list(items.keys()):
        raise CheckpointError("checkpoint parameter names disagree with the model layout")
    offset = 0
    for entry in meta["params"]:
        arr = items[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise CheckpointError(
                f"shape mismatch for {entry['name']}: "
                f"checkpoint {entry['shape']} vs model {list(arr.shape)}")
        n = arr.size
        arr[...] = values[offset:offset + n].reshape(arr.shape)
        offset += n
    return model
