"""Network layers with hand-written forward and backward passes.

Layout conventions (time/space first, channels last):

* 1-D feature maps:  ``[batch, length, channels]``
* 2-D feature maps:  ``[batch, height, width, channels]``
* step sequences for recurrent convolutions: ``[batch, steps, *spatial, channels]``

Convolution is the cross-correlation form: the kernel slides over the
input without flipping, output position ``i`` reads input positions
``i*stride + m`` for ``m in [0, kernel)``, and the output spatial size is
``(n_in - kernel + 2*padding) / stride + 1``, which must be a positive
integer (`conv_out_len` enforces this).

Each layer class owns its parameters in ``self.params`` (name -> float64
array) and writes matching gradients into ``self.grads`` on ``backward``.
``forward`` caches whatever the adjoint needs; one ``backward`` per
``forward``.  Module-level functions (`conv_forward`, `lstm_forward`, ...)
expose the same math as pure calls for one-off use and testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBatchError, LabelError, ParameterError, ShapeError
from .tensor import Rng


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# specs and parameter containers


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a convolution: kernel/stride tuples are (K,) or (KH, KW)."""

    kernel: tuple
    stride: tuple
    in_channels: int
    out_channels: int
    padding: int = 0

    def __post_init__(self):
        k = tuple(int(v) for v in self.kernel)
        s = tuple(int(v) for v in self.stride)
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "stride", s)
        if len(k) not in (1, 2) or len(s) != len(k):
            raise ShapeError(f"kernel/stride must both be 1-D or 2-D, got {k}, {s}")
        if any(v < 1 for v in k + s) or self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("kernel, stride and channel counts must be >= 1")
        if self.padding < 0:
            raise ShapeError("padding must be >= 0")

    @property
    def ndim(self) -> int:
        return len(self.kernel)


@dataclass
class ConvParams:
    kernels: np.ndarray  # [*kernel, in_channels, out_channels]
    bias: np.ndarray  # [out_channels]

    @classmethod
    def init(cls, spec: ConvSpec, rng: Rng, scale: float | None = None) -> "ConvParams":
        fan_in = int(np.prod(spec.kernel)) * spec.in_channels
        if scale is None:
            scale = float(np.sqrt(2.0 / fan_in))
        shape = spec.kernel + (spec.in_channels, spec.out_channels)
        return cls(kernels=rng.normal(shape, scale), bias=np.zeros(spec.out_channels))


@dataclass
class LstmParams:
    """Gate weights act on the row-concatenation [x_t, h_prev]."""

    w_f: np.ndarray  # [(input_dim + units), units]
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray  # [units]
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    units: int

    @classmethod
    def init(cls, input_dim: int, units: int, rng: Rng) -> "LstmParams":
        scale = float(np.sqrt(1.0 / (input_dim + units)))
        w = lambda: rng.normal((input_dim + units, units), scale)
        b = lambda: np.zeros(units)
        return cls(w(), w(), w(), w(), b(), b(), b(), b(), units)

    @property
    def input_dim(self) -> int:
        return self.w_f.shape[0] - self.units


@dataclass
class ClstmParams:
    """Four gate convolutions over the channel-concatenation [x_t, h_prev].

    All gates share geometry; stride is 1 and padding preserves the
    spatial shape so [x_t, h_prev] stays well-formed at every step.
    """

    f: ConvParams
    i: ConvParams
    c: ConvParams
    o: ConvParams
    units: int

    @classmethod
    def init(cls, in_channels: int, units: int, kernel: tuple, rng: Rng) -> "ClstmParams":
        spec = ConvSpec(kernel=kernel, stride=(1,) * len(kernel),
                        in_channels=in_channels + units, out_channels=units)
        scale = float(np.sqrt(1.0 / (int(np.prod(kernel)) * (in_channels + units))))
        gate = lambda: ConvParams.init(spec, rng, scale=scale)
        return cls(gate(), gate(), gate(), gate(), units)


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.9

    @classmethod
    def init(cls, channels: int, epsilon: float = 1e-5, momentum: float = 0.9) -> "BatchNormParams":
        return cls(np.ones(channels), np.zeros(channels),
                   np.zeros(channels), np.ones(channels), epsilon, momentum)


def conv_out_len(n_in: int, kernel: int, stride: int, padding: int) -> int:
    """Output length (n_in - kernel + 2*padding)/stride + 1, validated."""
    span = n_in - kernel + 2 * padding
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"convolution does not tile: in={n_in}, kernel={kernel}, "
            f"stride={stride}, padding={padding}")
    return span // stride + 1


# ---------------------------------------------------------------------------
# im2col cores (asymmetric padding so recurrent "same" convolutions work)


def _im2col_1d(x, kernel, stride, pad_l, pad_r):
    b, n, c = x.shape
    xp = np.pad(x, ((0, 0), (pad_l, pad_r), (0, 0))) if pad_l or pad_r else x
    n_out = (n + pad_l + pad_r - kernel) // stride + 1
    starts = np.arange(n_out) * stride
    idx = starts[:, None] + np.arange(kernel)[None, :]
    cols = xp[:, idx, :]  # [b, n_out, kernel, c]
    return cols, (x.shape, xp.shape, starts, pad_l)


def _col2im_1d(dcols, meta):
    (b, n, c), xp_shape, starts, pad_l = meta
    kernel = dcols.shape[2]
    dxp = np.zeros(xp_shape)
    for m in range(kernel):
        dxp[:, starts + m, :] += dcols[:, :, m, :]
    return dxp[:, pad_l:pad_l + n, :]


def _im2col_2d(x, kernel, stride, pads):
    (kh, kw), (sh, sw) = kernel, stride
    (pt, pb), (pl, pr) = pads
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt or pb or pl or pr else x
    h_out = (h + pt + pb - kh) // sh + 1
    w_out = (w + pl + pr - kw) // sw + 1
    hs = np.arange(h_out) * sh
    ws = np.arange(w_out) * sw
    ih = hs[:, None] + np.arange(kh)[None, :]  # [h_out, kh]
    iw = ws[:, None] + np.arange(kw)[None, :]  # [w_out, kw]
    cols = xp[:, ih[:, None, :, None], iw[None, :, None, :], :]  # [b,h_out,w_out,kh,kw,c]
    return cols, (x.shape, xp.shape, hs, ws, pt, pl)


def _col2im_2d(dcols, meta):
    (b, h, w, c), xp_shape, hs, ws, pt, pl = meta
    kh, kw = dcols.shape[3], dcols.shape[4]
    dxp = np.zeros(xp_shape)
    for mh in range(kh):
        for mw in range(kw):
            dxp[:, (hs + mh)[:, None], (ws + mw)[None, :], :] += dcols[:, :, :, mh, mw, :]
    return dxp[:, pt:pt + h, pl:pl + w, :]


def _same_pads(kernel: int) -> tuple:
    # stride-1 shape-preserving zero padding; even kernels need one extra on the right
    return (kernel - 1) // 2, kernel - 1 - (kernel - 1) // 2


# ---------------------------------------------------------------------------
# layers


class Conv1D:
    """Strided 1-D convolution over [batch, length, in_channels]."""

    def __init__(self, spec: ConvSpec, rng: Rng | None = None,
                 params: ConvParams | None = None, init_scale: float | None = None):
        if spec.ndim != 1:
            raise ShapeError("Conv1D needs a 1-D ConvSpec")
        self.spec = spec
        self.p = params if params is not None else ConvParams.init(spec, rng, init_scale)
        self.params = {"kernels": self.p.kernels, "bias": self.p.bias}
        self.grads: dict = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        b, n, c = x.shape
        if c != self.spec.in_channels:
            raise ShapeError(f"expected {self.spec.in_channels} input channels, got {c}")
        (k,), (s,), p = self.spec.kernel, self.spec.stride, self.spec.padding
        n_out = conv_out_len(n, k, s, p)
        cols, meta = _im2col_1d(x, k, s, p, p)
        w = self.params["kernels"]
        y = cols.reshape(b * n_out, -1) @ w.reshape(-1, w.shape[-1])
        y = y.reshape(b, n_out, -1) + self.params["bias"]
        self._cache = (x, meta, n_out)
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, meta, n_out = self._cache
        b = x.shape[0]
        (k,), (s,), p = self.spec.kernel, self.spec.stride, self.spec.padding
        if grad_out.shape != (b, n_out, self.spec.out_channels):
            raise ShapeError(f"grad_out shape {grad_out.shape} does not match output")
        cols, _ = _im2col_1d(x, k, s, p, p)
        w = self.params["kernels"]
        g2 = grad_out.reshape(b * n_out, -1)
        gw = (cols.reshape(b * n_out, -1).T @ g2).reshape(w.shape)
        gb = grad_out.sum(axis=(0, 1))
        dcols = (g2 @ w.reshape(-1, w.shape[-1]).T).reshape(cols.shape)
        gx = _col2im_1d(dcols, meta)
        self.grads = {"kernels": gw, "bias": gb}
        return gx


class Conv2D:
    """Strided 2-D convolution over [batch, height, width, in_channels]."""

    def __init__(self, spec: ConvSpec, rng: Rng | None = None,
                 params: ConvParams | None = None, init_scale: float | None = None):
        if spec.ndim != 2:
            raise ShapeError("Conv2D needs a 2-D ConvSpec")
        self.spec = spec
        self.p = params if params is not None else ConvParams.init(spec, rng, init_scale)
        self.params = {"kernels": self.p.kernels, "bias": self.p.bias}
        self.grads: dict = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        b, h, w_in, c = x.shape
        if c != self.spec.in_channels:
            raise ShapeError(f"expected {self.spec.in_channels} input channels, got {c}")
        (kh, kw), (sh, sw), p = self.spec.kernel, self.spec.stride, self.spec.padding
        h_out = conv_out_len(h, kh, sh, p)
        w_out = conv_out_len(w_in, kw, sw, p)
        cols, meta = _im2col_2d(x, (kh, kw), (sh, sw), ((p, p), (p, p)))
        w = self.params["kernels"]
        y = cols.reshape(b * h_out * w_out, -1) @ w.reshape(-1, w.shape[-1])
        y = y.reshape(b, h_out, w_out, -1) + self.params["bias"]
        self._cache = (x, meta, (h_out, w_out))
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, meta, (h_out, w_out) = self._cache
        b = x.shape[0]
        (kh, kw), (sh, sw), p = self.spec.kernel, self.spec.stride, self.spec.padding
        if grad_out.shape != (b, h_out, w_out, self.spec.out_channels):
            raise ShapeError(f"grad_out shape {grad_out.shape} does not match output")
        cols, _ = _im2col_2d(x, (kh, kw), (sh, sw), ((p, p), (p, p)))
        w = self.params["kernels"]
        g2 = grad_out.reshape(b * h_out * w_out, -1)
        gw = (cols.reshape(g2.shape[0], -1).T @ g2).reshape(w.shape)
        gb = grad_out.sum(axis=(0, 1, 2))
        dcols = (g2 @ w.reshape(-1, w.shape[-1]).T).reshape(cols.shape)
        gx = _col2im_2d(dcols, meta)
        self.grads = {"kernels": gw, "bias": gb}
        return gx


class ReLU:
    """Elementwise max(0, x); the subgradient at exactly 0 is 0."""

    params: dict = {}
    grads: dict = {}

    def __init__(self):
        self._mask = None
        self.min_abs_input = float("inf")  # kink proximity of the last forward

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._mask = x > 0
        self.min_abs_input = float(np.abs(x).min()) if x.size else float("inf")
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * self._mask


class BatchNorm:
    """Per-channel normalization over all leading axes (channels last).

    Train mode uses batch statistics and updates the running ones as
    ``running = momentum * running + (1 - momentum) * batch``; inference
    mode reads the running statistics.
    """

    def __init__(self, channels: int, epsilon: float = 1e-5, momentum: float = 0.9):
        self.p = BatchNormParams.init(channels, epsilon, momentum)
        self.params = {"gamma": self.p.gamma, "beta": self.p.beta}
        self.grads: dict = {}
        self._cache = None

    @property
    def buffers(self) -> dict:
        return {"running_mean": self.p.running_mean, "running_var": self.p.running_var}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        axes = tuple(range(x.ndim - 1))
        if train:
            if x.shape[0] < 2:
                raise DegenerateBatchError("batch statistics need a batch of size >= 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.p.momentum
            self.p.running_mean[...] = m * self.p.running_mean + (1 - m) * mean
            self.p.running_var[...] = m * self.p.running_var + (1 - m) * var
        else:
            mean, var = self.p.running_mean, self.p.running_var
        inv_std = 1.0 / np.sqrt(var + self.p.epsilon)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train, x.shape)
        return self.p.gamma * xhat + self.p.beta

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xhat, inv_std, train, shape = self._cache
        axes = tuple(range(grad_out.ndim - 1))
        n = int(np.prod([shape[a] for a in axes]))
        self.grads = {"gamma": (grad_out * xhat).sum(axis=axes),
                      "beta": grad_out.sum(axis=axes)}
        dxhat = grad_out * self.p.gamma
        if not train:
            return dxhat * inv_std
        # batch statistics depend on x: fold their gradients back in
        return (inv_std / n) * (n * dxhat
                                - dxhat.sum(axis=axes)
                                - xhat * (dxhat * xhat).sum(axis=axes))


class LSTM:
    """Gate recurrence over [batch, time, input_dim]; emits the full hidden
    sequence [batch, time, units].  The final cell state is kept on
    ``self.final_cell`` after a forward pass."""

    def __init__(self, input_dim: int, units: int, rng: Rng | None = None,
                 params: LstmParams | None = None):
        self.input_dim = input_dim
        self.units = units
        self.p = params if params is not None else LstmParams.init(input_dim, units, rng)
        self.params = {"w_f": self.p.w_f, "w_i": self.p.w_i, "w_c": self.p.w_c,
                       "w_o": self.p.w_o, "b_f": self.p.b_f, "b_i": self.p.b_i,
                       "b_c": self.p.b_c, "b_o": self.p.b_o}
        self.grads: dict = {}
        self.final_cell = None
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False, h0=None, c0=None) -> np.ndarray:
        b, t, d = x.shape
        if d != self.input_dim:
            raise ShapeError(f"expected input_dim {self.input_dim}, got {d}")
        u = self.units
        h = np.zeros((b, u)) if h0 is None else h0
        c = np.zeros((b, u)) if c0 is None else c0
        steps = []
        out = np.empty((b, t, u))
        for ti in range(t):
            z = np.concatenate([x[:, ti, :], h], axis=1)
            f = sigmoid(z @ self.p.w_f + self.p.b_f)
            i = sigmoid(z @ self.p.w_i + self.p.b_i)
            g = np.tanh(z @ self.p.w_c + self.p.b_c)
            o = sigmoid(z @ self.p.w_o + self.p.b_o)
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h = o * tc
            steps.append((z, f, i, g, o, c, tc))
            c = c_new
            out[:, ti, :] = h
        self.final_cell = c
        self._cache = (x.shape, steps)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        (b, t, d), steps = self._cache
        u = self.units
        gw = {k: np.zeros_like(v) for k, v in self.params.items()}
        gx = np.empty((b, t, d))
        dh = np.zeros((b, u))
        dc = np.zeros((b, u))
        for ti in range(t - 1, -1, -1):
            z, f, i, g, o, c_prev, tc = steps[ti]
            dht = grad_out[:, ti, :] + dh
            do = dht * tc
            dc = dc + dht * o * (1.0 - tc * tc)
            df = dc * c_prev
            di = dc * g
            dg = dc * i
            dzf = df * f * (1 - f)
            dzi = di * i * (1 - i)
            dzg = dg * (1 - g * g)
            dzo = do * o * (1 - o)
            dc = dc * f
            gw["w_f"] += z.T @ dzf
            gw["w_i"] += z.T @ dzi
            gw["w_c"] += z.T @ dzg
            gw["w_o"] += z.T @ dzo
            gw["b_f"] += dzf.sum(axis=0)
            gw["b_i"] += dzi.sum(axis=0)
            gw["b_c"] += dzg.sum(axis=0)
            gw["b_o"] += dzo.sum(axis=0)
            dz = (dzf @ self.p.w_f.T + dzi @ self.p.w_i.T
                  + dzg @ self.p.w_c.T + dzo @ self.p.w_o.T)
            gx[:, ti, :] = dz[:, :d]
            dh = dz[:, d:]
        self.grads = gw
        return gx


class _ConvLstmBase:
    """Shared recurrence for the convolutional gate variants.

    The per-step gate transform is a stride-1, shape-preserving
    convolution of the channel-concatenation [x_t, h_prev]; subclasses
    supply the im2col/col2im pair for their spatial rank.
    """

    def __init__(self, in_channels: int, units: int, kernel: tuple,
                 rng: Rng | None = None, params: ClstmParams | None = None):
        self.in_channels = in_channels
        self.units = units
        self.kernel = tuple(int(k) for k in kernel)
        self.p = params if params is not None else ClstmParams.init(
            in_channels, units, self.kernel, rng)
        self.params = {}
        for name in ("f", "i", "c", "o"):
            gate: ConvParams = getattr(self.p, name)
            if gate.kernels.shape[:-2] != self.kernel:
                raise ShapeError("gate kernel geometry disagrees with layer kernel")
            self.params[f"{name}.kernels"] = gate.kernels
            self.params[f"{name}.bias"] = gate.bias
        self.grads: dict = {}
        self.hidden_seq = None
        self._cache = None

    # subclass hooks
    def _cols(self, cat):  # -> (cols2d [rows, k*c], meta, rows)
        raise NotImplementedError

    def _uncols(self, dcols_flat, meta, spatial):
        raise NotImplementedError

    def forward(self, x: np.ndarray, train: bool = False, h0=None, c0=None) -> np.ndarray:
        b, t = x.shape[0], x.shape[1]
        spatial = x.shape[2:-1]
        if x.shape[-1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} input channels, got {x.shape[-1]}")
        u = self.units
        h = np.zeros((b,) + spatial + (u,)) if h0 is None else h0
        c = np.zeros((b,) + spatial + (u,)) if c0 is None else c0
        w = {n: self.params[f"{n}.kernels"].reshape(-1, u) for n in "fico"}
        bias = {n: self.params[f"{n}.bias"] for n in "fico"}
        steps = []
        self.hidden_seq = np.empty((b, t) + spatial + (u,))
        for ti in range(t):
            cat = np.concatenate([x[:, ti], h], axis=-1)
            cols, meta = self._cols(cat)
            rows = cols.shape[0]
            pre = {n: (cols @ w[n] + bias[n]).reshape((b,) + spatial + (u,)) for n in "fico"}
            f = sigmoid(pre["f"])
            i = sigmoid(pre["i"])
            g = np.tanh(pre["c"])
            o = sigmoid(pre["o"])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h = o * tc
            steps.append((cat, meta, f, i, g, o, c, tc))
            c = c_new
            self.hidden_seq[:, ti] = h
        self._cache = (x.shape, spatial, steps)
        return h

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_shape, spatial, steps = self._cache
        b, t = x_shape[0], x_shape[1]
        u = self.units
        w = {n: self.params[f"{n}.kernels"].reshape(-1, u) for n in "fico"}
        gw = {k: np.zeros_like(v) for k, v in self.params.items()}
        gx = np.empty(x_shape)
        dh = grad_out.copy()  # gradient arrives at the final hidden map
        dc = np.zeros_like(grad_out)
        sum_axes = tuple(range(grad_out.ndim - 1))
        for ti in range(t - 1, -1, -1):
            cat, meta, f, i, g, o, c_prev, tc = steps[ti]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = {"f": (dc * c_prev) * f * (1 - f),
                  "i": (dc * g) * i * (1 - i),
                  "c": (dc * i) * (1 - g * g),
                  "o": do * o * (1 - o)}
            dc = dc * f
            cols, _ = self._cols(cat)
            dcols_flat = np.zeros_like(cols)
            for n in "fico":
                dzn = dz[n].reshape(cols.shape[0], u)
                gw[f"{n}.kernels"] += (cols.T @ dzn).reshape(gw[f"{n}.kernels"].shape)
                gw[f"{n}.bias"] += dz[n].sum(axis=sum_axes)
                dcols_flat += dzn @ w[n].T
            dcat = self._uncols(dcols_flat, meta, spatial)
            gx[:, ti] = dcat[..., :self.in_channels]
            dh = dcat[..., self.in_channels:]
        self.grads = gw
        return gx


class ConvLSTM1D(_ConvLstmBase):
    """Convolutional gate recurrence over [batch, steps, length, channels];
    returns the final hidden map [batch, length, units] (full sequence on
    ``self.hidden_seq``)."""

    def _cols(self, cat):
        (k,) = self.kernel
        pl, pr = _same_pads(k)
        cols, meta = _im2col_1d(cat, k, 1, pl, pr)
        b, n_out = cols.shape[0], cols.shape[1]
        return cols.reshape(b * n_out, -1), meta

    def _uncols(self, dcols_flat, meta, spatial):
        (k,) = self.kernel
        b = meta[0][0]
        dcols = dcols_flat.reshape(b, spatial[0], k, -1)
        return _col2im_1d(dcols, meta)


class ConvLSTM2D(_ConvLstmBase):
    """Convolutional gate recurrence over [batch, steps, height, width, channels];
    returns the final hidden map [batch, height, width, units]."""

    def _cols(self, cat):
        kh, kw = self.kernel
        pads = (_same_pads(kh), _same_pads(kw))
        cols, meta = _im2col_2d(cat, (kh, kw), (1, 1), pads)
        b, ho, wo = cols.shape[0], cols.shape[1], cols.shape[2]
        return cols.reshape(b * ho * wo, -1), meta

    def _uncols(self, dcols_flat, meta, spatial):
        kh, kw = self.kernel
        b = meta[0][0]
        dcols = dcols_flat.reshape(b, spatial[0], spatial[1], kh, kw, -1)
        return _col2im_2d(dcols, meta)


class GlobalAveragePool:
    """Mean over every spatial axis, collapsing [batch, *spatial, C] -> [batch, C]."""

    params: dict = {}
    grads: dict = {}

    def __init__(self):
        self._shape = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim < 3 or int(np.prod(x.shape[1:-1])) < 1:
            raise ShapeError(f"need [batch, *spatial, channels] with spatial extent, got {x.shape}")
        self._shape = x.shape
        return x.mean(axis=tuple(range(1, x.ndim - 1)))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        shape = self._shape
        spatial = int(np.prod(shape[1:-1]))
        expand = (shape[0],) + (1,) * (len(shape) - 2) + (shape[-1],)
        return np.broadcast_to(grad_out.reshape(expand) / spatial, shape).copy()


class Dense:
    """Affine map [batch, in_dim] -> [batch, out_dim]."""

    def __init__(self, in_dim: int, out_dim: int, rng: Rng | None = None,
                 w: np.ndarray | None = None, b: np.ndarray | None = None,
                 init_scale: float | None = None):
        if w is None:
            scale = init_scale if init_scale is not None else float(np.sqrt(2.0 / in_dim))
            w = rng.normal((in_dim, out_dim), scale)
        self.params = {"w": w, "b": b if b is not None else np.zeros(out_dim)}
        self.grads: dict = {}
        self._x = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.params["w"].shape[0]:
            raise ShapeError(f"dense expects [batch, {self.params['w'].shape[0]}], got {x.shape}")
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.grads = {"w": self._x.T @ grad_out, "b": grad_out.sum(axis=0)}
        return grad_out @ self.params["w"].T


# ---------------------------------------------------------------------------
# pure functional surface


def conv_forward(x: np.ndarray, spec: ConvSpec, params: ConvParams) -> np.ndarray:
    """One-off convolution; accepts unbatched/unchanneled inputs for convenience."""
    x, squeeze = _lift_conv_input(x, spec)
    layer = (Conv1D if spec.ndim == 1 else Conv2D)(spec, params=params)
    return _drop_conv_dims(layer.forward(x), squeeze)


def conv_backward(x: np.ndarray, spec: ConvSpec, params: ConvParams,
                  grad_out: np.ndarray):
    """Gradients of a scalar loss wrt input, kernels and bias."""
    x, squeeze = _lift_conv_input(x, spec)
    layer = (Conv1D if spec.ndim == 1 else Conv2D)(spec, params=params)
    y = layer.forward(x)
    g = grad_out.reshape(y.shape)
    gx = layer.backward(g)
    return _drop_conv_dims(gx, squeeze), ConvParams(layer.grads["kernels"], layer.grads["bias"])


def _lift_conv_input(x, spec):
    x = np.asarray(x, dtype=np.float64)
    spatial = spec.ndim
    squeeze = []
    if x.ndim == spatial:  # no channel axis
        x = x[..., None]
        squeeze.append(-1)
    if x.ndim == spatial + 1:  # no batch axis
        x = x[None]
        squeeze.append(0)
    if x.ndim != spatial + 2:
        raise ShapeError(f"cannot interpret input of shape {x.shape} for {spatial}-D convolution")
    return x, squeeze


def _drop_conv_dims(y, squeeze):
    if 0 in squeeze:
        y = y[0]
    if -1 in squeeze and y.shape[-1] == 1:
        y = y[..., 0]
    return y


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def batchnorm_forward(x: np.ndarray, params: BatchNormParams, mode: str = "train") -> np.ndarray:
    if mode not in ("train", "infer"):
        raise ParameterError(f"mode must be 'train' or 'infer', got {mode!r}")
    layer = BatchNorm.__new__(BatchNorm)
    layer.p = params
    layer.params = {"gamma": params.gamma, "beta": params.beta}
    layer.grads = {}
    layer._cache = None
    return layer.forward(x, train=(mode == "train"))


def batchnorm_backward(x: np.ndarray, params: BatchNormParams, grad_out: np.ndarray,
                       mode: str = "train"):
    """(grad_input, grad_gamma, grad_beta) for the given input batch."""
    layer = BatchNorm.__new__(BatchNorm)
    layer.p = params
    layer.params = {"gamma": params.gamma, "beta": params.beta}
    layer.grads = {}
    layer._cache = None
    layer.forward(x, train=(mode == "train"))
    gx = layer.backward(grad_out)
    return gx, layer.grads["gamma"], layer.grads["beta"]


def lstm_forward(sequence: np.ndarray, params: LstmParams, h0=None, c0=None):
    """(hidden sequence [**batch**, T, units], final cell state).

    A 2-D input [T, input_dim] is treated as a single unbatched sequence.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    unbatched = seq.ndim == 2
    if unbatched:
        seq = seq[None]
    layer = LSTM(params.input_dim, params.units, params=params)
    out = layer.forward(seq)
    c = layer.final_cell
    return (out[0], c[0]) if unbatched else (out, c)


def clstm_forward(sequence: np.ndarray, params: ClstmParams, h0=None, c0=None):
    """(final hidden map, full hidden sequence) for a step sequence.

    Unbatched inputs [T, *spatial, C] are lifted to batch size 1.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    kernel = params.f.kernels.shape[:-2]
    in_channels = params.f.kernels.shape[-2] - params.units
    unbatched = seq.ndim == len(kernel) + 2
    if unbatched:
        seq = seq[None]
    cls = ConvLSTM1D if len(kernel) == 1 else ConvLSTM2D
    layer = cls(in_channels, params.units, kernel, params=params)
    h = layer.forward(seq)
    hs = layer.hidden_seq
    return (h[0], hs[0]) if unbatched else (h, hs)


def gap(x: np.ndarray) -> np.ndarray:
    """Per-channel mean over all spatial positions: [L, C] or [H, W, C] -> [C]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ShapeError(f"expected [L, C] or [H, W, C], got shape {x.shape}")
    return GlobalAveragePool().forward(x[None])[0]


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    unbatched = x.ndim == 1
    if unbatched:
        x = x[None]
    layer = Dense(w.shape[0], w.shape[1], w=w, b=b)
    y = layer.forward(x)
    return y[0] if unbatched else y


def softmax_cross_entropy(logits: np.ndarray, one_hot: np.ndarray):
    """(mean loss, probabilities, grad wrt logits).

    ``grad`` is probabilities - one_hot, the per-sample gradient of the
    per-sample loss; divide by the batch size for the mean-loss gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    one_hot = np.asarray(one_hot, dtype=np.float64)
    unbatched = logits.ndim == 1
    if unbatched:
        logits, one_hot = logits[None], one_hot[None]
    if logits.shape != one_hot.shape:
        raise ShapeError(f"logits {logits.shape} vs labels {one_hot.shape}")
    if not (np.all((one_hot == 0.0) | (one_hot == 1.0))
            and np.all(one_hot.sum(axis=1) == 1.0)):
        raise LabelError("labels must be exact one-hot rows")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    probs = np.exp(log_probs)
    losses = -(one_hot * log_probs).sum(axis=1)
    grad = probs - one_hot
    loss = float(losses.mean())
    if unbatched:
        return loss, probs[0], grad[0]
    return loss, probs, grad


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise LabelError(f"labels must lie in [0, {class_count})")
    out = np.zeros((len(labels), class_count))
    out[np.arange(len(labels)), labels] = 1.0
    return out
