"""Dense float64 tensors and seeded randomness.

Every value flowing through the engine is a numpy ``float64`` ndarray in
C (row-major) memory order; "tensor" below always means exactly that.
The helpers here add the shape validation and the deterministic random
stream the rest of the package builds on.

Randomness is produced by **splitmix64 in counter mode**: draw ``n`` of a
stream seeded with ``s`` is ``mix64(s + n * 0x9E3779B97F4A7C15)`` where
``mix64`` is the standard splitmix64 finalizer (two xor-shift/multiply
rounds plus a final xor-shift).  The generator is a pure function of
(seed, draw index), so the stream is bit-identical on every platform and
trivially reproducible in any language.  Normal deviates come from the
Box-Muller transform applied to consecutive uniform draws.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_NEG53 = 2.0 ** -53


class Rng:
    """Deterministic random stream (splitmix64 counter mode).

    Identical seeds yield bit-identical streams regardless of how draws
    are grouped into calls: the stream position advances by exactly the
    number of 64-bit words consumed.
    """

    def __init__(self, seed: int):
        self.seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._drawn = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` words of the 64-bit stream."""
        with np.errstate(over="ignore"):
            idx = np.uint64(self._drawn + 1) + np.arange(n, dtype=np.uint64)
            self._drawn += n
            z = self.seed + _GAMMA * idx
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1), each from the top 53 bits of one word."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        """Standard-normal tensor of ``shape`` scaled by ``scale``.

        Box-Muller on pairs of uniforms; consumes ``2 * ceil(size / 2)``
        stream words.
        """
        shape = _checked_shape(shape)
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        r = np.sqrt(-2.0 * np.log(1.0 - u[:m]))  # 1-u in (0,1]: log never sees 0
        theta = (2.0 * math.pi) * u[m:]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (scale * z).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) via stable argsort of uniforms."""
        return np.argsort(self.uniform(n), kind="stable")

    def derive(self, *tags: int) -> "Rng":
        """Independent child stream keyed by integer tags (for per-run seeds)."""
        child = Rng(self.seed)
        for t in tags:
            with np.errstate(over="ignore"):
                word = Rng(child.seed + np.uint64(int(t) & 0xFFFFFFFFFFFFFFFF)).raw(1)[0]
            child = Rng(int(word))
        return child


def _checked_shape(shape) -> tuple:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ShapeError("shape must have at least one dimension")
    if any(d < 1 for d in shape):
        raise ShapeError(f"all dimensions must be >= 1, got {shape}")
    return shape


def zeros(shape) -> np.ndarray:
    return np.zeros(_checked_shape(shape), dtype=np.float64)


def ones(shape) -> np.ndarray:
    return np.ones(_checked_shape(shape), dtype=np.float64)


def randn(shape, rng: Rng, scale: float = 1.0) -> np.ndarray:
    """I.i.d. normal tensor, mean 0, standard deviation ``scale``."""
    if not scale > 0:
        raise ParameterError(f"scale must be > 0, got {scale}")
    return rng.normal(shape, scale)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def elementwise_map(t: np.ndarray, f: Callable[[float], float]) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    out = np.array([f(v) for v in t.ravel()], dtype=np.float64)
    return out.reshape(t.shape)


def elementwise_zip(a: np.ndarray, b: np.ndarray, f: Callable[[float, float], float]) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"zip needs equal shapes, got {a.shape} vs {b.shape}")
    out = np.array([f(x, y) for x, y in zip(a.ravel(), b.ravel())], dtype=np.float64)
    return out.reshape(a.shape)


def concat(tensors: Sequence[np.ndarray], axis: int) -> np.ndarray:
    if len(tensors) == 0:
        raise ShapeError("concat needs at least one tensor")
    arrs = [np.asarray(t, dtype=np.float64) for t in tensors]
    nd = arrs[0].ndim
    if not 0 <= axis < nd:
        raise ShapeError(f"axis {axis} out of bounds for {nd}-D tensors")
    ref = list(arrs[0].shape)
    for a in arrs[1:]:
        if a.ndim != nd:
            raise ShapeError("concat operands must share rank")
        other = list(a.shape)
        other[axis] = ref[axis]
        if other != ref:
            raise ShapeError(f"incompatible shapes for concat: {arrs[0].shape} vs {a.shape}")
    return np.concatenate(arrs, axis=axis)


def slice_axis(t: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if not 0 <= axis < t.ndim:
        raise ShapeError(f"axis {axis} out of bounds for {t.ndim}-D tensor")
    if not (0 <= start < stop <= t.shape[axis]):
        raise ShapeError(f"slice [{start}:{stop}) invalid for axis of size {t.shape[axis]}")
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, stop)
    return t[tuple(index)].copy()


def reshape(t: np.ndarray, shape) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    shape = _checked_shape(shape)
    if int(np.prod(shape)) != t.size:
        raise ShapeError(f"cannot reshape {t.size} elements into {shape}")
    return np.ascontiguousarray(t.reshape(shape))


def reduce_mean(t: np.ndarray, axes: Iterable[int] | int | None = None):
    """Mean over ``axes`` (all axes when None; scalar result in that case)."""
    t = np.asarray(t, dtype=np.float64)
    if axes is None:
        return float(t.mean())
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    axes = tuple(int(a) for a in axes)
    for a in axes:
        if not 0 <= a < t.ndim:
            raise ShapeError(f"axis {a} out of bounds for {t.ndim}-D tensor")
    out = t.mean(axis=axes)
    return float(out) if out.ndim == 0 else out
