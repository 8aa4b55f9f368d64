"""Dense N-D tensor primitives.

Tensors are plain contiguous ``numpy.ndarray`` objects of rank 1 to 5 with a
floating element type (``float32`` by default, ``float64`` for oracle work).
Every function here returns a fresh contiguous array and never mutates its
inputs.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float32
MAX_RANK = 5
PAD_MODES = ("reflect", "replicate", "zero")


class ShapeError(ValueError):
    """Raised when tensor extents do not satisfy an operation's contract."""


class AxisError(ShapeError, IndexError):
    """Raised for an axis index outside ``[0, rank)``."""


def as_tensor(data, dtype=None) -> np.ndarray:
    """Validate ``data`` as a tensor and return it as a contiguous float array.

    Integer and boolean inputs are promoted to ``DEFAULT_DTYPE``. Float inputs
    keep their precision unless ``dtype`` is given.
    """
    arr = np.asarray(data)
    if dtype is None:
        dtype = arr.dtype if arr.dtype.kind == "f" else DEFAULT_DTYPE
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ShapeError(f"tensor rank must be in [1, {MAX_RANK}], got {arr.ndim}")
    if any(n < 1 for n in arr.shape):
        raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
    return np.ascontiguousarray(arr, dtype=dtype)


def _axis(t: np.ndarray, axis: int) -> int:
    if not -t.ndim <= axis < t.ndim:
        raise AxisError(f"axis {axis} out of range for rank {t.ndim}")
    return axis % t.ndim


def reshape(t, new_shape: Sequence[int]) -> np.ndarray:
    t = as_tensor(t)
    new_shape = tuple(int(n) for n in new_shape)
    if math.prod(new_shape) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} ({t.size} elements) to {new_shape}")
    return as_tensor(t.reshape(new_shape))


def permute(t, axes: Sequence[int]) -> np.ndarray:
    t = as_tensor(t)
    if sorted(_axis(t, a) for a in axes) != list(range(t.ndim)):
        raise AxisError(f"{tuple(axes)} is not a permutation of the axes of rank {t.ndim}")
    return np.ascontiguousarray(np.transpose(t, axes))


def flip(t, axis: int) -> np.ndarray:
    """Reverse element order along ``axis``."""
    t = as_tensor(t)
    return np.ascontiguousarray(np.flip(t, _axis(t, axis)))


def pad_trailing(t, axis: int, amount: int, mode: str = "reflect") -> np.ndarray:
    """Append ``amount`` elements to the end of ``axis``.

    ``reflect`` mirrors without repeating the edge element and therefore needs
    ``amount <= extent - 1``; there is no silent fallback here.
    """
    t = as_tensor(t)
    axis = _axis(t, axis)
    if mode not in PAD_MODES:
        raise ValueError(f"unknown pad mode {mode!r}; expected one of {PAD_MODES}")
    if amount < 0:
        raise ShapeError(f"pad amount must be >= 0, got {amount}")
    if amount == 0:
        return t.copy()
    extent = t.shape[axis]
    if mode == "reflect" and amount > extent - 1:
        raise ShapeError(
            f"reflect padding of {amount} needs extent > {amount}, axis {axis} has {extent}"
        )
    widths = [(0, 0)] * t.ndim
    widths[axis] = (0, amount)
    np_mode = {"reflect": "reflect", "replicate": "edge", "zero": "constant"}[mode]
    return np.ascontiguousarray(np.pad(t, widths, mode=np_mode))


def trim_trailing(t, axis: int, amount: int) -> np.ndarray:
    """Drop the last ``amount`` elements along ``axis``."""
    t = as_tensor(t)
    axis = _axis(t, axis)
    if not 0 <= amount < t.shape[axis]:
        raise ShapeError(
            f"cannot trim {amount} from axis {axis} of extent {t.shape[axis]}"
        )
    index = [slice(None)] * t.ndim
    index[axis] = slice(0, t.shape[axis] - amount)
    return np.ascontiguousarray(t[tuple(index)])


def matmul(a, b) -> np.ndarray:
    """Matrix product ``a @ b`` with ``a`` optionally carrying batch axes."""
    a = as_tensor(a)
    b = as_tensor(b)
    if b.ndim != 2 or a.ndim < 2:
        raise ShapeError(f"matmul expects a of rank >= 2 and b of rank 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    dtype = np.result_type(a, b)
    return np.ascontiguousarray(np.matmul(a.astype(dtype, copy=False), b.astype(dtype, copy=False)))


def add(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch in add: {a.shape} vs {b.shape}")
    return a + b


def mul(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch in mul: {a.shape} vs {b.shape}")
    return a * b


def exp(t) -> np.ndarray:
    return np.exp(as_tensor(t))


def softplus(t) -> np.ndarray:
    """``log(1 + exp(x))`` evaluated without overflow."""
    t = as_tensor(t)
    return np.logaddexp(t.dtype.type(0), t)


def gelu(t) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with Phi the standard normal CDF via erf."""
    t = as_tensor(t)
    half = t.dtype.type(0.5)
    return half * t * (1 + erf(t / t.dtype.type(math.sqrt(2.0))))


def silu(t) -> np.ndarray:
    t = as_tensor(t)
    return t / (1 + np.exp(-t))


def rmsnorm(t, gain, eps: float = 1e-5) -> np.ndarray:
    """Normalise each trailing-axis vector to unit RMS, then scale by ``gain``."""
    t = as_tensor(t)
    gain = as_tensor(gain, dtype=t.dtype)
    if gain.shape != (t.shape[-1],):
        raise ShapeError(f"gain shape {gain.shape} does not match last extent {t.shape[-1]}")
    ms = np.mean(np.square(t), axis=-1, keepdims=True)
    return t / np.sqrt(ms + t.dtype.type(eps)) * gain


ACTIVATIONS = {"gelu": gelu, "silu": silu}


def activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}") from None
