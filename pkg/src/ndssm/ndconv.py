"""Dimension-adaptive convolution over 1, 2 or 3 spatial axes.

Inputs are laid out ``(B, C, D1[, D2[, D3]])``. The conv ops are valid-mode
cross-correlations with per-axis stride; ``same_padding`` computes the
zero padding that makes the output extent ``ceil(D / s)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, activation, as_tensor


@dataclass(frozen=True, eq=False)
class ConvSpec:
    """Kernel, stride and parameters of one N-D convolution.

    Depthwise weights have shape ``(C, *kernel)``; dense weights have shape
    ``(C_out, C, *kernel)``. ``bias`` has one entry per output channel.
    """

    kernel: tuple
    stride: tuple
    channels: int
    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    depthwise: bool = True

    def __post_init__(self):
        kernel = tuple(int(k) for k in self.kernel)
        stride = tuple(int(s) for s in self.stride)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "weight", as_tensor(self.weight))
        if self.bias is not None:
            object.__setattr__(self, "bias", as_tensor(self.bias))
        self.validate()

    @property
    def rank(self) -> int:
        return len(self.kernel)

    @property
    def out_channels(self) -> int:
        return self.channels if self.depthwise else self.weight.shape[0]

    def validate(self) -> None:
        if self.rank not in (1, 2, 3):
            raise ShapeError(f"kernel rank must be 1, 2 or 3, got {self.rank}")
        if len(self.stride) != self.rank:
            raise ShapeError(f"stride {self.stride} does not match kernel {self.kernel}")
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ShapeError("kernel extents and strides must be >= 1")
        if self.depthwise:
            expected = (self.channels, *self.kernel)
        else:
            expected = (self.weight.shape[0], self.channels, *self.kernel)
        if self.weight.shape != expected:
            raise ShapeError(f"weight shape {self.weight.shape}, expected {expected}")
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise ShapeError(f"bias shape {self.bias.shape}, expected ({self.out_channels},)")

    @classmethod
    def identity(cls, channels: int, rank: int, dtype=np.float32) -> "ConvSpec":
        """Depthwise 1x..x1 kernel of ones; convolution returns its input."""
        kernel = (1,) * rank
        return cls(kernel, kernel, channels, np.ones((channels, *kernel), dtype=dtype))


def _conv(x, spec: ConvSpec, rank: int) -> np.ndarray:
    x = as_tensor(x)
    if spec.rank != rank:
        raise ShapeError(f"conv{rank}d needs a rank-{rank} kernel, got {spec.kernel}")
    if x.ndim != rank + 2:
        raise ShapeError(f"conv{rank}d expects (B, C, {rank} spatial) input, got {x.shape}")
    if x.shape[1] != spec.channels:
        raise ShapeError(f"input has {x.shape[1]} channels, spec expects {spec.channels}")
    spatial = x.shape[2:]
    if any(d < k for d, k in zip(spatial, spec.kernel)):
        raise ShapeError(f"spatial extents {spatial} smaller than kernel {spec.kernel}: empty output")

    dtype = x.dtype
    w = spec.weight.astype(dtype, copy=False)
    axes = tuple(range(2, 2 + rank))
    # (B, C, *out, *kernel) after striding the window origins
    windows = sliding_window_view(x, spec.kernel, axis=axes)
    windows = windows[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in spec.stride)]

    letters = "xyz"[:rank]
    klet = "ijk"[:rank]
    if spec.depthwise:
        y = np.einsum(f"bc{letters}{klet},c{klet}->bc{letters}", windows, w)
    else:
        y = np.einsum(f"bc{letters}{klet},oc{klet}->bo{letters}", windows, w)
    if spec.bias is not None:
        y = y + spec.bias.astype(dtype, copy=False).reshape((-1,) + (1,) * rank)
    return np.ascontiguousarray(y, dtype=dtype)


def conv1d(x, spec: ConvSpec) -> np.ndarray:
    """Valid-mode convolution of ``(B, C, D1)`` along D1."""
    return _conv(x, spec, 1)


def conv2d(x, spec: ConvSpec) -> np.ndarray:
    """Valid-mode convolution of ``(B, C, D1, D2)`` along D1 and D2."""
    return _conv(x, spec, 2)


def conv3d(x, spec: ConvSpec) -> np.ndarray:
    """Valid-mode convolution of ``(B, C, D1, D2, D3)`` along all three axes."""
    return _conv(x, spec, 3)


CONV_BY_RANK = {1: conv1d, 2: conv2d, 3: conv3d}


def same_padding(extent: int, kernel: int, stride: int) -> tuple:
    """Return ``(left, right)`` zero padding giving output extent ``ceil(extent / stride)``.

    The odd element of an asymmetric total goes on the right.
    """
    if extent < 1 or kernel < 1 or stride < 1:
        raise ValueError(f"extent, kernel and stride must be >= 1, got {extent}, {kernel}, {stride}")
    total = max(0, (math.ceil(extent / stride) - 1) * stride + kernel - extent)
    left = total // 2
    return left, total - left


def pad_same(x, kernel: Sequence[int], stride: Sequence[int]) -> np.ndarray:
    x = as_tensor(x)
    widths = [(0, 0), (0, 0)]
    for d, k, s in zip(x.shape[2:], kernel, stride):
        widths.append(same_padding(d, k, s))
    return np.ascontiguousarray(np.pad(x, widths))


def directional_path(x, spec: ConvSpec, act: str = "gelu") -> np.ndarray:
    """``act(W * x + b)`` with same padding and the rank-matched convolution."""
    x = as_tensor(x)
    if x.ndim - 2 != spec.rank:
        raise ShapeError(f"input {x.shape} has spatial rank {x.ndim - 2}, spec has rank {spec.rank}")
    padded = pad_same(x, spec.kernel, spec.stride)
    return activation(act)(CONV_BY_RANK[spec.rank](padded, spec))
