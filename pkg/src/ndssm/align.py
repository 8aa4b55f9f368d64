"""Alignment padding so the flattened token count divides the scan chunk.

Each spatial axis is rounded up to a rank-dependent multiple (64 for 1D, 8
per axis for 2D, 4 per axis for 3D), so the token count is always a multiple
of 64. Padding is appended at the trailing edge only, which makes trimming a
pure suffix removal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_tensor, pad_trailing, trim_trailing

_MULTIPLES = {1: 64, 2: 8, 3: 4}
TOKEN_MULTIPLE = 64


@dataclass(frozen=True)
class PadRecord:
    original_shape: tuple
    padded_shape: tuple
    per_axis_amount: tuple
    mode_used: tuple

    @property
    def tokens(self) -> int:
        return math.prod(self.padded_shape)

    @property
    def unchanged(self) -> bool:
        return self.original_shape == self.padded_shape


def multiple_for(rank: int) -> int:
    try:
        return _MULTIPLES[rank]
    except KeyError:
        raise ValueError(f"spatial rank must be 1, 2 or 3, got {rank}") from None


def plan(spatial_shape) -> PadRecord:
    """Compute the padding record for a spatial shape without touching data."""
    spatial_shape = tuple(int(d) for d in spatial_shape)
    m = multiple_for(len(spatial_shape))
    if any(d < 1 for d in spatial_shape):
        raise ShapeError(f"spatial extents must be >= 1, got {spatial_shape}")
    amounts = tuple(-d % m for d in spatial_shape)
    padded = tuple(d + a for d, a in zip(spatial_shape, amounts))
    modes = tuple("reflect" if a <= d - 1 else "replicate" for d, a in zip(spatial_shape, amounts))
    return PadRecord(spatial_shape, padded, amounts, modes)


def align_pad(x, spatial_rank: int) -> tuple:
    """Pad ``x`` of shape ``(B, C, *spatial)``; returns ``(padded, record)``."""
    x = as_tensor(x)
    if x.ndim != spatial_rank + 2:
        raise ShapeError(f"expected (B, C) + {spatial_rank} spatial axes, got shape {x.shape}")
    rec = plan(x.shape[2:])
    out = x
    for i, (amount, mode) in enumerate(zip(rec.per_axis_amount, rec.mode_used)):
        if amount:
            out = pad_trailing(out, 2 + i, amount, mode)
    return out, rec


def align_trim(y, rec: PadRecord) -> np.ndarray:
    y = as_tensor(y)
    if tuple(y.shape[2:]) != rec.padded_shape:
        raise ShapeError(f"spatial shape {y.shape[2:]} does not match padded shape {rec.padded_shape}")
    for i, amount in enumerate(rec.per_axis_amount):
        if amount:
            y = trim_trailing(y, 2 + i, amount)
    return y
