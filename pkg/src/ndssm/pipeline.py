"""Bidirectional N-D model: pad, flatten, map channels, scan both ways, fuse, restore.

For an input ``(B, c_in, *spatial)`` the forward pass is::

    padded, rec = align_pad(x)
    tokens      = flatten spatial axes row-major -> (B, L, c_in)
    mapped      = tokens @ fc_in + bias
    h_fwd       = core_forward(mapped)
    h_bwd       = flip(core_backward(flip(mapped)))      # bidirectional only
    out         = (h_fwd + h_bwd) @ fc_out + bias
    result      = align_trim(unflatten(out), rec)

When a premix pair is configured, each direction first applies its own
same-padded depthwise convolution plus GELU to the padded input, and the
backward core consumes the backward premix output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .align import align_pad, align_trim
from .ndconv import ConvSpec, directional_path
from .ssd import Mamba2Config, Mamba2Weights, mamba2_forward
from .tensor import ShapeError, as_tensor, flip


@dataclass(frozen=True, eq=False)
class BiMamba2NdModel:
    c_in: int
    c_out: int
    spatial_rank: int
    cfg: Mamba2Config
    fc_in_weight: np.ndarray   # (c_in, d_model)
    fc_in_bias: np.ndarray     # (d_model,)
    fc_out_weight: np.ndarray  # (d_model, c_out)
    fc_out_bias: np.ndarray    # (c_out,)
    core_forward: Mamba2Weights
    core_backward: Optional[Mamba2Weights] = None
    premix: Optional[tuple] = None  # (forward ConvSpec, backward ConvSpec)

    def __post_init__(self):
        self.validate()

    @property
    def bidirectional(self) -> bool:
        return self.core_backward is not None

    def validate(self) -> None:
        if self.spatial_rank not in (1, 2, 3):
            raise ValueError(f"spatial_rank must be 1, 2 or 3, got {self.spatial_rank}")
        d = self.cfg.d_model
        expected = {
            "fc_in_weight": (self.c_in, d),
            "fc_in_bias": (d,),
            "fc_out_weight": (d, self.c_out),
            "fc_out_bias": (self.c_out,),
        }
        for name, shape in expected.items():
            actual = tuple(getattr(self, name).shape)
            if actual != shape:
                raise ShapeError(f"{name} has shape {actual}, expected {shape}")
        self.core_forward.validate(self.cfg)
        if self.core_backward is not None:
            self.core_backward.validate(self.cfg)
        if self.premix is not None:
            for spec in self.premix:
                if not spec.depthwise or spec.channels != self.c_in or spec.rank != self.spatial_rank:
                    raise ShapeError(
                        f"premix must be depthwise over {self.c_in} channels with rank {self.spatial_rank}"
                    )
                if any(s != 1 for s in spec.stride):
                    raise ShapeError("premix convolutions must use stride 1 to preserve extents")
            if len(self.premix) != 2:
                raise ValueError("premix needs exactly one forward and one backward ConvSpec")

    def tensors(self) -> dict:
        """All parameters keyed by dotted name."""
        out = {
            "fc_in.weight": self.fc_in_weight,
            "fc_in.bias": self.fc_in_bias,
            "fc_out.weight": self.fc_out_weight,
            "fc_out.bias": self.fc_out_bias,
        }
        cores = {"core_forward": self.core_forward, "core_backward": self.core_backward}
        for prefix, core in cores.items():
            if core is not None:
                out.update({f"{prefix}.{k}": v for k, v in core.tensors().items()})
        if self.premix is not None:
            for prefix, spec in zip(("premix.forward", "premix.backward"), self.premix):
                out[f"{prefix}.weight"] = spec.weight
                if spec.bias is not None:
                    out[f"{prefix}.bias"] = spec.bias
        return out

    def swapped(self) -> "BiMamba2NdModel":
        """The same model with forward and backward cores (and premix) exchanged."""
        if not self.bidirectional:
            raise ValueError("only a bidirectional model can swap its cores")
        premix = None if self.premix is None else self.premix[::-1]
        return BiMamba2NdModel(
            self.c_in, self.c_out, self.spatial_rank, self.cfg,
            self.fc_in_weight, self.fc_in_bias, self.fc_out_weight, self.fc_out_bias,
            self.core_backward, self.core_forward, premix,
        )


def flip_tokens(h) -> np.ndarray:
    """Reverse the token axis of ``(B, L, d)``."""
    h = as_tensor(h)
    if h.ndim != 3:
        raise ShapeError(f"expected (B, L, d), got {h.shape}")
    return flip(h, 1)


def fuse(hf, hb) -> np.ndarray:
    hf, hb = as_tensor(hf), as_tensor(hb)
    if hf.shape != hb.shape:
        raise ShapeError(f"cannot fuse {hf.shape} with {hb.shape}")
    return hf + hb


def _to_tokens(x: np.ndarray) -> np.ndarray:
    b, c = x.shape[:2]
    return np.ascontiguousarray(x.reshape(b, c, -1).transpose(0, 2, 1))


def _linear(x, weight, bias) -> np.ndarray:
    dtype = x.dtype
    return np.matmul(x, weight.astype(dtype, copy=False)) + bias.astype(dtype, copy=False)


def encode_tokens(model: BiMamba2NdModel, padded) -> tuple:
    """Flatten and channel-map an aligned input; returns ``(fwd_tokens, bwd_tokens)``.

    Both entries are the same array unless a premix pair is configured.
    """
    if model.premix is None:
        mapped = _linear(_to_tokens(padded), model.fc_in_weight, model.fc_in_bias)
        return mapped, mapped
    fwd_spec, bwd_spec = model.premix
    fwd = _linear(_to_tokens(directional_path(padded, fwd_spec)), model.fc_in_weight, model.fc_in_bias)
    if not model.bidirectional:
        return fwd, None
    bwd = _linear(_to_tokens(directional_path(padded, bwd_spec)), model.fc_in_weight, model.fc_in_bias)
    return fwd, bwd


def fused_features(model: BiMamba2NdModel, fwd_tokens, bwd_tokens=None, scan: str = "chunked") -> np.ndarray:
    """Forward core plus (when bidirectional) the flip-sandwiched backward core."""
    h = mamba2_forward(fwd_tokens, model.core_forward, model.cfg, scan=scan)
    if model.bidirectional:
        src = fwd_tokens if bwd_tokens is None else bwd_tokens
        hb = flip_tokens(mamba2_forward(flip_tokens(src), model.core_backward, model.cfg, scan=scan))
        h = fuse(h, hb)
    return h


def forward(model: BiMamba2NdModel, x, scan: str = "chunked") -> np.ndarray:
    """Map ``(B, c_in, *spatial)`` to ``(B, c_out, *spatial)``."""
    x = as_tensor(x)
    if x.ndim != model.spatial_rank + 2:
        raise ShapeError(
            f"model expects (B, C) + {model.spatial_rank} spatial axes, got shape {x.shape}"
        )
    if x.shape[1] != model.c_in:
        raise ShapeError(f"model expects {model.c_in} input channels, got {x.shape[1]}")
    padded, rec = align_pad(x, model.spatial_rank)
    L = math.prod(rec.padded_shape)
    if L % model.cfg.chunk:
        raise ShapeError(f"aligned token count {L} is not a multiple of chunk {model.cfg.chunk}")

    fwd_tokens, bwd_tokens = encode_tokens(model, padded)
    h = fused_features(model, fwd_tokens, bwd_tokens, scan=scan)
    out = _linear(h, model.fc_out_weight, model.fc_out_bias)

    b = x.shape[0]
    out = out.transpose(0, 2, 1).reshape((b, model.c_out) + rec.padded_shape)
    return np.ascontiguousarray(align_trim(out, rec))


def _init_core(rng: np.random.Generator, cfg: Mamba2Config) -> Mamba2Weights:
    def uniform(bound, shape):
        return rng.uniform(-bound, bound, shape)

    nheads = cfg.nheads
    # decay exp(-exp(A_log)) lands in (0.5, 1) when dt is about 1
    A = rng.uniform(0.01, np.log(2.0), nheads)
    dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), nheads))
    w = Mamba2Weights(
        in_proj=uniform(1 / np.sqrt(cfg.d_model), (cfg.d_model, cfg.d_in_proj)),
        conv_weight=uniform(1 / np.sqrt(cfg.d_conv), (cfg.conv_dim, cfg.d_conv)),
        conv_bias=uniform(1 / np.sqrt(cfg.d_conv), (cfg.conv_dim,)),
        dt_bias=dt + np.log(-np.expm1(-dt)),
        A_log=np.log(A),
        D_skip=np.ones(nheads),
        norm_gain=np.ones(cfg.d_inner),
        out_proj=uniform(1 / np.sqrt(cfg.d_inner), (cfg.d_inner, cfg.d_model)),
    )
    return w.astype(np.float32)


def _init_premix(rng: np.random.Generator, channels: int, rank: int, kernel: int) -> ConvSpec:
    k = (kernel,) * rank
    bound = 1 / np.sqrt(kernel ** rank)
    return ConvSpec(
        kernel=k,
        stride=(1,) * rank,
        channels=channels,
        weight=rng.uniform(-bound, bound, (channels, *k)).astype(np.float32),
        bias=rng.uniform(-bound, bound, channels).astype(np.float32),
    )


def init_random(
    cfg: Mamba2Config,
    c_in: int,
    c_out: int,
    rank: int,
    bidirectional: bool = True,
    seed: int = 0,
    premix_kernel: Optional[int] = None,
) -> BiMamba2NdModel:
    """Seeded float32 model. The same arguments always give bitwise-identical weights."""
    rng = np.random.default_rng(seed)
    d = cfg.d_model
    fc_in_w = rng.uniform(-1, 1, (c_in, d)) / np.sqrt(c_in)
    fc_in_b = rng.uniform(-1, 1, d) / np.sqrt(c_in)
    fc_out_w = rng.uniform(-1, 1, (d, c_out)) / np.sqrt(d)
    fc_out_b = rng.uniform(-1, 1, c_out) / np.sqrt(d)
    core_f = _init_core(rng, cfg)
    core_b = _init_core(rng, cfg) if bidirectional else None
    premix = None
    if premix_kernel is not None:
        premix = (_init_premix(rng, c_in, rank, premix_kernel), _init_premix(rng, c_in, rank, premix_kernel))
    f32 = np.float32
    return BiMamba2NdModel(
        c_in, c_out, rank, cfg,
        fc_in_w.astype(f32), fc_in_b.astype(f32), fc_out_w.astype(f32), fc_out_b.astype(f32),
        core_f, core_b, premix,
    )
