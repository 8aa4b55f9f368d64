"""Parameter counts, multiply-accumulate counts and wall-clock timing.

MACs are counted per layer at the aligned token count. By default only the
parametric layers (linear projections and convolutions) are counted, which
is the convention that reproduces published per-module GMac figures for this
architecture. Passing ``include_scan=True`` adds the selective scan at its
naive-recurrence cost: ``2 * d_inner * d_state`` MACs per token for the state
update and readout, plus ``d_inner`` for the skip term.
"""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_info

from .align import plan
from .pipeline import BiMamba2NdModel, forward
from .ssd import Mamba2Config


@dataclass(frozen=True)
class LayerCost:
    name: str
    params: int
    macs: int


@dataclass
class CostReport:
    per_layer: list
    tokens: int = 0
    wall_ms: Optional[float] = None
    threads: Optional[int] = None
    info: dict = field(default_factory=dict)

    @property
    def params_total(self) -> int:
        return sum(row.params for row in self.per_layer)

    @property
    def macs_total(self) -> int:
        return sum(row.macs for row in self.per_layer)

    @property
    def gmacs(self) -> float:
        return self.macs_total / 1e9

    def layer(self, name: str) -> LayerCost:
        for row in self.per_layer:
            if row.name == name:
                return row
        raise KeyError(name)


def _core_rows(prefix: str, cfg: Mamba2Config, tokens: int, include_scan: bool) -> list:
    H = cfg.nheads
    rows = [
        LayerCost(f"{prefix}.in_proj", cfg.d_model * cfg.d_in_proj, tokens * cfg.d_model * cfg.d_in_proj),
        LayerCost(f"{prefix}.conv1d", cfg.conv_dim * (cfg.d_conv + 1), tokens * cfg.conv_dim * cfg.d_conv),
        LayerCost(f"{prefix}.ssm", 3 * H, 0),
        LayerCost(f"{prefix}.norm", cfg.d_inner, 0),
        LayerCost(f"{prefix}.out_proj", cfg.d_inner * cfg.d_model, tokens * cfg.d_inner * cfg.d_model),
    ]
    if include_scan:
        rows.insert(3, LayerCost(f"{prefix}.scan", 0, scan_macs(cfg, tokens)))
    return rows


def scan_macs(cfg: Mamba2Config, tokens: int) -> int:
    """Naive-recurrence MACs of one scan over ``tokens`` tokens."""
    return tokens * (2 * cfg.d_inner * cfg.d_state + cfg.d_inner)


def chunked_scan_macs(cfg: Mamba2Config, tokens: int) -> int:
    """MACs of the block-wise scan at the configured chunk length.

    Per head and chunk of Q tokens: Q*Q*N for C B^T, Q*Q*P for the masked
    product with x, Q*N*P each for the chunk state and the carried-state
    readout, N*P for the state hand-off, plus the skip term.
    """
    Q, N, P, H = cfg.chunk, cfg.d_state, cfg.headdim, cfg.nheads
    chunks = tokens // Q
    per_chunk = Q * Q * N + Q * Q * P + 2 * Q * N * P + N * P
    return chunks * H * per_chunk + tokens * cfg.d_inner


def _rows(model: BiMamba2NdModel, tokens: int, include_scan: bool) -> list:
    cfg = model.cfg
    d = cfg.d_model
    rows = [LayerCost("fc_in", model.c_in * d + d, tokens * model.c_in * d)]
    if model.premix is not None:
        for name, spec in zip(("premix.forward", "premix.backward"), model.premix):
            if name.endswith("backward") and not model.bidirectional:
                continue
            k = math.prod(spec.kernel)
            params = spec.weight.size + (0 if spec.bias is None else spec.bias.size)
            rows.append(LayerCost(name, params, tokens * spec.channels * k))
    rows += _core_rows("core_forward", cfg, tokens, include_scan)
    if model.bidirectional:
        rows += _core_rows("core_backward", cfg, tokens, include_scan)
    rows.append(LayerCost("fc_out", d * model.c_out + model.c_out, tokens * d * model.c_out))
    return rows


def count_params(model: BiMamba2NdModel) -> CostReport:
    """Closed-form parameter count per layer; independent of input size."""
    return CostReport(_rows(model, 0, include_scan=False))


def aligned_tokens(input_shape) -> int:
    """Token count after alignment for an input shape ``(B, C, *spatial)``."""
    input_shape = tuple(input_shape)
    return input_shape[0] * plan(input_shape[2:]).tokens


def count_macs(model: BiMamba2NdModel, input_shape, include_scan: bool = False) -> CostReport:
    """Per-layer MACs for one forward pass on ``input_shape = (B, C, *spatial)``."""
    input_shape = tuple(int(n) for n in input_shape)
    if len(input_shape) != model.spatial_rank + 2:
        raise ValueError(f"input shape {input_shape} does not have spatial rank {model.spatial_rank}")
    tokens = aligned_tokens(input_shape)
    cores = 2 if model.bidirectional else 1
    info = {
        "scan_macs": cores * scan_macs(model.cfg, tokens),
        "chunked_scan_macs": cores * chunked_scan_macs(model.cfg, tokens),
        "include_scan": include_scan,
    }
    info["chunk_overhead_macs"] = info["chunked_scan_macs"] - info["scan_macs"]
    return CostReport(_rows(model, tokens, include_scan), tokens=tokens, info=info)


def _blas_threads() -> int:
    counts = [lib.get("num_threads", 1) for lib in threadpool_info() if lib.get("user_api") == "blas"]
    return max(counts) if counts else 1


def bench(model: BiMamba2NdModel, input_shape, repeats: int = 5, warmup: int = 1, seed: int = 0) -> CostReport:
    """Median wall time in milliseconds of ``forward`` over ``repeats`` timed runs."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    x = np.random.default_rng(seed).standard_normal(tuple(input_shape)).astype(np.float32)
    for _ in range(warmup):
        forward(model, x)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        forward(model, x)
        samples.append((time.perf_counter() - start) * 1000.0)
    report = count_macs(model, input_shape)
    report.wall_ms = statistics.median(samples)
    report.threads = _blas_threads()
    report.info["samples_ms"] = samples
    return report


def format_report(report: CostReport, fmt: str = "table") -> str:
    """Render per-layer rows as an aligned table or as ``name<TAB>params<TAB>macs`` lines."""
    rows = [(r.name, r.params, r.macs) for r in report.per_layer]
    rows.append(("total", report.params_total, report.macs_total))
    if fmt == "tsv":
        return "".join(f"{name}\t{params}\t{macs}\n" for name, params, macs in rows)
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")
    width = max(len(r[0]) for r in rows)
    lines = [f"{'layer':<{width}}  {'params':>10}  {'MACs':>14}"]
    lines += [f"{name:<{width}}  {params:>10d}  {macs:>14d}" for name, params, macs in rows]
    return "\n".join(lines) + "\n"
