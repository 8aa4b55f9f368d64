"""Versioned binary model files and single-tensor files.

Model file layout, all integers little-endian::

    magic        5 bytes   b"NDBM2"
    version      u16       1
    config_len   u32
    config       config_len bytes of UTF-8 JSON (sorted keys)
    n_tensors    u32
    n_tensors x tensor entry, sorted by name

Tensor entry (also the whole content of a single-tensor file)::

    name_len     u16
    name         name_len bytes of UTF-8
    rank         u8
    extents      rank x u32
    payload      prod(extents) x float32
"""
from __future__ import annotations

import io as _stdio
import json
import math
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .ndconv import ConvSpec
from .pipeline import BiMamba2NdModel
from .ssd import Mamba2Config, Mamba2Weights
from .tensor import ShapeError

MAGIC = b"NDBM2"
VERSION = 1
_F32 = np.dtype("<f4")


class ModelFileError(ValueError):
    """Base class for everything that can go wrong reading a model file."""


class FormatError(ModelFileError):
    pass


class UnsupportedVersionError(ModelFileError):
    pass


class CorruptionError(ModelFileError):
    pass


class ValidationError(ModelFileError):
    pass


def _read_exact(src: BinaryIO, n: int, what: str) -> bytes:
    data = src.read(n)
    if len(data) != n:
        raise CorruptionError(f"truncated file: expected {n} bytes for {what}, got {len(data)}")
    return data


def _unpack(src: BinaryIO, fmt: str, what: str):
    return struct.unpack(fmt, _read_exact(src, struct.calcsize(fmt), what))


def tensor_entry(name: str, array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype=_F32)
    name_bytes = name.encode("utf-8")
    if arr.ndim > 255 or len(name_bytes) > 0xFFFF:
        raise ValueError(f"tensor {name!r} cannot be encoded")
    header = struct.pack(f"<H{len(name_bytes)}sB{arr.ndim}I", len(name_bytes), name_bytes, arr.ndim, *arr.shape)
    return header + arr.tobytes()


def read_tensor_entry(src: BinaryIO) -> tuple:
    (name_len,) = _unpack(src, "<H", "tensor name length")
    name = _read_exact(src, name_len, "tensor name").decode("utf-8")
    (rank,) = _unpack(src, "<B", f"rank of {name}")
    shape = _unpack(src, f"<{rank}I", f"extents of {name}")
    count = math.prod(shape)
    payload = _read_exact(src, 4 * count, f"payload of {name}")
    return name, np.frombuffer(payload, dtype=_F32).astype(np.float32).reshape(shape)


def _config_dict(model: BiMamba2NdModel) -> dict:
    return {
        "c_in": model.c_in,
        "c_out": model.c_out,
        "spatial_rank": model.spatial_rank,
        "bidirectional": model.bidirectional,
        "premix": model.premix is not None,
        "mamba2": model.cfg.to_dict(),
    }


def dumps(model: BiMamba2NdModel) -> bytes:
    config = json.dumps(_config_dict(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = model.tensors()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(config)), config, struct.pack("<I", len(tensors))]
    parts += [tensor_entry(name, tensors[name]) for name in sorted(tensors)]
    return b"".join(parts)


def save(model: BiMamba2NdModel, sink) -> None:
    """Write ``model`` to a binary stream or a filesystem path."""
    data = dumps(model)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def _build_model(config: dict, tensors: dict) -> BiMamba2NdModel:
    try:
        cfg = Mamba2Config.from_dict(config["mamba2"])
        c_in, c_out, rank = int(config["c_in"]), int(config["c_out"]), int(config["spatial_rank"])
        bidirectional, has_premix = bool(config["bidirectional"]), bool(config["premix"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"invalid config block: {exc}") from exc

    def take(name):
        try:
            return tensors.pop(name)
        except KeyError:
            raise ValidationError(f"missing tensor {name!r}") from None

    def core(prefix):
        return Mamba2Weights(**{k: take(f"{prefix}.{k}") for k in Mamba2Weights.shapes(cfg)})

    try:
        fc = [take(n) for n in ("fc_in.weight", "fc_in.bias", "fc_out.weight", "fc_out.bias")]
        core_f = core("core_forward")
        core_b = core("core_backward") if bidirectional else None
        premix = None
        if has_premix:
            specs = []
            for prefix in ("premix.forward", "premix.backward"):
                w = take(f"{prefix}.weight")
                b = tensors.pop(f"{prefix}.bias", None)
                kernel = w.shape[1:]
                specs.append(ConvSpec(kernel, (1,) * len(kernel), c_in, w, b))
            premix = tuple(specs)
        if tensors:
            raise ValidationError(f"unexpected tensors: {sorted(tensors)}")
        return BiMamba2NdModel(c_in, c_out, rank, cfg, *fc, core_f, core_b, premix)
    except (ShapeError, ValueError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ValidationError(f"tensors do not match config: {exc}") from exc


def load(source) -> BiMamba2NdModel:
    """Read a model from a binary stream, a path, or a ``bytes`` object."""
    if isinstance(source, (bytes, bytearray)):
        source = _stdio.BytesIO(source)
    elif isinstance(source, (str, Path)):
        source = _stdio.BytesIO(Path(source).read_bytes())

    head = source.read(len(MAGIC))
    if head != MAGIC:
        raise FormatError(f"bad magic {head!r}, expected {MAGIC!r}")
    (version,) = _unpack(source, "<H", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported model file version {version} (this reader handles {VERSION})")
    (config_len,) = _unpack(source, "<I", "config length")
    raw = _read_exact(source, config_len, "config")
    try:
        config = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"config block is not valid UTF-8 JSON: {exc}") from exc
    (count,) = _unpack(source, "<I", "tensor count")
    tensors = {}
    for _ in range(count):
        try:
            name, arr = read_tensor_entry(source)
        except UnicodeDecodeError as exc:
            raise CorruptionError(f"tensor name is not valid UTF-8: {exc}") from exc
        if name in tensors:
            raise CorruptionError(f"duplicate tensor {name!r}")
        tensors[name] = arr
    if source.read(1):
        raise CorruptionError("trailing bytes after the last tensor")
    return _build_model(config, tensors)


def save_tensor(array: np.ndarray, sink, name: str = "tensor") -> None:
    data = tensor_entry(name, array)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def load_tensor(source) -> np.ndarray:
    if isinstance(source, (str, Path)):
        source = _stdio.BytesIO(Path(source).read_bytes())
    _, arr = read_tensor_entry(source)
    if source.read(1):
        raise CorruptionError("trailing bytes after tensor")
    return arr
