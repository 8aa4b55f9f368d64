import io as stdio
import json
import struct

import numpy as np
import pytest

from ndssm import io
from ndssm.pipeline import init_random


def assert_models_equal(a, b):
    assert (a.c_in, a.c_out, a.spatial_rank, a.bidirectional) == (b.c_in, b.c_out, b.spatial_rank, b.bidirectional)
    assert a.cfg == b.cfg
    ta, tb = a.tensors(), b.tensors()
    assert ta.keys() == tb.keys()
    for k in ta:
        assert ta[k].shape == tb[k].shape
        assert ta[k].tobytes() == tb[k].tobytes(), k


@pytest.mark.parametrize("rank", [1, 2, 3])
@pytest.mark.parametrize("bidirectional", [False, True])
@pytest.mark.parametrize("seed", [0, 1])
def test_round_trip(small_cfg, rank, bidirectional, seed):
    m = init_random(small_cfg, 3, 5, rank, bidirectional, seed)
    assert_models_equal(io.load(io.dumps(m)), m)


def test_round_trip_premix_and_stream(small_cfg, tmp_path):
    m = init_random(small_cfg, 3, 5, 3, True, 9, premix_kernel=2)
    buf = stdio.BytesIO()
    io.save(m, buf)
    buf.seek(0)
    assert_models_equal(io.load(buf), m)
    path = tmp_path / "m.ndbm2"
    io.save(m, path)
    assert_models_equal(io.load(path), m)


def test_save_is_deterministic(small_cfg):
    m = init_random(small_cfg, 3, 5, 2, True, 0)
    data = io.dumps(m)
    assert data == io.dumps(m) == io.dumps(init_random(small_cfg, 3, 5, 2, True, 0))
    assert data[:5] == b"NDBM2"
    assert struct.unpack("<H", data[5:7]) == (1,)


def test_file_size_arithmetic(small_cfg):
    m = init_random(small_cfg, 2, 2, 1, False, 0)
    data = io.dumps(m)
    (config_len,) = struct.unpack("<I", data[7:11])
    config = json.loads(data[11:11 + config_len])
    assert config["spatial_rank"] == 1 and config["bidirectional"] is False
    expected = 5 + 2 + 4 + config_len + 4
    for name, t in m.tensors().items():
        expected += 2 + len(name.encode()) + 1 + 4 * t.ndim + 4 * t.size
    assert len(data) == expected


def test_tensor_order_sorted(small_cfg):
    data = io.dumps(init_random(small_cfg, 2, 2, 1, True, 0))
    src = stdio.BytesIO(data)
    src.seek(7)
    (n,) = struct.unpack("<I", src.read(4))
    src.seek(11 + n)
    (count,) = struct.unpack("<I", src.read(4))
    names = [io.read_tensor_entry(src)[0] for _ in range(count)]
    assert names == sorted(names)


def test_bad_magic(small_cfg):
    data = bytearray(io.dumps(init_random(small_cfg, 2, 2, 1, True, 0)))
    data[0] ^= 0xFF
    with pytest.raises(io.FormatError):
        io.load(bytes(data))


@pytest.mark.parametrize("version", [0, 2, 65535])
def test_unsupported_version(small_cfg, version):
    data = bytearray(io.dumps(init_random(small_cfg, 2, 2, 1, True, 0)))
    data[5:7] = struct.pack("<H", version)
    with pytest.raises(io.UnsupportedVersionError):
        io.load(bytes(data))


@pytest.mark.parametrize("cut", [4, 1, 100])
def test_truncated(small_cfg, cut):
    data = io.dumps(init_random(small_cfg, 2, 2, 1, True, 0))
    with pytest.raises(io.CorruptionError):
        io.load(data[:-cut])


def test_truncated_header():
    with pytest.raises(io.CorruptionError):
        io.load(b"NDBM2\x01")


def test_trailing_bytes(small_cfg):
    data = io.dumps(init_random(small_cfg, 2, 2, 1, True, 0))
    with pytest.raises(io.CorruptionError):
        io.load(data + b"\x00")


def test_config_tensor_mismatch(small_cfg):
    m = init_random(small_cfg, 2, 2, 1, True, 0)
    data = io.dumps(m)
    (n,) = struct.unpack("<I", data[7:11])
    config = json.loads(data[11:11 + n])
    config["c_in"] = 3
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    patched = data[:7] + struct.pack("<I", len(blob)) + blob + data[11 + n:]
    with pytest.raises(io.ValidationError):
        io.load(patched)
    config["bidirectional"] = False
    config["c_in"] = 2
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    patched = data[:7] + struct.pack("<I", len(blob)) + blob + data[11 + n:]
    with pytest.raises(io.ValidationError, match="unexpected tensors"):
        io.load(patched)


def test_single_tensor_file(tmp_path, rng):
    x = rng.standard_normal((1, 4, 5, 6)).astype(np.float32)
    path = tmp_path / "x.bin"
    io.save_tensor(x, path, name="input")
    assert path.stat().st_size == 2 + 5 + 1 + 4 * 4 + 4 * x.size
    np.testing.assert_array_equal(io.load_tensor(path), x)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(io.CorruptionError):
        io.load_tensor(path)
