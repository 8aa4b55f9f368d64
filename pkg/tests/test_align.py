import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndssm.align import PadRecord, align_pad, align_trim, multiple_for, plan
from ndssm.tensor import ShapeError

# (input, padded in input-axis order, tokens, equal)
PAD_ROWS = [
    ((1024,), (1024,), 1024, True),
    ((1029,), (1088,), 1088, False),
    ((1001,), (1024,), 1024, False),
    ((128, 128), (128, 128), 16384, True),
    ((129, 127), (136, 128), 17408, False),
    ((113, 128), (120, 128), 15360, False),
    ((32, 32, 32), (32, 32, 32), 32768, True),
    ((27, 33, 32), (28, 36, 32), 32256, False),
    ((37, 29, 31), (40, 32, 32), 40960, False),
]


def test_multiple_for():
    assert [multiple_for(r) for r in (1, 2, 3)] == [64, 8, 4]
    with pytest.raises(ValueError):
        multiple_for(4)


@pytest.mark.parametrize("shape, padded, tokens, equal", PAD_ROWS)
def test_reference_pad_rows(shape, padded, tokens, equal):
    x = np.zeros((1, 2) + shape, dtype=np.float32)
    out, rec = align_pad(x, len(shape))
    assert out.shape[2:] == padded
    assert rec.padded_shape == padded
    assert rec.tokens == tokens
    assert rec.unchanged is equal


def test_align_pad_modes_and_fallback():
    rec = plan((1, 5))
    assert rec.per_axis_amount == (7, 3)
    assert rec.mode_used == ("replicate", "reflect")
    x = np.arange(5, dtype=np.float32).reshape(1, 1, 1, 5)
    out, _ = align_pad(x, 2)
    np.testing.assert_array_equal(out[0, 0, :, 5:], [[3, 2, 1]] * 8)
    np.testing.assert_array_equal(out[0, 0, 1:, :5], np.broadcast_to(x[0, 0], (7, 5)))


def test_align_trim_examples(rng):
    y = np.zeros((1, 4, 1088), dtype=np.float32)
    rec = PadRecord((1029,), (1088,), (59,), ("reflect",))
    assert align_trim(y, rec).shape == (1, 4, 1029)
    x = rng.standard_normal((1, 2, 64)).astype(np.float32)
    out, rec = align_pad(x, 1)
    np.testing.assert_array_equal(align_trim(out, rec), x)
    with pytest.raises(ShapeError):
        align_trim(np.zeros((1, 4, 1024)), PadRecord((1029,), (1088,), (59,), ("reflect",)))


def test_align_pad_rank_mismatch():
    with pytest.raises(ShapeError):
        align_pad(np.zeros((1, 2, 5, 5)), 1)


spatial = st.integers(1, 3).flatmap(lambda r: st.tuples(*[st.integers(1, 40)] * r))


@settings(max_examples=60, deadline=None)
@given(spatial, st.integers(0, 2**31 - 1))
def test_pad_trim_round_trip(shape, seed):
    rng = np.random.default_rng(seed)
    rank = len(shape)
    x = rng.standard_normal((1, 2) + shape).astype(np.float32)
    out, rec = align_pad(x, rank)
    m = multiple_for(rank)
    assert math.prod(out.shape[2:]) % 64 == 0
    for d, p, a in zip(shape, rec.padded_shape, rec.per_axis_amount):
        assert p == d + a and p % m == 0 and a < m
    # original region never overwritten
    np.testing.assert_array_equal(out[(Ellipsis,) + tuple(slice(0, d) for d in shape)], x)
    np.testing.assert_array_equal(align_trim(out, rec), x)
