# %% [markdown]
# # Adaptive alignment padding
#
# The selective scan runs in blocks of 64 tokens, so every input is padded
# until its flattened token count is a multiple of 64. Each spatial axis is
# rounded up on its own: to 64 for sequences, to 8 per axis for images and to
# 4 per axis for volumes (64 = 8**2 = 4**3).

# %%
import numpy as np

from ndssm.align import align_pad, align_trim, multiple_for, plan

for rank in (1, 2, 3):
    print(f"{rank}D multiple per axis: {multiple_for(rank)}")

# %%
shapes = [(1024,), (1029,), (1001,), (128, 128), (129, 127), (113, 128),
          (32, 32, 32), (27, 33, 32), (37, 29, 31)]
print(f"{'input':>12} {'padded':>12} {'tokens':>7} equal")
for shape in shapes:
    rec = plan(shape)
    print(f"{'x'.join(map(str, shape)):>12} {'x'.join(map(str, rec.padded_shape)):>12} "
          f"{rec.tokens:>7} {rec.unchanged}")

# %% [markdown]
# Padding goes on the trailing edge and mirrors the data when the axis is
# long enough. Axes of extent 1 cannot be mirrored, so they repeat the edge.

# %%
x = np.arange(6, dtype=np.float32).reshape(1, 1, 1, 6)
padded, rec = align_pad(x, spatial_rank=2)
print(rec)
print(padded[0, 0, :2])

# %% [markdown]
# Trimming is a suffix removal, so the original values come back untouched.

# %%
restored = align_trim(padded, rec)
assert np.array_equal(restored, x)
print("round trip ok:", restored.shape)
