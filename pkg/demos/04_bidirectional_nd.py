# %% [markdown]
# # One model family for sequences, images and volumes
#
# Inputs are (batch, channels, *spatial) with 1 to 3 spatial axes. The output
# has the same spatial shape and c_out channels whatever the input extents.

# %%
import numpy as np

from ndssm.pipeline import forward, init_random
from ndssm.ssd import Mamba2Config

cfg = Mamba2Config()
rng = np.random.default_rng(0)

for spatial in [(1029,), (113, 127), (27, 33, 31)]:
    model = init_random(cfg, 64, 32, len(spatial), bidirectional=True, seed=1)
    x = rng.standard_normal((1, 64) + spatial).astype(np.float32)
    y = forward(model, x)
    print(f"{x.shape} -> {y.shape}")

# %% [markdown]
# ## What the backward core adds
#
# Perturb one position of a sequence and see which outputs move. With only
# the forward core, the change propagates to later positions only. The
# backward core runs on the reversed token order, so with both cores the change
# reaches earlier positions as well.

# %%
small = Mamba2Config(d_model=32, d_state=16, headdim=16)
x = rng.standard_normal((1, 4, 200)).astype(np.float32)
probe = 120
for bi in (False, True):
    model = init_random(small, 4, 4, 1, bidirectional=bi, seed=2)
    x2 = x.copy()
    x2[..., probe] += 1.0
    moved = np.abs(forward(model, x2) - forward(model, x)).max(axis=1)[0] > 0
    print(f"bidirectional={bi}: first moved position {moved.argmax()}, "
          f"moved before probe: {bool(moved[:probe].any())}")

# %% [markdown]
# ## Optional directional pre-mixing
#
# Each direction can first apply its own same-padded depthwise convolution
# with GELU over the spatial axes, before the tokens are flattened.

# %%
model = init_random(small, 4, 4, 2, bidirectional=True, seed=3, premix_kernel=3)
img = rng.standard_normal((1, 4, 30, 41)).astype(np.float32)
print(forward(model, img).shape)
