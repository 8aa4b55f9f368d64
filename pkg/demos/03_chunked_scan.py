# %% [markdown]
# # Token-by-token versus block-wise selective scan
#
# Both functions compute the same recurrence
#
#     h_t = exp(dt_t * A) * h_{t-1} + dt_t * outer(x_t, B_t)
#     y_t = h_t @ C_t + D * x_t
#
# The block-wise version handles 64-token chunks with dense products and only
# hands the state from one chunk to the next sequentially.

# %%
import time

import numpy as np

from ndssm.ssd import ssd_scan_chunked, ssd_scan_naive

rng = np.random.default_rng(0)
b, L, H, P, G, N = 1, 2048, 4, 64, 1, 128
x = rng.standard_normal((b, L, H, P)).astype(np.float32)
dt = rng.uniform(1e-3, 0.1, (b, L, H)).astype(np.float32)
A = -rng.uniform(0.1, 1.0, H)
Bm = rng.standard_normal((b, L, G, N)).astype(np.float32)
Cm = rng.standard_normal((b, L, G, N)).astype(np.float32)
D = np.ones(H)

# %%
t0 = time.perf_counter()
ref = ssd_scan_naive(x, dt, A, Bm, Cm, D)
t1 = time.perf_counter()
fast = ssd_scan_chunked(x, dt, A, Bm, Cm, D, chunk=64)
t2 = time.perf_counter()
err = np.abs(fast - ref).max() / np.abs(ref).max()
print(f"naive {1e3 * (t1 - t0):.1f} ms, chunked {1e3 * (t2 - t1):.1f} ms, relative error {err:.2e}")

# %% [markdown]
# The chunk length is a free parameter as long as it divides L.

# %%
for chunk in (1, 16, 64, 256, L):
    y = ssd_scan_chunked(x, dt, A, Bm, Cm, D, chunk=chunk)
    print(f"chunk {chunk:>5}: {np.abs(y - ref).max() / np.abs(ref).max():.2e}")
