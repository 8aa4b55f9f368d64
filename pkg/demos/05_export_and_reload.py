# %% [markdown]
# # Saving and reloading a model
#
# Model files hold a JSON config block and a sorted table of little-endian
# float32 tensors, so any language with a byte reader can load them.

# %%
import tempfile
from pathlib import Path

import numpy as np

from ndssm import io
from ndssm.pipeline import forward, init_random
from ndssm.ssd import Mamba2Config

model = init_random(Mamba2Config(), 64, 64, 2, bidirectional=True, seed=7)
path = Path(tempfile.mkdtemp()) / "model.ndbm2"
io.save(model, path)
print(path.stat().st_size, "bytes, header", path.read_bytes()[:5])

# %%
loaded = io.load(path)
x = np.random.default_rng(0).standard_normal((1, 64, 40, 50)).astype(np.float32)
same = np.array_equal(forward(model, x), forward(loaded, x))
print("identical outputs after reload:", same)

# %% [markdown]
# Damaged files are rejected with a specific error, never half-loaded.

# %%
data = path.read_bytes()
for label, blob in [("bad magic", b"XDBM2" + data[5:]), ("truncated", data[:-4])]:
    try:
        io.load(blob)
    except io.ModelFileError as exc:
        print(f"{label}: {type(exc).__name__}: {exc}")
