# %% [markdown]
# # Parameters and multiply-accumulates
#
# The default model has 64 input/output channels and d_model = 128, with
# expand 2, state width 128, head width 64 and a 4-tap causal conv inside each
# directional core.

# %%
from ndssm.analysis import count_macs, count_params, format_report
from ndssm.pipeline import init_random
from ndssm.ssd import Mamba2Config

cfg = Mamba2Config()
shapes = {1: (1, 64, 1024), 2: (1, 64, 128, 128), 3: (1, 64, 32, 32, 32)}

# %%
print(f"{'bi':>3} {'size':>10} {'GMac':>7} {'params (k)':>11}")
for bi in (False, True):
    for rank, shape in shapes.items():
        model = init_random(cfg, 64, 64, rank, bidirectional=bi, seed=0)
        macs = count_macs(model, shape)
        size = "x".join(map(str, shape[2:]))
        print(f"{'yes' if bi else 'no':>3} {size:>10} {macs.gmacs:>7.3f} "
              f"{count_params(model).params_total / 1e3:>11.2f}")

# %% [markdown]
# Parameter counts do not depend on the input. The bidirectional model shares
# the two channel-mapping layers and duplicates the core.

# %%
uni = count_params(init_random(cfg, 64, 64, 1, bidirectional=False))
bi = count_params(init_random(cfg, 64, 64, 1, bidirectional=True))
shared = uni.layer("fc_in").params + uni.layer("fc_out").params
print(bi.params_total, "==", 2 * uni.params_total - shared)

# %% [markdown]
# By default only the projection and convolution layers are counted. The scan
# itself can be included at its token-by-token recurrence cost; the block-wise
# evaluation's own cost is always reported alongside.

# %%
model = init_random(cfg, 64, 64, 1, bidirectional=False)
report = count_macs(model, shapes[1], include_scan=True)
print(format_report(report))
print("naive scan MACs:  ", report.info["scan_macs"])
print("chunked scan MACs:", report.info["chunked_scan_macs"])
