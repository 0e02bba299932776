# %% [markdown]
# # Monte-Carlo comparison of the four bundle-adjustment variants
#
# Intra-frame motions are drawn once and fixed; every trial redraws the pixel
# noise and the starting point. Errors are measured after a similarity
# alignment of the camera trajectory. Increase `N_TRIALS` for smoother curves.

# %%
import numpy as np

from rs_selfcal.harness import METRICS, TrialConfig, run_experiment
from rs_selfcal.scenes import make_scene

N_TRIALS = 10
results = {}
for preset in ("fountain", "herz-jesu"):
    scene = make_scene(preset)
    results[preset] = run_experiment(scene, TrialConfig(n_trials=N_TRIALS, seed=0))

# %%
for preset, res in results.items():
    print(preset)
    for v in res.variants:
        print(f"  {v:9s}" + "".join(f"  {m}={res.median(v, m):8.4g}" for m in METRICS))

# %% [markdown]
# Cumulative histograms, as written by `rs-selfcal experiment` into
# `hist_<variant>_<metric>.dat`: the fraction of trials at or below each error.

# %%
hist = results["fountain"].histograms(n_bins=10)
for v in results["fountain"].variants:
    edges, frac = hist[(v, "struct_err")]
    print(f"{v:9s}", " ".join(f"{x:.1f}" for x in frac))
print("bin tops ", " ".join(f"{e:.0f}" for e in edges))
