"""
Pruning and sheet downsampling
==============================

Two ways to shrink a layer: zero its smallest weights, or store its sheet at
lower resolution and upsample back at inference.
"""

# %%
import numpy as np

from toponet.compress import (
    downsample_layer,
    l1_prune,
    prune_fraction_for_reduction,
    reconstruct_layer,
)
from toponet.sheet import CorticalSheet, factorize_near_square

rng = np.random.default_rng(3)

# %%
for n in (2, 4, 5, 10):
    print(f"{n}x smaller -> prune {prune_fraction_for_reduction(n):.2f}")

# %%
w, report = l1_prune(rng.normal(size=10), 0.5)
print(np.round(w, 2))
print(report)

# %% [markdown]
# Smooth sheets survive downsampling far better than noise.

# %%
r, c = np.meshgrid(np.arange(16.0), np.arange(16.0), indexing="ij")
smooth = np.stack([np.sin(r / 5 + k) + np.cos(c / 6 - k) for k in range(4)], axis=2)
noise = rng.normal(size=smooth.shape) * smooth.std()
for name, C in (("smooth", smooth), ("noise", noise)):
    comp = downsample_layer(CorticalSheet(C), 0.25)
    mse = np.mean((reconstruct_layer(comp).numpy() - C) ** 2)
    print(name, comp.reduced_sheet.shape, "mse", round(mse, 4))

# %% [markdown]
# Storage arithmetic for a 3072-unit feed-forward layer with 768 inputs.

# %%
h, w = factorize_near_square(3072)
comp = downsample_layer(CorticalSheet(np.zeros((h, w, 768))), 0.2)
print((h, w), "->", comp.reduced_sheet.shape[:2])
print("parameters removed per layer", comp.original_param_count - comp.param_count)
