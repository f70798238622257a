"""
Measuring topography
====================

Effective dimensionality, smoothness, selectivity maps, map similarity and
the integration-window fit.
"""

# %%
import numpy as np

from toponet.metrics import (
    effective_dimensionality,
    fit_integration_window,
    grid_positions,
    integration_window,
    pairwise_correlation_vs_distance,
    selectivity_map,
    structural_similarity,
)

rng = np.random.default_rng(2)

# %% [markdown]
# Effective dimensionality is (sum of eigenvalues)^2 / sum of squares.

# %%
isotropic = rng.normal(size=(2000, 10))
skewed = isotropic * np.geomspace(1, 0.01, 10)
print("isotropic", effective_dimensionality(isotropic))
print("skewed", effective_dimensionality(skewed))

# %% [markdown]
# Units whose responses are driven by a smooth field over the grid correlate
# more with near neighbours.  Shuffling positions destroys that.

# %%
pos = grid_positions(8, 8)
freqs = rng.normal(scale=0.3, size=(400, 2))
R = np.cos(freqs @ pos.T + rng.uniform(0, 2 * np.pi, size=(400, 1)))
curve = pairwise_correlation_vs_distance(pos, R)
print("bin means", np.round(curve.bin_means, 3))
print("smoothness", curve.smoothness)
print("shuffled", pairwise_correlation_vs_distance(pos, R[:, rng.permutation(64)]).smoothness)

# %% [markdown]
# Welch t-maps for two stimulus groups and the similarity of two maps.

# %%
A = rng.normal(size=(50, 64)) + np.linspace(0, 1, 64)
B = rng.normal(size=(50, 64))
t_ab = selectivity_map(A, B, (8, 8))
print(np.round(t_ab, 1))
print("SSIM with itself", structural_similarity(t_ab, t_ab))
print("SSIM with a shuffled copy", structural_similarity(t_ab, rng.permutation(t_ab.ravel()).reshape(8, 8)))

# %% [markdown]
# Recover the mixture of power law and exponential from a noisy curve.

# %%
d = np.arange(32.0)
y = np.clip(integration_window(d, 0.7, 0.5, 0.5) + 0.01 * rng.normal(size=32), 0, 1.05)
print(fit_integration_window(d, y))
