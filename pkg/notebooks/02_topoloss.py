"""
The topographic penalty
=======================

Blur each depth slice of a sheet by downsampling then upsampling, and score
how close the slice is to its blurred self.
"""

# %%
import numpy as np

from toponet.autograd import Tensor
from toponet.sheet import CorticalSheet
from toponet.topoloss import TopoConfig, blur, topo_loss

rng = np.random.default_rng(1)

# %% [markdown]
# Smooth slices score near -1, noise scores closer to 0.

# %%
r, c = np.meshgrid(np.arange(12.0), np.arange(12.0), indexing="ij")
smooth = np.stack([np.sin(r / 4 + k) + np.cos(c / 5) for k in range(3)], axis=2)
noise = rng.normal(size=smooth.shape)
for name, C in (("smooth", smooth), ("noise", noise)):
    print(name, topo_loss(CorticalSheet(C)).item())

# %% [markdown]
# What the blur does to a checkerboard.

# %%
cb = np.indices((6, 6)).sum(axis=0) % 2 * 2.0 - 1.0
print(np.round(blur(cb, 3, 3).data, 2))

# %% [markdown]
# Gradient descent on the penalty alone pulls a random sheet toward a smooth one.

# %%
W = rng.normal(size=(16, 16, 4))
cfg = TopoConfig(phi_h=3, phi_w=3)
for step in range(301):
    t = Tensor(W, requires_grad=True)
    loss = topo_loss(CorticalSheet(t), cfg)
    loss.backward()
    W = W - 5.0 * t.grad
    if step % 100 == 0:
        print(step, round(loss.item(), 4))
