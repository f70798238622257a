"""
Tensors, gradients and cortical sheets
======================================

A tiny reverse-mode engine plus the reshape that lays a layer's units out
on a 2D grid.
"""

# %%
import numpy as np

from toponet import autograd as ag
from toponet.sheet import Conv, Linear, factorize_near_square, project, unproject

# %% [markdown]
# Build a small graph and backpropagate through it.

# %%
x = ag.tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
y = ag.sum(ag.relu(ag.matmul(x, x)) * 0.5)
y.backward()
print("value", y.item())
print("grad\n", x.grad)

# %% [markdown]
# Central differences agree with backprop.

# %%
rng = np.random.default_rng(0)
err = ag.grad_check(lambda t: ag.mean(ag.sqrt(t * t + 1.0)), rng.normal(size=(4, 3)))
print("max relative error", err)

# %% [markdown]
# A linear layer with 64 outputs becomes an 8x8 sheet whose depth is the
# fan-in.  Unit ``u`` sits at row ``u // w``, column ``u % w``.

# %%
kind = Linear(o=64, i=32)
W = rng.normal(size=kind.weight_shape)
sheet = project(W, kind)
print("sheet shape", sheet.shape)
print("unit 10 at", sheet.positions()[10])
assert np.array_equal(unproject(sheet, kind).numpy(), W)

# %%
for n in (12, 36, 100, 3072, 97):
    print(n, "->", factorize_near_square(n))

# %% [markdown]
# Conv kernels flatten their (in-channel, k, k) block into the depth axis.

# %%
conv = Conv(c_out=24, c_in=3, k=3)
print(project(rng.normal(size=conv.weight_shape), conv).shape)
