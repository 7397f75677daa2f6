# %% [markdown]
# # Spatial pyramid pooling and gradient checks
#
# A pyramid pool turns a feature map of any height and width into a vector of
# fixed length: level k splits the map into a k-by-k grid and keeps the
# maximum of each cell.  This is what lets one network take images of
# different sizes.

# %%
import numpy as np

from dmmcnn.spp import SpatialPyramidPool, block_bounds, pyramid_bins, spp_forward

rng = np.random.default_rng(0)
for h, w in [(5, 5), (7, 12), (16, 9)]:
    x = rng.standard_normal((8, h, w))
    print(f"{h:>2}x{w:<2} map -> length {spp_forward(x, 3).shape[0]} (8 channels x {pyramid_bins(3)} bins)")

# %% [markdown]
# Cell boundaries tile the map exactly when it is at least as large as the
# grid.  Smaller maps get overlapping one-pixel cells instead of empty ones.

# %%
print("size 7, 3 cells:", block_bounds(7, 3))
print("size 2, 3 cells:", block_bounds(2, 3))

# %% [markdown]
# Every layer has a hand-written backward pass.  Central finite differences
# give an independent check of it.

# %%
from dmmcnn.nn import Conv2d

def numeric_grad(f, x, eps=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps; fp = f()
        x[i] = old - eps; fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g

conv = Conv2d(2, 3, 3, padding=1, rng=rng)
x = rng.standard_normal((1, 2, 5, 5))
probe = rng.standard_normal(conv.output_shape(x.shape))
analytic = conv.backward(x, probe)
numeric = numeric_grad(lambda: float(np.sum(probe * conv.forward(x))), x)
print("conv input-gradient max abs difference:", np.abs(analytic - numeric).max())

pool = SpatialPyramidPool(3)
x = rng.permutation(2 * 6 * 6).reshape(1, 2, 6, 6) * 0.01
probe = rng.standard_normal(pool.output_shape(x.shape))
analytic = pool.backward(x, probe)
numeric = numeric_grad(lambda: float(np.sum(probe * pool.forward(x))), x)
print("pyramid-pool gradient max abs difference:", np.abs(analytic - numeric).max())
