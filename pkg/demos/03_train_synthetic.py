# %% [markdown]
# # Training on the synthetic attribute task
#
# The generator draws 16x16 images with six binary attributes.  Three are
# clean stamps (objective group).  Three are drawn faint and noisy
# (subjective group), and one of those is positive only 5% of the time.
# Four landmarks hang off the attribute stamps and shift when their
# attribute is present, so landmark regression carries information about
# the labels.

# %%
import numpy as np

from dmmcnn import SynthConfig, TrainConfig, evaluate, generate_synthetic, make_network, train

data = generate_synthetic(SynthConfig(seed=0))
print({k: len(v) for k, v in data.parts().items()}, "positive rates:",
      ((data.train.labels + 1) / 2).mean(axis=0).round(2))

# %% [markdown]
# A short run with the full model: landmark branch, trend-based loss weights,
# adaptive thresholds and the two attribute branches.  Raise `max_iters` to
# 3000 for the budget used by the acceptance experiments (about a minute).

# %%
cfg = TrainConfig(max_iters=600, interval=50, base_lr=0.02, seed=0)
net, log = train(make_network(cfg, data), data, cfg)
iters, val = log.val_fac_curve()
for it, v in zip(iters[::3], val[::3]):
    print(f"iteration {it:>4}: mean validation attribute loss {v:.3f}")

# %%
report = evaluate(net, data.test, log.thresholds)
for row in report.rows():
    print(f"{row['attribute']}: accuracy {row['accuracy']:.3f}  balanced {row['balanced_accuracy']:.3f}")
print("final weights", log.weights.round(3))
print("final thresholds", log.thresholds.round(3))

# %% [markdown]
# The trend-based weights are the absolute relative change of each
# validation loss.  Once an attribute's loss settles, its weight heads to
# zero, so the run above stalls near a mean loss of 0.63.  The same run with
# uniform weights keeps learning:

# %%
flat = TrainConfig(max_iters=600, interval=50, base_lr=0.02, seed=0, use_dynamic_weights=False)
net_flat, log_flat = train(make_network(flat, data), data, flat)
print(f"final mean validation attribute loss: trend weights {val[-1]:.3f}, "
      f"uniform weights {log_flat.val_fac_curve()[1][-1]:.3f}")

# %% [markdown]
# The same run from the command line:
#
# ```
# dmmcnn gen-data --seed 0 --out runs/data
# dmmcnn train --data runs/data --set max_iters=600 --set base_lr=0.02 --out runs/train
# dmmcnn plot-curves --trace runs/train/trace.csv --out runs/curves
# ```
