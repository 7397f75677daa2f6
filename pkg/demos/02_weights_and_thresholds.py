# %% [markdown]
# # Loss weights from the validation trend, thresholds from FP/FN balance
#
# Every P iterations the trainer measures each attribute's validation loss.
# The new loss weight of an attribute is the absolute relative change of that
# loss since the previous measurement, so attributes that are still moving
# get weight and settled ones fade out.

# %%
import numpy as np

from dmmcnn.scheduler import SchedulerState, threshold_step, trend_weights

print(trend_weights([1.0, 0.7, 1.5], [2.0, 0.7, 1.0]))   # 0.5, 0.0, 0.5

# %% [markdown]
# The rule ignores the scale of the loss: multiplying both measurements by a
# constant leaves the weight unchanged.

# %%
prev, cur = np.array([0.8, 0.3]), np.array([0.6, 0.29])
print(trend_weights(cur, prev), trend_weights(1000 * cur, 1000 * prev))

# %% [markdown]
# Thresholds move towards balancing false positives against false
# negatives.  The step grows with the epoch and shrinks with the size of the
# validation set.  With 30 false positives, 10 false negatives, 100
# validation images, epoch 2 and step size 0.01 the threshold rises by 0.004.

# %%
print(threshold_step([0.0], [30], [10], gamma=0.01, epoch=2, n_val=100))

# %% [markdown]
# On a rare attribute a classifier with threshold 0 tends to answer "no"
# almost always.  Misses then outnumber false alarms and the threshold drifts
# down until the two balance.

# %%
from dmmcnn.scheduler import count_fp_fn, predict_labels

rng = np.random.default_rng(1)
labels = np.where(rng.random(1000) < 0.05, 1.0, -1.0)[:, None]
scores = np.where(labels > 0, rng.normal(-0.3, 0.4, labels.shape), rng.normal(-0.9, 0.4, labels.shape))
state = SchedulerState(J=1, V=1000)
for epoch in range(1, 61):
    state.epoch = epoch
    fp, fn = count_fp_fn(predict_labels(scores, state.tau), labels)
    state.update_thresholds(fp, fn)
    if epoch % 10 == 0:
        print(f"epoch {epoch:>2}: tau {state.tau[0]:+.3f}  fp {fp[0]:>3}  fn {fn[0]:>3}")
