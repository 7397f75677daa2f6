# %% [markdown]
# # The seven ablation variants
#
# Each variant switches four mechanisms on or off: the landmark branch (FLD),
# dynamic loss weights (DW), adaptive thresholds (AT) and attribute grouping
# (AG).  Without grouping a single three-level pyramid head predicts every
# attribute.

# %%
from dmmcnn.trainer import VARIANTS

print(f"{'variant':<11} FLD DW AT AG")
for name, flags in VARIANTS.items():
    print(f"{name:<11} " + "  ".join(str(int(f)) for f in flags))

# %% [markdown]
# A small-budget run of the whole grid.  At 400 iterations no variant has
# separated the rare attribute yet, so its balanced accuracy sits at 0.5
# everywhere.  The variants with trend-based weights trail on mean accuracy
# because their weights shrink as the losses settle.

# %%
from dmmcnn import SynthConfig, TrainConfig, generate_synthetic
from dmmcnn.trainer import run_ablation_suite

data = generate_synthetic(SynthConfig(seed=1, n_train=800, n_val=300, n_test=300))
rows = run_ablation_suite(data, TrainConfig(max_iters=400, base_lr=0.02, seed=1))
for r in rows:
    bal = r["report"].balanced_accuracy
    print(f"{r['variant']:<11} mean accuracy {r['mean_accuracy']:.3f}  rare-attribute balanced {bal[-1]:.3f}")
