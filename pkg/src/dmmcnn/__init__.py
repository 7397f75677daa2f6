"""Multi-task multi-label attribute classification with a numpy training engine."""

__version__ = "0.1.0"

from .data import Dataset, DatasetSplit, SynthConfig, generate_synthetic, read_split, write_split
from .evaluation import EvalReport, compare_schemes, evaluate
from .losses import fac_loss_per_attribute, fld_loss, joint_loss
from .network import (AttributeSpec, BackboneConfig, DmmNetwork, HeadConfig, build_network,
                      load_checkpoint, save_checkpoint)
from .scheduler import SchedulerState, threshold_step, trend_weights
from .spp import SpatialPyramidPool, spp_forward
from .trainer import VARIANTS, TrainConfig, TrainLog, make_network, train

__all__ = [
    "AttributeSpec", "BackboneConfig", "Dataset", "DatasetSplit", "DmmNetwork", "EvalReport",
    "HeadConfig", "SchedulerState", "SpatialPyramidPool", "SynthConfig", "TrainConfig",
    "TrainLog", "VARIANTS", "build_network", "compare_schemes", "evaluate",
    "fac_loss_per_attribute", "fld_loss", "generate_synthetic", "joint_loss", "load_checkpoint",
    "make_network", "read_split", "save_checkpoint", "spp_forward", "threshold_step", "train",
    "trend_weights", "write_split",
]
