"""
Training package: RMSprop, batch sampling, the training loop, baselines and
the alpha sweep.
"""
from src.trainer.ablation import DEFAULT_ALPHAS, AlphaSweep, ablate_alpha
from src.trainer.baselines import lowres_baseline_masks, train_supervised_baseline
from src.trainer.optimizer import RMSpropState, rmsprop_step
from src.trainer.runlog import RunLog
from src.trainer.sampling import BatchConfig, GroupSampler, sample_groups
from src.trainer.trainer import TrainConfig, build_sampler, make_groups, train

__all__ = [
    "DEFAULT_ALPHAS",
    "AlphaSweep",
    "BatchConfig",
    "GroupSampler",
    "RMSpropState",
    "RunLog",
    "TrainConfig",
    "ablate_alpha",
    "build_sampler",
    "lowres_baseline_masks",
    "make_groups",
    "rmsprop_step",
    "sample_groups",
    "train",
    "train_supervised_baseline",
]
