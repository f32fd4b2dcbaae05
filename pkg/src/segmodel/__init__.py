"""
Segmentation network package.

A small U-Net-like encoder-decoder producing per-pixel class probabilities at
input resolution, plus parameter initialization and checkpoint files.
"""
from src.segmodel.model import ModelParams, SegModelConfig, init_params, param_count, predict, zero_params
from src.segmodel.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ModelParams",
    "SegModelConfig",
    "init_params",
    "param_count",
    "predict",
    "zero_params",
    "load_checkpoint",
    "save_checkpoint",
]
