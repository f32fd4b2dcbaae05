"""
Evaluation package: IoU/DICE, boundary bands, split scores and reports.
"""
from src.evalmetrics.metrics import (
    EvalBand,
    OverlapAccumulator,
    boundary_band,
    class_boundary,
    iou_dice,
    masked_iou_dice,
)
from src.evalmetrics.evaluate import EvalConfig, SplitMetrics, evaluate_model, evaluate_split, predict_masks
from src.evalmetrics.report import overlay_mosaic, overlay_tile, results_frame, write_results

__all__ = [
    "EvalBand",
    "EvalConfig",
    "OverlapAccumulator",
    "SplitMetrics",
    "boundary_band",
    "class_boundary",
    "evaluate_model",
    "evaluate_split",
    "iou_dice",
    "masked_iou_dice",
    "overlay_mosaic",
    "overlay_tile",
    "results_frame",
    "predict_masks",
    "write_results",
]
