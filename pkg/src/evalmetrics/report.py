"""
Result tables and boundary-overlay mosaics.
"""
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from src.evalmetrics.evaluate import EvalConfig, SplitMetrics, evaluate_split
from src.evalmetrics.metrics import class_boundary
from src.synthdata.generator import DatasetBlock
from src.utils.errors import ConfigError, DataError
from src.utils.json_utils import header_fields, header_lines

# Row order and display names; the first block is the short results layout
METHODS = {
    "lowres": "Low resolution model",
    "intra": "Intra-instance",
    "intra_inter": "Intra+inter-instance",
    "inter": "Inter-instance",
    "supervised": "Limited high-res supervision",
    "intra_visual": "Intra-instance (visual table)",
    "intra_inter_visual": "Intra+inter-instance (visual table)",
}
SHORT_LAYOUT = ("lowres", "intra", "intra_inter")

OVERLAY_COLORS = {
    "lowres": (0, 0, 255),
    "gt": (0, 255, 0),
    "intra": (255, 0, 0),
    "intra_inter": (255, 255, 0),
}
OVERLAY_SCALE = 4
OVERLAY_GAP = 2


def parse_run(value: str) -> tuple:
    """'KIND:PATH' -> (kind, Path)."""
    kind, sep, path = value.partition(":")
    if not sep or not path:
        raise ConfigError(f"run must look like KIND:PATH, got {value!r}")
    if kind not in METHODS or kind == "lowres":
        raise ConfigError(f"unknown run kind {kind!r}; choose from {[k for k in METHODS if k != 'lowres']}")
    return kind, Path(path)


def results_frame(metrics: Mapping[str, SplitMetrics], layout: str = "auto") -> pd.DataFrame:
    """
    One row per method in the fixed method order.

    The short layout has the low-resolution baseline and the two main losses
    with masked scores only; the full layout adds every other run and the
    unmasked scores. "auto" picks the short one when nothing else was given.
    """
    if layout == "auto":
        layout = "short" if set(metrics) <= set(SHORT_LAYOUT) else "full"
    if layout not in ("short", "full"):
        raise ConfigError(f"unknown report layout {layout!r}")

    kinds = [k for k in METHODS if k in metrics and (layout == "full" or k in SHORT_LAYOUT)]
    if not kinds:
        raise DataError("no runs to report")
    rows = []
    for kind in kinds:
        m = metrics[kind]
        row = {"method": METHODS[kind], "masked_iou": m.masked_iou, "masked_dice": m.masked_dice}
        if layout == "full":
            row.update({"iou": m.iou, "dice": m.dice})
        rows.append(row)
    return pd.DataFrame(rows)


def evaluate_runs(
    blocks: Sequence[DatasetBlock],
    predictions: Mapping[str, Sequence[np.ndarray]],
    cfg: EvalConfig = EvalConfig(),
) -> Dict[str, SplitMetrics]:
    return {kind: evaluate_split(blocks, masks, cfg) for kind, masks in predictions.items()}


def write_results(frame: pd.DataFrame, path: Path, cfg_hash: str, seed: Optional[int], **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = frame.to_csv(sep="\t", index=False, float_format="%.4f", lineterminator="\n")
    path.write_text("\n".join(header_lines(cfg_hash, seed, **extra)) + "\n" + body)
    logger.info(f"Saved results table to {path}")
    return path


def overlay_tile(block: DatasetBlock, masks: Mapping[str, np.ndarray]) -> np.ndarray:
    """
    Block image with class boundaries drawn on top: low-resolution prediction,
    ground truth, intra and intra+inter predictions, later layers winning.
    """
    tile = np.round(block.image[..., :3] * 255).astype(np.uint8)
    if tile.shape[-1] < 3:
        tile = np.repeat(tile[..., :1], 3, axis=-1)
    layers = {"gt": block.gt_mask, **masks}
    for kind, color in OVERLAY_COLORS.items():
        if kind not in layers:
            continue
        if kind == "lowres":
            # Block-level prediction: outline the block when it is positive
            edge = class_boundary(np.pad(layers[kind], 1))[1:-1, 1:-1]
        else:
            edge = class_boundary(layers[kind])
        tile[edge] = color
    return tile


def overlay_mosaic(
    blocks: Sequence[DatasetBlock],
    predictions: Mapping[str, Sequence[np.ndarray]],
    tiles: int = 4,
) -> Image.Image:
    """
    Row of overlay tiles for the first `tiles` blocks whose ground truth has a
    boundary, upscaled with nearest-neighbour sampling.
    """
    chosen: List[int] = [i for i, b in enumerate(blocks) if 0 < b.gt_mask.sum() < b.gt_mask.size][:tiles]
    if not chosen:
        raise DataError("no block with both classes to draw")
    side = blocks[chosen[0]].side * OVERLAY_SCALE
    mosaic = Image.new("RGB", (len(chosen) * side + (len(chosen) - 1) * OVERLAY_GAP, side), (255, 255, 255))
    for position, i in enumerate(chosen):
        masks = {kind: preds[i] for kind, preds in predictions.items() if kind in OVERLAY_COLORS}
        tile = Image.fromarray(overlay_tile(blocks[i], masks), mode="RGB")
        tile = tile.resize((side, side), resample=Image.NEAREST)
        mosaic.paste(tile, (position * (side + OVERLAY_GAP), 0))
    return mosaic


def save_overlay(image: Image.Image, path: Path, cfg_hash: str, seed: Optional[int], **extra) -> Path:
    """Write the mosaic as PNG with the provenance header in tEXt chunks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    info = PngInfo()
    for key, value in header_fields(cfg_hash, seed, **extra).items():
        info.add_text(key, str(value))
    image.save(path, format="PNG", pnginfo=info)
    logger.info(f"Saved overlay to {path}")
    return path
