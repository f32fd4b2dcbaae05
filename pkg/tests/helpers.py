"""
Builders for hand-made blocks used across test modules.
"""
from typing import Optional

import numpy as np

from src.synthdata.generator import DatasetBlock

TINY_SIDE = 8


def make_block(mask, block_id: int = 0, z: Optional[int] = None, seed: int = 0) -> DatasetBlock:
    """Block around a given mask with a seeded random image."""
    mask = np.asarray(mask, dtype=np.uint8)
    rng = np.random.default_rng(seed + block_id)
    image = rng.random(mask.shape + (3,))
    return DatasetBlock(
        image=image,
        gt_mask=mask,
        true_fraction=float(mask.mean()),
        seed=seed,
        block_id=block_id,
        low_res_label=z,
    )


def half_mask(side: int = TINY_SIDE, column: Optional[int] = None) -> np.ndarray:
    """Columns left of `column` are 0, the rest 1 (default split in the middle)."""
    column = side // 2 if column is None else column
    mask = np.zeros((side, side), dtype=np.uint8)
    mask[:, column:] = 1
    return mask


def fraction_block(fraction_pixels: int, side: int, block_id: int, z: int) -> DatasetBlock:
    """Block whose first `fraction_pixels` pixels (row-major) are positive."""
    mask = np.zeros(side * side, dtype=np.uint8)
    mask[:fraction_pixels] = 1
    return make_block(mask.reshape(side, side), block_id=block_id, z=z)
