"""
Synthetic image blocks with ground-truth masks.

A block's mask is a smooth random blob field cut at the level that keeps a
sampled fraction of pixels positive; its image paints the two classes in
different colours and adds smoothed texture and pixel noise.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.ndimage import gaussian_filter

from src.utils.errors import DataError


class SplitSizes(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train: int = Field(2000, ge=0)
    val: int = Field(200, ge=0)
    test: int = Field(400, ge=0)

    def items(self) -> List[Tuple[str, int]]:
        return [("train", self.train), ("val", self.val), ("test", self.test)]


class GeneratorConfig(BaseModel):
    """Appearance and size of generated blocks."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    side: int = Field(32, ge=2)
    channels: int = Field(3, ge=1)
    blob_sigma: float = Field(3.0, gt=0.0)
    fraction_a: float = Field(0.8, gt=0.0)
    fraction_b: float = Field(0.8, gt=0.0)
    threshold: Optional[float] = None
    positive_color: Tuple[float, ...] = (0.62, 0.38, 0.58)
    negative_color: Tuple[float, ...] = (0.78, 0.62, 0.72)
    texture_sigma: float = Field(1.5, gt=0.0)
    texture_amplitude: float = Field(0.10, ge=0.0)
    pixel_noise: float = Field(0.08, ge=0.0)
    splits: SplitSizes = SplitSizes()

    @field_validator("positive_color", "negative_color")
    @classmethod
    def _unit_color(cls, value):
        if any(not 0.0 <= c <= 1.0 for c in value):
            raise ValueError("colour components must lie in [0, 1]")
        return tuple(float(c) for c in value)

    @model_validator(mode="after")
    def _color_channels(self) -> "GeneratorConfig":
        for name in ("positive_color", "negative_color"):
            if len(getattr(self, name)) != self.channels:
                raise ValueError(f"{name} needs {self.channels} components")
        return self


@dataclass
class DatasetBlock:
    """
    One image block.

    `image` is (H, W, C) in [0, 1]; `gt_mask` is (H, W) uint8 with 1 for the
    positive class. `low_res_label` is None until the labeler has run.
    """

    image: np.ndarray
    gt_mask: np.ndarray
    true_fraction: float
    seed: int
    block_id: int = 0
    low_res_label: Optional[int] = None

    def __post_init__(self):
        if self.image.shape[:2] != self.gt_mask.shape:
            raise DataError(f"block {self.block_id}: image {self.image.shape} and mask {self.gt_mask.shape} differ")
        if abs(self.true_fraction - float(self.gt_mask.mean())) > 1e-12:
            raise DataError(f"block {self.block_id}: true_fraction does not match the mask")

    @property
    def side(self) -> int:
        return int(self.gt_mask.shape[0])

    def channels_first(self) -> np.ndarray:
        """Image as (C, H, W), the layout the segmentation model consumes."""
        return np.ascontiguousarray(self.image.transpose(2, 0, 1))

    def sub_fractions(self, tiles: int) -> List[float]:
        """Positive fraction of each tile of an s x s grid, s*s == tiles, row-major."""
        s = int(round(np.sqrt(tiles)))
        if s * s != tiles:
            raise DataError(f"sub-patch count {tiles} is not a perfect square")
        rows = np.array_split(self.gt_mask, s, axis=0)
        return [float(tile.mean()) for row in rows for tile in np.array_split(row, s, axis=1)]


def _smooth_field(rng: np.random.Generator, side: int, sigma: float) -> np.ndarray:
    field = gaussian_filter(rng.standard_normal((side, side)), sigma=sigma, mode="reflect")
    std = field.std()
    return (field - field.mean()) / std if std > 0 else field - field.mean()


def generate_mask(rng: np.random.Generator, cfg: GeneratorConfig) -> np.ndarray:
    """
    Binary blob mask.

    With `cfg.threshold` unset, a target fraction t ~ Beta(a, b) is drawn and the
    round(t * n) highest pixels of the field are positive (ties broken by pixel
    order). Otherwise pixels of the standardized field above the threshold are
    positive.
    """
    field = _smooth_field(rng, cfg.side, cfg.blob_sigma)
    if cfg.threshold is not None:
        return (field > cfg.threshold).astype(np.uint8)

    n = field.size
    k = int(round(rng.beta(cfg.fraction_a, cfg.fraction_b) * n))
    order = np.argsort(-field.reshape(-1), kind="stable")
    mask = np.zeros(n, dtype=np.uint8)
    mask[order[:k]] = 1
    return mask.reshape(field.shape)


def render_image(rng: np.random.Generator, mask: np.ndarray, cfg: GeneratorConfig) -> np.ndarray:
    """Colour by class, then smoothed texture and white pixel noise, clipped to [0, 1]."""
    pos = np.asarray(cfg.positive_color)
    neg = np.asarray(cfg.negative_color)
    image = np.where(mask[..., None] == 1, pos, neg)

    texture = gaussian_filter(
        rng.standard_normal(image.shape), sigma=(cfg.texture_sigma, cfg.texture_sigma, 0.0), mode="reflect"
    )
    std = texture.std()
    if std > 0:
        image = image + cfg.texture_amplitude * texture / std
    image = image + rng.normal(0.0, cfg.pixel_noise, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def generate_block(seed: int, cfg: GeneratorConfig, block_id: int = 0) -> DatasetBlock:
    """
    Generate one block, without a low-resolution label.

    Args:
        seed: Block seed; equal seeds give identical blocks.
        cfg: Generator configuration.
        block_id: Identifier stored on the block.

    Returns:
        DatasetBlock with true_fraction equal to the mask mean.
    """
    rng = np.random.default_rng(seed)
    mask = generate_mask(rng, cfg)
    image = render_image(rng, mask, cfg)
    return DatasetBlock(
        image=image,
        gt_mask=mask,
        true_fraction=float(mask.mean()),
        seed=int(seed),
        block_id=block_id,
    )
