"""
Overlap metrics and the boundary band they can be restricted to.
"""
from dataclasses import dataclass
from typing import Literal, Optional, Tuple, Union

import numpy as np
from scipy.ndimage import distance_transform_cdt, distance_transform_edt

from src.utils.errors import ConfigError, DataError, EmptyBandError, ShapeError

Distance = Literal["euclidean", "chessboard"]


@dataclass(frozen=True)
class EvalBand:
    """Pixels within `radius` of a ground-truth class boundary."""

    radius: float
    mask: np.ndarray
    distance: Distance = "euclidean"

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def _binary(name: str, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        return mask
    values = np.unique(mask)
    if not np.all(np.isin(values, (0, 1))):
        raise DataError(f"{name} must be binary, found values {values[:5].tolist()}")
    return mask.astype(bool)


def _check_shapes(op: str, *masks: np.ndarray) -> None:
    for other in masks[1:]:
        if np.shape(other) != np.shape(masks[0]):
            raise ShapeError(op, np.shape(masks[0]), np.shape(other))


def overlap_counts(pred: np.ndarray, gt: np.ndarray) -> Tuple[int, int, int]:
    """(|P and G|, |P|, |G|) of two boolean masks."""
    return int(np.count_nonzero(pred & gt)), int(np.count_nonzero(pred)), int(np.count_nonzero(gt))


def scores_from_counts(intersection: int, pred_total: int, gt_total: int) -> Tuple[float, float]:
    """IoU and DICE from overlap counts; both masks empty scores (1.0, 1.0)."""
    denominator = pred_total + gt_total
    if denominator == 0:
        return 1.0, 1.0
    union = denominator - intersection
    return intersection / union, 2.0 * intersection / denominator


def iou_dice(pred_mask: np.ndarray, gt_mask: np.ndarray) -> Tuple[float, float]:
    """
    IoU |P & G| / |P | G| and DICE 2 |P & G| / (|P| + |G|) of binary masks.

    Raises:
        ShapeError: If the shapes differ.
        DataError: If a mask holds values other than 0 and 1.
    """
    _check_shapes("iou_dice", pred_mask, gt_mask)
    return scores_from_counts(*overlap_counts(_binary("pred_mask", pred_mask), _binary("gt_mask", gt_mask)))


def class_boundary(gt_mask: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour of the other class, on both sides."""
    gt = _binary("gt_mask", gt_mask)
    boundary = np.zeros(gt.shape, dtype=bool)
    vertical = gt[1:, :] != gt[:-1, :]
    horizontal = gt[:, 1:] != gt[:, :-1]
    boundary[1:, :] |= vertical
    boundary[:-1, :] |= vertical
    boundary[:, 1:] |= horizontal
    boundary[:, :-1] |= horizontal
    return boundary


def boundary_band(gt_mask: np.ndarray, radius: float, distance: Distance = "euclidean") -> EvalBand:
    """
    Band of pixels whose distance to the nearest boundary pixel is <= radius.

    Args:
        gt_mask: Binary ground truth (H, W).
        radius: Band radius in pixels, >= 0.
        distance: "euclidean" (exact transform) or "chessboard".

    Raises:
        EmptyBandError: If the ground truth is a single class.
    """
    if radius < 0:
        raise ConfigError(f"band radius must be >= 0, got {radius}")
    boundary = class_boundary(gt_mask)
    if not boundary.any():
        raise EmptyBandError("ground truth has a single class, the boundary band is empty")

    if distance == "euclidean":
        dist = distance_transform_edt(~boundary)
    elif distance == "chessboard":
        dist = distance_transform_cdt(~boundary, metric="chessboard")
    else:
        raise ConfigError(f"unknown distance {distance!r}")
    return EvalBand(radius=radius, mask=dist <= radius, distance=distance)


def masked_iou_dice(pred: np.ndarray, gt: np.ndarray, band: Union[EvalBand, np.ndarray]) -> Tuple[float, float]:
    """
    iou_dice over the pixels of `band` only.

    Raises:
        EmptyBandError: If the band selects no pixel.
    """
    band_mask = band.mask if isinstance(band, EvalBand) else _binary("band", band)
    _check_shapes("masked_iou_dice", pred, gt, band_mask)
    if not band_mask.any():
        raise EmptyBandError("masked_iou_dice: the band is empty")
    return iou_dice(np.asarray(pred)[band_mask], np.asarray(gt)[band_mask])


@dataclass
class OverlapAccumulator:
    """Pooled (micro-averaged) overlap counts over many blocks."""

    intersection: int = 0
    pred_total: int = 0
    gt_total: int = 0

    def add(self, pred: np.ndarray, gt: np.ndarray, region: Optional[np.ndarray] = None) -> None:
        pred, gt = _binary("pred", pred), _binary("gt", gt)
        if region is not None:
            pred, gt = pred[region], gt[region]
        i, p, g = overlap_counts(pred, gt)
        self.intersection += i
        self.pred_total += p
        self.gt_total += g

    def scores(self) -> Tuple[float, float]:
        return scores_from_counts(self.intersection, self.pred_total, self.gt_total)
