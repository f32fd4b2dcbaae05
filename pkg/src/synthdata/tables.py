"""
Count-distribution tables p(c_l | z): per low-resolution bin, the mean (eta) and
population standard deviation (rho) of the label count of each class.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.countstats import CountTarget
from src.synthdata.generator import DatasetBlock
from src.synthdata.labeler import BinScheme
from src.utils.errors import ConfigError, DataError, UnderSampledBinError, UnknownLabelError
from src.utils.json_utils import header_lines

Provenance = Literal["mask_estimated", "visual_approx", "reference"]

MIN_BLOCKS_PER_BIN = 2
# Independent of the annotation draw that uses the same seed
ANNOTATOR_STREAM = 0x414E4E4F

# Positive-class mean and std (percent) per bin, for the default ten bins
REFERENCE_COUNTS: Dict[str, List[tuple]] = {
    "expert": [
        (0.0, 0.1), (1.0, 0.4), (2.0, 0.4), (5.0, 0.8), (6.0, 1.0),
        (8.0, 1.0), (10.0, 1.0), (10.0, 1.0), (20.0, 2.0), (70.0, 5.0),
    ],
    "visual": [
        (4.25, 8.64), (2.45, 6.43), (7.92, 7.39), (7.00, 10.75), (13.00, 14.74),
        (6.69, 8.17), (9.81, 13.19), (16.56, 21.96), (17.72, 27.42), (49.94, 29.13),
    ],
    "mask": [
        (3.39, 7.95), (8.50, 8.67), (11.06, 11.23), (8.78, 11.49), (10.67, 16.08),
        (4.67, 5.15), (11.27, 11.01), (18.55, 23.12), (25.01, 33.76), (52.53, 30.69),
    ],
}


class AnnotatorNoiseConfig(BaseModel):
    """Noise of a visual estimate: f' = clip(f * (1 + N(0, m)) + N(0, a), 0, 1)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    additive_std: float = Field(0.05, ge=0.0)
    multiplicative_std: float = Field(0.0, ge=0.0)

    @property
    def is_zero(self) -> bool:
        return self.additive_std == 0.0 and self.multiplicative_std == 0.0


@dataclass
class CountDistributionTable:
    """
    eta[z, l] and rho[z, l] for every bin z and class l, with the number of
    blocks n[z] each row was estimated from (0 when unknown).
    """

    edges: Sequence[float]
    eta: np.ndarray
    rho: np.ndarray
    n: np.ndarray
    provenance: Provenance = "mask_estimated"
    alpha: float = 1.0
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.edges = tuple(float(e) for e in self.edges)
        self.eta = np.asarray(self.eta, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.n = np.asarray(self.n, dtype=np.int64)
        rows = len(self.edges) - 1
        if self.eta.shape != self.rho.shape or self.eta.shape[0] != rows or self.n.shape != (rows,):
            raise DataError(f"table shapes disagree: eta {self.eta.shape}, rho {self.rho.shape}, n {self.n.shape}")
        if np.any(self.rho < 0.0):
            raise DataError("table rho must be >= 0")
        if not np.allclose(self.eta.sum(axis=1), 1.0, atol=1e-9):
            raise DataError("table eta must sum to 1 over classes in every bin")

    @property
    def num_bins(self) -> int:
        return self.eta.shape[0]

    @property
    def num_classes(self) -> int:
        return self.eta.shape[1]

    @property
    def bins(self) -> BinScheme:
        return BinScheme(edges=self.edges)

    def covers(self, z: int) -> bool:
        return 0 <= int(z) < self.num_bins

    def target(self, z: int, class_id: int) -> CountTarget:
        """Unscaled target of class `class_id` for bin z, carrying the table's alpha."""
        if not self.covers(z):
            raise UnknownLabelError(f"low-resolution label {z} is not in the table ({self.num_bins} bins)")
        if not 0 <= class_id < self.num_classes:
            raise UnknownLabelError(f"class {class_id} is not in the table ({self.num_classes} classes)")
        return CountTarget(eta=float(self.eta[z, class_id]), rho=float(self.rho[z, class_id]), alpha=self.alpha)

    def positive_eta(self) -> np.ndarray:
        return self.eta[:, 1].copy()

    def to_frame(self) -> pd.DataFrame:
        """One row per bin, in the layout of the published count table."""
        data = {
            "z": np.arange(self.num_bins),
            "bin": self.bins.names(),
            "lo": [self.edges[z] for z in range(self.num_bins)],
            "hi": [self.edges[z + 1] for z in range(self.num_bins)],
        }
        for l in range(self.num_classes):
            data[f"eta_{l}"] = self.eta[:, l]
            data[f"rho_{l}"] = self.rho[:, l]
        data["n"] = self.n
        data["provenance"] = [self.provenance] * self.num_bins
        return pd.DataFrame(data)

    def equals(self, other: "CountDistributionTable") -> bool:
        return (
            self.edges == other.edges
            and self.provenance == other.provenance
            and np.array_equal(self.eta, other.eta)
            and np.array_equal(self.rho, other.rho)
            and np.array_equal(self.n, other.n)
        )


def _from_positive(
    bins: BinScheme,
    eta_pos: np.ndarray,
    rho_pos: np.ndarray,
    n: np.ndarray,
    provenance: Provenance,
) -> CountDistributionTable:
    """Binary table; the negative class is the exact complement."""
    eta = np.stack([1.0 - eta_pos, eta_pos], axis=1)
    rho = np.stack([rho_pos, rho_pos], axis=1)
    return CountDistributionTable(edges=bins.edges, eta=eta, rho=rho, n=n, provenance=provenance)


def _capped_by_bin(blocks: Sequence[DatasetBlock], bins: BinScheme, per_z_cap: int) -> Dict[int, List[DatasetBlock]]:
    if per_z_cap < MIN_BLOCKS_PER_BIN:
        raise ConfigError(f"per_z_cap must be >= {MIN_BLOCKS_PER_BIN}, got {per_z_cap}")
    by_bin: Dict[int, List[DatasetBlock]] = defaultdict(list)
    for block in sorted(blocks, key=lambda b: b.block_id):
        if block.low_res_label is None:
            raise DataError(f"block {block.block_id} has no low-resolution label")
        if len(by_bin[block.low_res_label]) < per_z_cap:
            by_bin[block.low_res_label].append(block)

    short = [z for z in range(bins.num_bins) if len(by_bin.get(z, [])) < MIN_BLOCKS_PER_BIN]
    if short:
        raise UnderSampledBinError(short, MIN_BLOCKS_PER_BIN)
    return by_bin


def _aggregate(
    by_bin: Dict[int, List[DatasetBlock]],
    fractions: Dict[int, float],
    bins: BinScheme,
    provenance: Provenance,
) -> CountDistributionTable:
    eta_pos = np.zeros(bins.num_bins)
    rho_pos = np.zeros(bins.num_bins)
    n = np.zeros(bins.num_bins, dtype=np.int64)
    for z in range(bins.num_bins):
        values = np.array([fractions[b.block_id] for b in by_bin[z]])
        eta_pos[z] = values.mean()
        rho_pos[z] = values.std()
        n[z] = values.size
    return _from_positive(bins, eta_pos, rho_pos, n, provenance)


def build_table_mask_estimation(
    blocks: Sequence[DatasetBlock],
    per_z_cap: int = 20,
    bins: BinScheme = BinScheme(),
) -> CountDistributionTable:
    """
    Table from the exact mask fractions of annotated blocks.

    Per bin, the first `per_z_cap` blocks in block_id order are used; eta is
    their mean fraction and rho the population standard deviation.

    Raises:
        UnderSampledBinError: If any bin has fewer than two blocks.
    """
    by_bin = _capped_by_bin(blocks, bins, per_z_cap)
    fractions = {b.block_id: b.true_fraction for group in by_bin.values() for b in group}
    table = _aggregate(by_bin, fractions, bins, "mask_estimated")
    logger.info(f"Built mask-estimated table from {int(table.n.sum())} blocks over {bins.num_bins} bins")
    return table


def build_table_visual_approx(
    blocks: Sequence[DatasetBlock],
    per_z_cap: int = 20,
    noise: AnnotatorNoiseConfig = AnnotatorNoiseConfig(),
    seed: int = 0,
    bins: BinScheme = BinScheme(),
) -> CountDistributionTable:
    """
    Table from visually approximated fractions: each selected block's fraction
    is perturbed by annotator noise (drawn in block_id order) before
    aggregation. Zero noise returns the mask-estimated table.
    """
    if noise.is_zero:
        return build_table_mask_estimation(blocks, per_z_cap, bins)

    by_bin = _capped_by_bin(blocks, bins, per_z_cap)
    rng = np.random.default_rng([int(seed), ANNOTATOR_STREAM])
    fractions: Dict[int, float] = {}
    for block in sorted((b for group in by_bin.values() for b in group), key=lambda b: b.block_id):
        scale = 1.0 + rng.normal(0.0, noise.multiplicative_std)
        shift = rng.normal(0.0, noise.additive_std)
        fractions[block.block_id] = float(np.clip(block.true_fraction * scale + shift, 0.0, 1.0))
    table = _aggregate(by_bin, fractions, bins, "visual_approx")
    logger.info(f"Built visual-approximation table from {int(table.n.sum())} blocks (seed {seed})")
    return table


def draw_annotation_sample(
    blocks: Sequence[DatasetBlock],
    total: int = 167,
    per_z_min: int = 12,
    per_z_cap: int = 20,
    seed: int = 0,
) -> List[DatasetBlock]:
    """
    Pick the blocks an annotator would examine.

    Every bin first receives min(per_z_min, available) blocks; the remaining
    budget is handed out one block at a time over bins in ascending order,
    never exceeding per_z_cap or what a bin holds. Within a bin the blocks are
    taken in a seeded random order.

    Returns:
        Selected blocks sorted by block_id.
    """
    if per_z_min > per_z_cap:
        raise ConfigError(f"per_z_min ({per_z_min}) exceeds per_z_cap ({per_z_cap})")
    by_bin: Dict[int, List[DatasetBlock]] = defaultdict(list)
    for block in sorted(blocks, key=lambda b: b.block_id):
        if block.low_res_label is None:
            raise DataError(f"block {block.block_id} has no low-resolution label")
        by_bin[block.low_res_label].append(block)

    labels = sorted(by_bin)
    rng = np.random.default_rng(seed)
    shuffled = {z: [by_bin[z][i] for i in rng.permutation(len(by_bin[z]))] for z in labels}
    quota = {z: min(per_z_min, len(by_bin[z])) for z in labels}
    if sum(quota.values()) > total:
        raise ConfigError(f"annotation total {total} is below the per-bin minimum over {len(labels)} bins")
    thin = [z for z in labels if len(by_bin[z]) < per_z_min]
    if thin:
        logger.warning(f"Bins with fewer than {per_z_min} blocks available: {thin}")

    remaining = total - sum(quota.values())
    while remaining > 0:
        grew = False
        for z in labels:
            if remaining and quota[z] < min(per_z_cap, len(by_bin[z])):
                quota[z] += 1
                remaining -= 1
                grew = True
        if not grew:
            logger.warning(f"Annotation budget short by {remaining} blocks, every bin is exhausted or capped")
            break

    sample = [block for z in labels for block in shuffled[z][:quota[z]]]
    return sorted(sample, key=lambda b: b.block_id)


def reference_table(variant: str = "expert") -> CountDistributionTable:
    """
    Reference count table for the default ten bins.

    Args:
        variant: "expert" (expert-examined counts), "visual" (visually
            approximated) or "mask" (mask estimated).
    """
    if variant not in REFERENCE_COUNTS:
        raise ConfigError(f"unknown reference table {variant!r}, choose from {sorted(REFERENCE_COUNTS)}")
    counts = np.asarray(REFERENCE_COUNTS[variant]) / 100.0
    table = _from_positive(BinScheme(), counts[:, 0], counts[:, 1], np.zeros(len(counts), dtype=np.int64), "reference")
    table.meta["variant"] = variant
    return table


def save_table(table: CountDistributionTable, path: Path, cfg_hash: str, seed: Optional[int]) -> Path:
    """Write the table as tab-separated text preceded by `# key=value` header lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = header_lines(cfg_hash, seed, provenance=table.provenance, alpha=table.alpha, **table.meta)
    body = table.to_frame().to_csv(sep="\t", index=False, float_format="%.17g", lineterminator="\n")
    path.write_text("\n".join(lines) + "\n" + body)
    logger.info(f"Saved count table to {path}")
    return path


def load_table(path: Path) -> CountDistributionTable:
    """Read a table written by save_table."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"table file not found: {path}")
    text = path.read_text()
    header = {}
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            key, value = line[2:].split("=", 1)
            header[key] = value
    frame = pd.read_csv(StringIO(text), sep="\t", comment="#", float_precision="round_trip")
    if frame.empty:
        raise DataError(f"{path}: empty table")

    classes = sorted(int(c.split("_")[1]) for c in frame.columns if c.startswith("eta_"))
    edges = list(frame["lo"]) + [float(frame["hi"].iloc[-1])]
    table = CountDistributionTable(
        edges=edges,
        eta=frame[[f"eta_{l}" for l in classes]].to_numpy(),
        rho=frame[[f"rho_{l}" for l in classes]].to_numpy(),
        n=frame["n"].to_numpy(),
        provenance=header.get("provenance", frame["provenance"].iloc[0]),
        alpha=float(header.get("alpha", 1.0)),
    )
    if "variant" in header:
        table.meta["variant"] = header["variant"]
    return table
