"""
Batch sampling: same-label groups for the inter-instance losses, plain
blocks for the intra-instance loss.
"""
from collections import defaultdict
from typing import Dict, List, Sequence, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.synthdata.generator import DatasetBlock
from src.utils.errors import DataError, NoEligibleLabelError

Batch = List[List[int]]


class BatchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    batch_size: int = Field(30, ge=1)
    group_size: int = Field(15, ge=1)
    groups_per_batch: int = Field(2, ge=1)


class GroupSampler:
    """
    Draws batches of block indices.

    In group mode each group comes from a single low-resolution label picked
    with probability proportional to its block count, and is drawn without
    replacement. Labels with fewer than `group_size` blocks are left out.
    In intra mode a batch is `batch_size` distinct blocks, each its own group.
    """

    def __init__(
        self,
        labels: Sequence[int],
        grouped: bool,
        batch_cfg: BatchConfig,
        rng: np.random.Generator,
    ):
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.labels.size == 0:
            raise DataError("cannot sample from an empty split")
        self.grouped = grouped
        self.batch_cfg = batch_cfg
        self.rng = rng

        self.members: Dict[int, np.ndarray] = {}
        by_label: Dict[int, List[int]] = defaultdict(list)
        for index, z in enumerate(self.labels):
            by_label[int(z)].append(index)
        excluded = sorted(z for z, idx in by_label.items() if len(idx) < batch_cfg.group_size)
        if grouped and excluded:
            logger.warning(
                f"Labels with fewer than {batch_cfg.group_size} blocks are excluded from grouping: {excluded}"
            )
        self.eligible = sorted(z for z, idx in by_label.items() if not grouped or len(idx) >= batch_cfg.group_size)
        if grouped and not self.eligible:
            raise NoEligibleLabelError(f"no label has at least {batch_cfg.group_size} blocks")
        for z in self.eligible:
            self.members[z] = np.asarray(by_label[z], dtype=np.int64)
        counts = np.array([self.members[z].size for z in self.eligible], dtype=np.float64)
        self.label_probs = counts / counts.sum()

    def sample(self) -> Batch:
        if not self.grouped:
            size = min(self.batch_cfg.batch_size, self.labels.size)
            picks = self.rng.choice(self.labels.size, size=size, replace=False)
            return [[int(i)] for i in picks]

        batch: Batch = []
        for _ in range(self.batch_cfg.groups_per_batch):
            z = self.eligible[int(self.rng.choice(len(self.eligible), p=self.label_probs))]
            picks = self.rng.choice(self.members[z], size=self.batch_cfg.group_size, replace=False)
            batch.append([int(i) for i in picks])
        return batch


def sample_groups(
    blocks: Sequence[Union[DatasetBlock, int]],
    mode: str,
    batch_cfg: BatchConfig,
    rng: np.random.Generator,
) -> Batch:
    """
    One batch of index groups for `mode` ("intra", "inter" or "intra_inter").

    `blocks` are dataset blocks or bare low-resolution labels.
    """
    labels = [b.low_res_label if isinstance(b, DatasetBlock) else int(b) for b in blocks]
    return GroupSampler(labels, mode != "intra", batch_cfg, rng).sample()
