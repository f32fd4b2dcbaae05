"""
Sweep of the rho scale alpha for the combined intra+inter loss.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from loguru import logger

from src.evalmetrics.evaluate import EvalConfig, evaluate_model
from src.lsrloss import LossMode, matched_target
from src.segmodel import SegModelConfig
from src.synthdata.dataset import Dataset
from src.synthdata.tables import CountDistributionTable
from src.trainer.trainer import TrainConfig, train
from src.utils.errors import ConfigError, NumericalError

DEFAULT_ALPHAS = (0.2, 0.4, 0.6, 0.8, 1.0)


def scaled_target_error(table: CountDistributionTable, mode: LossMode) -> float:
    """
    Largest |rho_matched - alpha * rho| over the table's bins and classes, where
    rho_matched is the std the loss of `mode` actually matches against.
    """
    return float(max(
        abs(matched_target(table, z, l, mode).rho - mode.alpha * table.rho[z, l])
        for z in range(table.num_bins)
        for l in range(table.num_classes)
    ))


@dataclass
class AlphaSweep:
    """One row per alpha with the evaluation split's pooled metrics."""

    rows: pd.DataFrame
    split: str

    @property
    def best_alpha(self) -> float:
        return float(self.rows.loc[self.rows["masked_iou"].idxmax(), "alpha"])

    def wide(self) -> pd.DataFrame:
        """Alphas as columns, masked IoU and DICE as rows."""
        wide = self.rows.set_index("alpha")[["masked_iou", "masked_dice"]].T
        wide.index = ["Masked IoU", "Masked DICE"]
        wide.columns = [f"{a:g}" for a in wide.columns]
        return wide


def ablate_alpha(
    base_config: TrainConfig,
    alphas: Sequence[float],
    dataset: Dataset,
    table: CountDistributionTable,
    model_cfg: SegModelConfig = SegModelConfig(),
    eval_cfg: EvalConfig = EvalConfig(),
    out_dir: Optional[Path] = None,
) -> AlphaSweep:
    """
    Train and evaluate one intra+inter model per alpha on the same data and seed.

    Metrics come from the test split when present, otherwise validation.

    Raises:
        ConfigError: If the sweep is empty or an alpha is outside (0, 1].
        NumericalError: If a matched target std differs from alpha * rho.
    """
    if not alphas:
        raise ConfigError("ablate_alpha needs at least one alpha")
    bad = [a for a in alphas if not 0.0 < a <= 1.0]
    if bad:
        raise ConfigError(f"alphas must lie in (0, 1], got {bad}")
    split = "test" if dataset.splits.get("test") else "val"

    rows: List[dict] = []
    for alpha in alphas:
        error = scaled_target_error(table, LossMode(name="intra_inter", alpha=alpha))
        if error > 0.0:
            raise NumericalError(f"matched target std is off alpha * rho by {error:g} for alpha {alpha:g}")
        config = base_config.model_copy(update={"mode": "intra_inter", "alpha": float(alpha)})
        run_dir = Path(out_dir) / f"alpha_{alpha:g}" if out_dir is not None else None
        params, _ = train(config, dataset, table, model_cfg, eval_cfg, run_dir)
        metrics = evaluate_model(params, dataset.split(split), eval_cfg)
        logger.info(f"alpha {alpha:g}: {split} masked IoU {metrics.masked_iou:.4f}")
        rows.append({"alpha": float(alpha), **metrics.to_dict(), "rho_scale_error": error})

    sweep = AlphaSweep(rows=pd.DataFrame(rows), split=split)
    logger.info(f"Best alpha on {split}: {sweep.best_alpha:g}")
    return sweep
