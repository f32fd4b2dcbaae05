"""
Main entry point for training runs and the alpha sweep.
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

from src.evalmetrics.evaluate import EvalConfig
from src.segmodel import SegModelConfig
from src.synthdata.dataset import load_dataset
from src.synthdata.tables import draw_annotation_sample, load_table
from src.trainer.ablation import DEFAULT_ALPHAS, ablate_alpha
from src.trainer.baselines import train_supervised_baseline
from src.trainer.trainer import TrainConfig, train
from src.utils.cli import (
    CommandParser,
    add_config_argument,
    add_seed_argument,
    load_config_file,
    run_guarded,
    section,
)
from src.utils.errors import ConfigError
from src.utils.json_utils import config_hash, header_lines


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(description="Label super resolution training")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command to run")

    train_parser = subparsers.add_parser("train", help="Train one model")
    add_config_argument(train_parser)
    train_parser.add_argument("--data", type=Path, required=True, help="Dataset directory")
    train_parser.add_argument("--table", type=Path, default=None, help="Count table (not needed for supervised)")
    train_parser.add_argument(
        "--mode",
        choices=["intra", "inter", "intra_inter", "supervised"],
        default=None,
        help="Loss to train with; supervised trains on an annotation sample with pixel labels",
    )
    train_parser.add_argument("--alpha", type=float, default=None, help="Scale of the target std")
    train_parser.add_argument("--epochs", type=int, default=None, help="Number of epochs")
    train_parser.add_argument("--out", type=Path, required=True, help="Run directory (checkpoint and log)")
    add_seed_argument(train_parser)

    ablate_parser = subparsers.add_parser("ablate-alpha", help="Sweep alpha for the intra+inter loss")
    add_config_argument(ablate_parser)
    ablate_parser.add_argument("--data", type=Path, required=True, help="Dataset directory")
    ablate_parser.add_argument("--table", type=Path, required=True, help="Count table")
    ablate_parser.add_argument(
        "--alphas",
        type=float,
        nargs="+",
        default=list(DEFAULT_ALPHAS),
        help="Alpha values to sweep",
    )
    ablate_parser.add_argument("--epochs", type=int, default=None, help="Number of epochs per run")
    ablate_parser.add_argument("--out", type=Path, required=True, help="Output directory")
    add_seed_argument(ablate_parser)
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments.

    Returns:
        Parsed arguments namespace.
    """
    return build_parser().parse_args(argv)


def load_configs(args: argparse.Namespace) -> Dict[str, Any]:
    """Typed configs from the YAML defaults, the --config file and the flags."""
    run_config = load_config_file(args.config)
    train_section = section(run_config, "train")
    train_section["seed"] = args.seed
    for flag in ("mode", "alpha", "epochs"):
        value = getattr(args, flag, None)
        if value is not None:
            train_section[flag] = value
    return {
        "run": run_config,
        "train": TrainConfig(**train_section),
        "model": SegModelConfig(**section(run_config, "model")),
        "eval": EvalConfig(**section(run_config, "eval")),
    }


def run_train(args: argparse.Namespace) -> int:
    configs = load_configs(args)
    config: TrainConfig = configs["train"]
    dataset = load_dataset(args.data)

    if config.mode == "supervised":
        table_cfg = section(configs["run"], "table")
        subset = draw_annotation_sample(
            dataset.split("train"),
            total=table_cfg["annotation_total"],
            per_z_min=table_cfg["per_z_min"],
            per_z_cap=table_cfg["per_z_cap"],
            seed=args.seed,
        )
        _, log = train_supervised_baseline(
            config,
            subset,
            configs["model"],
            configs["eval"],
            val_blocks=dataset.splits.get("val", []),
            test_blocks=dataset.splits.get("test", []),
            out_dir=args.out,
        )
    else:
        if args.table is None:
            raise ConfigError(f"--table is required for mode {config.mode}")
        table = load_table(args.table)
        _, log = train(config, dataset, table, configs["model"], configs["eval"], out_dir=args.out)

    best = log.best_eval()
    if best is not None:
        print(f"best val masked_iou={best['masked_iou']:.6f} epoch={best['epoch']}")
    if log.final:
        print(f"test masked_iou={log.final['masked_iou']:.6f} masked_dice={log.final['masked_dice']:.6f}")
    logger.info(f"Run written to {args.out}")
    return 0


def run_ablate(args: argparse.Namespace) -> int:
    configs = load_configs(args)
    dataset = load_dataset(args.data)
    table = load_table(args.table)
    sweep = ablate_alpha(configs["train"], args.alphas, dataset, table, configs["model"], configs["eval"], args.out)

    out = Path(args.out) / "alpha_sweep.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = header_lines(
        config_hash({"train": configs["train"], "alphas": args.alphas, "table": str(args.table)}),
        args.seed,
        split=sweep.split,
        best_alpha=f"{sweep.best_alpha:g}",
    )
    wide = sweep.wide().to_csv(sep="\t", float_format="%.4f", lineterminator="\n")
    long = sweep.rows.to_csv(sep="\t", index=False, float_format="%.17g", lineterminator="\n")
    out.write_text("\n".join(lines) + "\n" + wide + "\n" + long)
    print(sweep.wide().to_string(float_format=lambda v: f"{v:.4f}"))
    print(f"best alpha={sweep.best_alpha:g}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function for training and the alpha sweep.
    """
    args = parse_args(argv)
    handler = run_train if args.command == "train" else run_ablate
    return run_guarded(lambda: handler(args), args.command)


if __name__ == "__main__":
    sys.exit(main())
