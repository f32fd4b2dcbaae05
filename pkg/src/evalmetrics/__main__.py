"""
Main entry point for evaluation and result reports.
"""
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.evalmetrics.evaluate import EvalConfig, evaluate_split, predict_masks
from src.evalmetrics.report import (
    evaluate_runs,
    overlay_mosaic,
    parse_run,
    results_frame,
    save_overlay,
    write_results,
)
from src.segmodel import load_checkpoint
from src.synthdata.dataset import load_dataset
from src.synthdata.tables import load_table
from src.trainer.baselines import lowres_baseline_masks
from src.trainer.trainer import check_compatible
from src.utils.cli import (
    CommandParser,
    add_config_argument,
    add_seed_argument,
    load_config_file,
    run_guarded,
    section,
)
from src.utils.errors import ConfigError
from src.utils.json_utils import config_hash

RESULTS_NAME = "results.tsv"
OVERLAY_NAME = "overlay.png"


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(description="Label super resolution evaluation")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command to run")

    eval_parser = subparsers.add_parser("eval", help="Score one set of predictions on a split")
    add_config_argument(eval_parser)
    eval_parser.add_argument("--data", type=Path, required=True, help="Dataset directory")
    eval_parser.add_argument("--split", default="test", help="Split to score (default: test)")
    source = eval_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", type=Path, help="Model checkpoint to score")
    source.add_argument("--oracle", action="store_true", help="Score the ground truth against itself")
    source.add_argument("--lowres", action="store_true", help="Score the low-resolution prediction (needs --table)")
    eval_parser.add_argument("--table", type=Path, default=None, help="Count table for --lowres")
    eval_parser.add_argument("--out", type=Path, default=None, help="Optional file for the result row")
    add_seed_argument(eval_parser)

    report_parser = subparsers.add_parser("report", help="Results table and boundary overlays for trained runs")
    add_config_argument(report_parser)
    report_parser.add_argument("--data", type=Path, required=True, help="Dataset directory")
    report_parser.add_argument("--table", type=Path, required=True, help="Count table for the low-resolution row")
    report_parser.add_argument(
        "--run",
        action="append",
        default=[],
        metavar="KIND:PATH",
        help="Checkpoint of a trained run, e.g. intra:runs/intra/best.ckpt (repeatable)",
    )
    report_parser.add_argument("--split", default="test", help="Split to score (default: test)")
    report_parser.add_argument("--layout", choices=["auto", "short", "full"], default="auto", help="Table layout")
    report_parser.add_argument("--out", type=Path, required=True, help="Output directory")
    add_seed_argument(report_parser)
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments.

    Returns:
        Parsed arguments namespace.
    """
    return build_parser().parse_args(argv)


def run_eval(args: argparse.Namespace) -> int:
    eval_cfg = EvalConfig(**section(load_config_file(args.config), "eval"))
    dataset = load_dataset(args.data, splits=[args.split])
    blocks = dataset.split(args.split)

    if args.oracle:
        method, masks = "oracle", [b.gt_mask.copy() for b in blocks]
    elif args.lowres:
        if args.table is None:
            raise ConfigError("--lowres needs --table")
        method = "lowres"
        masks = lowres_baseline_masks(blocks, load_table(args.table), eval_cfg.threshold)
    else:
        params, header = load_checkpoint(args.checkpoint)
        check_compatible(params.config, dataset)
        method = header.get("mode", args.checkpoint.stem)
        masks = predict_masks(params, blocks, eval_cfg.threshold)

    metrics = evaluate_split(blocks, masks, eval_cfg)
    row = f"{method}\t{metrics.masked_iou:.4f}\t{metrics.masked_dice:.4f}\t{metrics.iou:.4f}\t{metrics.dice:.4f}"
    print("method\tmasked_iou\tmasked_dice\tiou\tdice")
    print(row)
    if args.out is not None:
        cfg_hash = config_hash({"eval": eval_cfg, "method": method, "split": args.split, "data": dataset.config_hash()})
        frame = pd.DataFrame([{"method": method, **metrics.to_dict()}])
        write_results(frame, args.out, cfg_hash, args.seed, split=args.split)
    return 0


def run_report(args: argparse.Namespace) -> int:
    eval_cfg = EvalConfig(**section(load_config_file(args.config), "eval"))
    dataset = load_dataset(args.data, splits=[args.split])
    blocks = dataset.split(args.split)
    table = load_table(args.table)

    predictions: Dict[str, List[np.ndarray]] = {
        "lowres": lowres_baseline_masks(blocks, table, eval_cfg.threshold),
    }
    runs = dict(parse_run(value) for value in args.run)
    for kind, path in runs.items():
        params, _ = load_checkpoint(path)
        check_compatible(params.config, dataset)
        predictions[kind] = predict_masks(params, blocks, eval_cfg.threshold)
        logger.info(f"Predicted {len(blocks)} blocks with the {kind} run")

    metrics = evaluate_runs(blocks, predictions, eval_cfg)
    frame = results_frame(metrics, args.layout)
    cfg_hash = config_hash({
        "eval": eval_cfg,
        "split": args.split,
        "data": dataset.config_hash(),
        "runs": {kind: str(path) for kind, path in sorted(runs.items())},
    })
    out = Path(args.out)
    write_results(frame, out / RESULTS_NAME, cfg_hash, args.seed, split=args.split)
    mosaic = overlay_mosaic(blocks, predictions, eval_cfg.overlay_tiles)
    save_overlay(mosaic, out / OVERLAY_NAME, cfg_hash, args.seed, split=args.split)
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function for evaluation and reports.
    """
    args = parse_args(argv)
    handler = run_eval if args.command == "eval" else run_report
    return run_guarded(lambda: handler(args), args.command)


if __name__ == "__main__":
    sys.exit(main())
