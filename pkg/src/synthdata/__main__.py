"""
Main entry point for synthetic data generation and table building.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from loguru import logger

from src.synthdata.dataset import generate_dataset, load_dataset, save_dataset
from src.synthdata.generator import GeneratorConfig
from src.synthdata.labeler import BinScheme, LabelerConfig
from src.synthdata.tables import (
    AnnotatorNoiseConfig,
    build_table_mask_estimation,
    build_table_visual_approx,
    draw_annotation_sample,
    save_table,
)
from src.utils.cli import (
    CommandParser,
    add_config_argument,
    add_seed_argument,
    load_config_file,
    run_guarded,
    section,
)
from src.utils.json_utils import config_hash


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(description="Synthetic blocks and count-distribution tables")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command to run")

    gen_parser = subparsers.add_parser("gen-data", help="Generate a labelled synthetic dataset")
    add_config_argument(gen_parser)
    gen_parser.add_argument("--out", type=Path, required=True, help="Output dataset directory")
    add_seed_argument(gen_parser)

    table_parser = subparsers.add_parser("build-table", help="Build a count-distribution table")
    add_config_argument(table_parser)
    table_parser.add_argument("--data", type=Path, required=True, help="Dataset directory")
    table_parser.add_argument(
        "--method",
        choices=["mask", "visual"],
        default="mask",
        help="Exact mask fractions or visually approximated (noisy) fractions",
    )
    table_parser.add_argument("--cap", type=int, default=None, help="Blocks per bin used for the table")
    table_parser.add_argument(
        "--noise",
        type=float,
        default=None,
        help="Additive annotator noise std for --method visual",
    )
    table_parser.add_argument(
        "--sample",
        choices=["annotation", "all"],
        default="annotation",
        help="Build from an annotation sample of the training split, or from every training block",
    )
    table_parser.add_argument("--out", type=Path, required=True, help="Output table file")
    add_seed_argument(table_parser)
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments.

    Returns:
        Parsed arguments namespace.
    """
    return build_parser().parse_args(argv)


def gen_data(args: argparse.Namespace) -> int:
    run_config = load_config_file(args.config)
    generator = GeneratorConfig(**section(run_config, "data"))
    labeler = LabelerConfig(**section(run_config, "labeler"))
    bins = BinScheme(**section(run_config, "bins"))

    logger.info(f"Generating dataset with seed {args.seed} into {args.out}")
    dataset = generate_dataset(generator, labeler, bins, args.seed)
    save_dataset(dataset, args.out)

    frame = pd.DataFrame(
        [{"split": name, "z": b.low_res_label} for name, blocks in dataset.splits.items() for b in blocks]
    )
    for name, blocks in dataset.splits.items():
        print(f"split {name} blocks={len(blocks)}")
    if not frame.empty:
        counts = pd.crosstab(frame["z"], frame["split"]).reindex(range(bins.num_bins), fill_value=0)
        print(counts.to_string())
    return 0


def build_table(args: argparse.Namespace) -> int:
    run_config = load_config_file(args.config)
    table_cfg = section(run_config, "table")
    cap = args.cap if args.cap is not None else table_cfg["per_z_cap"]
    noise = AnnotatorNoiseConfig(
        additive_std=args.noise if args.noise is not None else table_cfg["annotator_additive_std"],
        multiplicative_std=table_cfg["annotator_multiplicative_std"] if args.noise is None else 0.0,
    )

    dataset = load_dataset(args.data, splits=["train"])
    blocks = dataset.split("train")
    if args.sample == "annotation":
        blocks = draw_annotation_sample(
            blocks,
            total=table_cfg["annotation_total"],
            per_z_min=table_cfg["per_z_min"],
            per_z_cap=table_cfg["per_z_cap"],
            seed=args.seed,
        )
        logger.info(f"Annotation sample of {len(blocks)} blocks")

    # Zero annotator noise is the mask estimate, down to the file bytes
    method = "mask" if noise.is_zero else args.method
    if method == "mask":
        table = build_table_mask_estimation(blocks, cap, dataset.bins)
    else:
        table = build_table_visual_approx(blocks, cap, noise, args.seed, dataset.bins)

    cfg_hash = config_hash({
        "dataset": dataset.config_hash(),
        "cap": cap,
        "noise": noise if method == "visual" else None,
        "sample": args.sample,
        "table": table_cfg if args.sample == "annotation" else None,
    })
    save_table(table, args.out, cfg_hash, args.seed)
    print(table.to_frame().to_string(index=False))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function for data generation and table building.
    """
    args = parse_args(argv)
    handler = gen_data if args.command == "gen-data" else build_table
    return run_guarded(lambda: handler(args), args.command)


if __name__ == "__main__":
    sys.exit(main())
