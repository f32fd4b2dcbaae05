"""
Synthetic data package: image blocks with masks, simulated low-resolution
labels, count-distribution tables and dataset files.
"""
from src.synthdata.dataset import Dataset, generate_dataset, load_dataset, regenerate_from_manifest, save_dataset
from src.synthdata.generator import DatasetBlock, GeneratorConfig, SplitSizes, generate_block
from src.synthdata.labeler import BinScheme, LabelerConfig, simulate_low_res_label
from src.synthdata.tables import (
    AnnotatorNoiseConfig,
    CountDistributionTable,
    build_table_mask_estimation,
    build_table_visual_approx,
    draw_annotation_sample,
    load_table,
    reference_table,
    save_table,
)

__all__ = [
    "AnnotatorNoiseConfig",
    "BinScheme",
    "CountDistributionTable",
    "Dataset",
    "DatasetBlock",
    "GeneratorConfig",
    "LabelerConfig",
    "SplitSizes",
    "build_table_mask_estimation",
    "build_table_visual_approx",
    "draw_annotation_sample",
    "generate_block",
    "generate_dataset",
    "load_dataset",
    "load_table",
    "reference_table",
    "regenerate_from_manifest",
    "save_dataset",
    "save_table",
    "simulate_low_res_label",
]
