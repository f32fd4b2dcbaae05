"""
Generated datasets and their on-disk form.

A dataset directory holds `manifest.yaml` (configs, seeds, split assignment)
and one `<split>.bin` record file per split. Record file layout, format
version 1, little-endian:

    8 bytes   magic b"LSRDATA1"
    8 bytes   uint64 length n of the JSON header
    n bytes   UTF-8 JSON header, keys sorted: format_version, tool, version,
              config_hash, seed, split, count, side, channels
    rest      `count` packed records, in block_id order:
                block_id  int64
                seed      uint64
                z         int64
                fraction  float64
                image     float64 (side, side, channels)
                mask      uint8   (side, side)
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import numpy as np
import yaml
from loguru import logger
from tqdm import tqdm

from src.synthdata.generator import DatasetBlock, GeneratorConfig, generate_block
from src.synthdata.labeler import BinScheme, LabelerConfig, simulate_low_res_label
from src.utils.errors import DataError
from src.utils.json_utils import config_hash, dumps, header_fields, loads
from src.utils.logging import show_progress

MAGIC = b"LSRDATA1"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.yaml"
SPLITS = ("train", "val", "test")


def record_dtype(side: int, channels: int) -> np.dtype:
    return np.dtype([
        ("block_id", "<i8"),
        ("seed", "<u8"),
        ("z", "<i8"),
        ("fraction", "<f8"),
        ("image", "<f8", (side, side, channels)),
        ("mask", "u1", (side, side)),
    ])


@dataclass
class Dataset:
    """Labelled blocks per split plus everything needed to regenerate them."""

    generator: GeneratorConfig
    labeler: LabelerConfig
    bins: BinScheme
    seed: int
    splits: Dict[str, List[DatasetBlock]] = field(default_factory=dict)

    def split(self, name: str) -> List[DatasetBlock]:
        if name not in self.splits:
            raise DataError(f"dataset has no split {name!r}; available: {sorted(self.splits)}")
        return self.splits[name]

    def __iter__(self) -> Iterator[DatasetBlock]:
        for name in SPLITS:
            yield from self.splits.get(name, [])

    def config_dict(self) -> Dict[str, Any]:
        # python-mode dumps keep an infinite threshold, which JSON mode turns into null
        return loads(dumps({
            "data": self.generator.model_dump(),
            "labeler": self.labeler.model_dump(),
            "bins": self.bins.model_dump(),
        }))

    def config_hash(self) -> str:
        return config_hash(self.config_dict())

    def labels(self, name: str) -> np.ndarray:
        return np.array([b.low_res_label for b in self.split(name)], dtype=np.int64)


def block_seeds(seed: int, count: int) -> List[int]:
    """Per-block seeds derived from the dataset seed."""
    if count == 0:
        return []
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def label_block(block: DatasetBlock, bins: BinScheme, labeler: LabelerConfig) -> DatasetBlock:
    sub = block.sub_fractions(labeler.sub_patches) if labeler.sub_patches > 1 else None
    block.low_res_label = simulate_low_res_label(block.true_fraction, bins, labeler, block.seed, sub)
    return block


def generate_dataset(
    generator: GeneratorConfig,
    labeler: LabelerConfig,
    bins: BinScheme,
    seed: int,
) -> Dataset:
    """
    Generate and label every split.

    Block ids run consecutively over train, val and test; each block gets its
    own seed, so a single block can be regenerated from the manifest.
    """
    sizes = generator.splits.items()
    total = sum(count for _, count in sizes)
    seeds = block_seeds(seed, total)
    dataset = Dataset(generator=generator, labeler=labeler, bins=bins, seed=seed)

    block_id = 0
    with tqdm(total=total, desc="Generating blocks", disable=not show_progress()) as progress:
        for name, count in sizes:
            blocks = []
            for _ in range(count):
                block = generate_block(seeds[block_id], generator, block_id=block_id)
                blocks.append(label_block(block, bins, labeler))
                block_id += 1
                progress.update(1)
            dataset.splits[name] = blocks
            logger.info(f"Generated {count} {name} blocks")
    return dataset


def _split_header(dataset: Dataset, name: str) -> Dict[str, Any]:
    header = header_fields(
        dataset.config_hash(),
        dataset.seed,
        split=name,
        count=len(dataset.splits[name]),
        side=dataset.generator.side,
        channels=dataset.generator.channels,
    )
    header["format_version"] = FORMAT_VERSION
    return header


def write_split(dataset: Dataset, name: str, path: Path) -> Path:
    cfg = dataset.generator
    blocks = dataset.splits[name]
    records = np.zeros(len(blocks), dtype=record_dtype(cfg.side, cfg.channels))
    for i, block in enumerate(blocks):
        records[i] = (block.block_id, block.seed, block.low_res_label, block.true_fraction, block.image, block.gt_mask)

    header_bytes = dumps(_split_header(dataset, name)).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([len(header_bytes)], dtype="<u8").tobytes())
        f.write(header_bytes)
        f.write(records.tobytes())
    return path


def read_split(path: Path) -> List[DatasetBlock]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path} is not a dataset record file")
    length = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    header = loads(raw[16:16 + length].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported record format {header.get('format_version')}")

    dtype = record_dtype(header["side"], header["channels"])
    payload = raw[16 + length:]
    if len(payload) != header["count"] * dtype.itemsize:
        raise DataError(f"{path}: expected {header['count']} records, payload has {len(payload)} bytes")
    records = np.frombuffer(payload, dtype=dtype)
    return [
        DatasetBlock(
            image=np.array(r["image"]),
            gt_mask=np.array(r["mask"]),
            true_fraction=float(r["fraction"]),
            seed=int(r["seed"]),
            block_id=int(r["block_id"]),
            low_res_label=int(r["z"]),
        )
        for r in records
    ]


def save_dataset(dataset: Dataset, out_dir: Path) -> Path:
    """
    Write the manifest and one record file per split.

    Returns:
        Path of the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: Dict[str, Any] = {
        "header": header_fields(dataset.config_hash(), dataset.seed, format_version=FORMAT_VERSION),
        **dataset.config_dict(),
        "seed": dataset.seed,
        "splits": {},
    }
    for name, blocks in dataset.splits.items():
        file_name = f"{name}.bin"
        write_split(dataset, name, out_dir / file_name)
        manifest["splits"][name] = {
            "file": file_name,
            "block_ids": [b.block_id for b in blocks],
            "seeds": [b.seed for b in blocks],
        }

    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w") as f:
        yaml.safe_dump(manifest, f, sort_keys=True)
    logger.info(f"Saved dataset ({sum(len(b) for b in dataset.splits.values())} blocks) to {out_dir}")
    return manifest_path


def read_manifest(data_dir: Path) -> Dict[str, Any]:
    manifest_path = Path(data_dir) / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(f"no dataset manifest at {manifest_path}")
    with open(manifest_path) as f:
        return yaml.safe_load(f)


def load_dataset(data_dir: Path, splits: Optional[List[str]] = None) -> Dataset:
    """Read a dataset written by save_dataset, optionally only some splits."""
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    dataset = Dataset(
        generator=GeneratorConfig(**manifest["data"]),
        labeler=LabelerConfig(**manifest["labeler"]),
        bins=BinScheme(**manifest["bins"]),
        seed=int(manifest["seed"]),
    )
    for name, entry in manifest["splits"].items():
        if splits is not None and name not in splits:
            continue
        blocks = read_split(data_dir / entry["file"])
        if [b.block_id for b in blocks] != entry["block_ids"]:
            raise DataError(f"{name}: record file does not match the manifest")
        dataset.splits[name] = blocks
    logger.debug(f"Loaded dataset from {data_dir} with splits {sorted(dataset.splits)}")
    return dataset


def regenerate_from_manifest(data_dir: Path) -> Dataset:
    """Rebuild every block from the manifest's configs and per-block seeds."""
    manifest = read_manifest(data_dir)
    generator = GeneratorConfig(**manifest["data"])
    labeler = LabelerConfig(**manifest["labeler"])
    bins = BinScheme(**manifest["bins"])
    dataset = Dataset(generator=generator, labeler=labeler, bins=bins, seed=int(manifest["seed"]))
    for name, entry in manifest["splits"].items():
        dataset.splits[name] = [
            label_block(generate_block(seed, generator, block_id=block_id), bins, labeler)
            for block_id, seed in zip(entry["block_ids"], entry["seeds"])
        ]
    return dataset
