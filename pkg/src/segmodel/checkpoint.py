"""
Parameter checkpoint files.

Layout (format version 1, all integers little-endian):

    8 bytes   magic b"LSRCKPT1"
    8 bytes   uint64 length n of the JSON header
    n bytes   UTF-8 JSON header, keys sorted:
                format_version, tool, version, config_hash, seed,
                model_config (echo of SegModelConfig),
                tensors: [{name, shape, offset, count}]   offsets in values
    rest      float64 values of every tensor, concatenated in header order
"""
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from loguru import logger

from src.segmodel.model import ModelParams, SegModelConfig
from src.utils.errors import DataError
from src.utils.json_utils import config_hash, dumps, header_fields, loads

MAGIC = b"LSRCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(
    params: ModelParams,
    path: Path,
    seed: Optional[int] = None,
    cfg_hash: Optional[str] = None,
    **extra: Any,
) -> Path:
    """
    Write parameters to a checkpoint file.

    Args:
        params: Parameters to save.
        path: Destination file.
        seed: Seed recorded in the header.
        cfg_hash: Hash of the producing configuration; defaults to the model config hash.
        **extra: Additional header fields (e.g. epoch, validation score).

    Returns:
        The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    model_config = params.config.model_dump()
    entries = []
    offset = 0
    for name, tensor in params.items():
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset, "count": tensor.size})
        offset += tensor.size

    header = header_fields(cfg_hash or config_hash(model_config), seed, **extra)
    header.update({"format_version": FORMAT_VERSION, "model_config": model_config, "tensors": entries})
    header_bytes = dumps(header).encode("utf-8")
    payload = np.concatenate([t.values.reshape(-1) for t in params.leaves()]).astype("<f8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([len(header_bytes)], dtype="<u8").tobytes())
        f.write(header_bytes)
        f.write(payload.tobytes())
    logger.debug(f"Saved checkpoint with {offset} values to {path}")
    return path


def load_checkpoint(path: Path) -> Tuple[ModelParams, Dict[str, Any]]:
    """
    Read a checkpoint file.

    Args:
        path: Checkpoint written by save_checkpoint.

    Returns:
        (parameters, header dictionary).

    Raises:
        DataError: If the file is not a checkpoint or is truncated.
    """
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path} is not a checkpoint file")
    length = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    header = loads(raw[16:16 + length].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format {header.get('format_version')}")

    values = np.frombuffer(raw[16 + length:], dtype="<f8")
    total = sum(entry["count"] for entry in header["tensors"])
    if values.size != total:
        raise DataError(f"{path}: expected {total} values, found {values.size}")

    config = SegModelConfig(**header["model_config"])
    arrays = {
        entry["name"]: values[entry["offset"]:entry["offset"] + entry["count"]].reshape(entry["shape"])
        for entry in header["tensors"]
    }
    return ModelParams.from_arrays(config, arrays), header
