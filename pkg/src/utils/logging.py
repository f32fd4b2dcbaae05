"""
Logging utilities for the label super resolution lab.

Console records go through tqdm so they do not break progress bars; the file
sink keeps everything at the configured level with rotation.
"""
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from loguru import logger
from tqdm import tqdm

from src.utils.config import config

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <7} | {extra[command]} | {name}:{line} | {message}"


def _console_sink(message) -> None:
    tqdm.write(str(message), file=sys.stderr, end="")


def _file_sink_options(log_config: Dict[str, Any]) -> Dict[str, Any]:
    if not log_config.get("rotate", True):
        return {}
    return {
        "rotation": log_config.get("max_size_mb", 10) * 1024 * 1024,
        "retention": log_config.get("backup_count", 5),
        "compression": "zip",
    }


def setup_logging(command: str = "-", level: Optional[str] = None):
    """
    Configure loguru for one command run.

    Args:
        command: Command name attached to every record.
        level: Overrides the configured level (and LSR_LOG_LEVEL).

    Returns:
        The configured logger.
    """
    log_config = config["logging"]
    log_level = (level or log_config.get("level", "INFO")).upper()
    log_file = Path(log_config.get("log_file", "logs/lsrlab.log"))
    os.makedirs(log_file.parent, exist_ok=True)

    logger.remove()
    logger.configure(extra={"command": command})
    logger.add(_console_sink, format=LOG_FORMAT, level=log_level, colorize=False)
    logger.add(str(log_file), format=LOG_FORMAT, level=log_level, **_file_sink_options(log_config))

    logger.debug(f"Logging configured at {log_level} for {command}")
    return logger


def show_progress() -> bool:
    """Whether tqdm progress bars are enabled."""
    return bool(config["logging"].get("show_progress", True))
