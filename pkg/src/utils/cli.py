"""
Shared pieces of the command-line entry points.
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Dict, NoReturn, Optional

from loguru import logger

from src.utils.config import load_run_config
from src.utils.errors import ConfigError, exit_code_for, format_error_line
from src.utils.logging import setup_logging


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors also end in the one-line error report."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        failure = ConfigError(f"{self.prog}: {message}")
        print(format_error_line(failure), file=sys.stderr)
        self.exit(exit_code_for(failure))


def add_seed_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        required=True,
        help="Seed of every random choice made by the command (required)",
    )


def add_config_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="YAML file whose values override config/config.yaml",
    )


def section(run_config: Dict[str, Any], name: str) -> Dict[str, Any]:
    """A config section, or a ConfigError naming the missing section."""
    if name not in run_config or run_config[name] is None:
        raise ConfigError(f"configuration has no '{name}' section")
    return dict(run_config[name])


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    try:
        return load_run_config(path)
    except FileNotFoundError as e:
        raise ConfigError(str(e)) from e


def run_guarded(command: Callable[[], int], name: str) -> int:
    """
    Run a command body with logging set up, turning failures into the
    one-line error report and the mapped exit code.
    """
    setup_logging(command=name)
    try:
        return command()
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{name} failed: {e}")
        print(format_error_line(e), file=sys.stderr)
        return code
