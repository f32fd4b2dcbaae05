"""
Main entry point for the label super resolution lab.

Each command is served by a package entry point; this module only routes.
"""
import argparse
import subprocess
import sys
from typing import List, Optional

from loguru import logger

from src import TOOL_NAME, __version__
from src.utils.cli import CommandParser

COMMANDS = {
    "gen-data": ("src.synthdata", "Generate a synthetic dataset"),
    "build-table": ("src.synthdata", "Build a count-distribution table from a dataset"),
    "train": ("src.trainer", "Train a segmentation model"),
    "ablate-alpha": ("src.trainer", "Sweep alpha for the intra+inter loss"),
    "eval": ("src.evalmetrics", "Score predictions on a split"),
    "report": ("src.evalmetrics", "Results table and boundary overlays"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(
        prog=TOOL_NAME,
        description="Label super resolution with count-distribution losses",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    parser.add_argument(
        "command",
        choices=list(COMMANDS),
        help="; ".join(f"{name}: {help_text}" for name, (_, help_text) in COMMANDS.items()),
    )
    parser.add_argument("args", nargs=argparse.REMAINDER, help="Flags of the command (see <command> --help)")
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments.

    Returns:
        Parsed arguments namespace.
    """
    return build_parser().parse_args(argv)


def run_command(module_name: str, args: List[str]) -> int:
    """
    Run a command as a subprocess.

    Args:
        module_name: Python module name to run.
        args: Command line arguments.

    Returns:
        Exit code from the command.
    """
    cmd = [sys.executable, "-m", module_name] + args
    logger.debug(f"Running command: {' '.join(cmd)}")

    try:
        process = subprocess.run(cmd, check=True)
        return process.returncode
    except subprocess.CalledProcessError as e:
        logger.debug(f"Command failed with exit code {e.returncode}")
        return e.returncode


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function: forward the command and its flags to the owning package.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] in COMMANDS:
        command, rest = argv[0], argv[1:]
    else:
        # --help, --version and unknown commands
        args = parse_args(argv)
        command, rest = args.command, list(args.args)
    module_name, _ = COMMANDS[command]
    return run_command(module_name, [command] + rest)


if __name__ == "__main__":
    sys.exit(main())
