"""
Exception hierarchy and the command-line exit-code contract.
"""
from typing import Iterable, List, Tuple


class LSRError(Exception):
    """Base exception for the lab."""
    exit_code = 1


class ConfigError(LSRError):
    """Invalid configuration value or flag."""
    exit_code = 2


class DataError(LSRError):
    """Dataset, table or mask content cannot be used as requested."""
    exit_code = 3


class UnderSampledBinError(DataError):
    """One or more low-resolution bins have too few sampled blocks."""

    def __init__(self, bins: Iterable[int], minimum: int):
        self.bins: List[int] = sorted(int(b) for b in bins)
        self.minimum = minimum
        super().__init__(f"bins with fewer than {minimum} sampled blocks: {self.bins}")


class UnknownLabelError(DataError):
    """A low-resolution label is not covered by the count table."""


class MixedGroupError(DataError):
    """A group mixes low-resolution labels or classes."""


class EmptyBandError(DataError):
    """Ground truth has no class boundary, so the evaluation band is empty."""


class NoEligibleLabelError(DataError):
    """No low-resolution label has enough blocks to form a group."""


class NumericalError(LSRError):
    """Base class for numerical failures."""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss."""
    exit_code = 4


class NonFiniteError(NumericalError):
    """A tensor operation produced NaN or Inf."""


class ShapeError(LSRError):
    """Operand shapes are incompatible for a primitive."""

    def __init__(self, primitive: str, left: Tuple[int, ...], right: Tuple[int, ...] = ()):
        self.primitive = primitive
        super().__init__(f"{primitive}: incompatible shapes {tuple(left)} and {tuple(right)}")


class GraphError(LSRError):
    """Backward pass requested on something that cannot be differentiated."""


class NonDeterministicError(LSRError):
    """Two evaluations of the same function disagreed."""


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the CLI exit code.
    
    Args:
        exc: Raised exception.
        
    Returns:
        2 for configuration problems, 3 for data problems, 4 for divergence, 1 otherwise.
    """
    # pydantic is imported lazily so this module stays dependency free
    from pydantic import ValidationError

    if isinstance(exc, ValidationError):
        return ConfigError.exit_code
    if isinstance(exc, LSRError):
        return exc.exit_code
    return 1


def format_error_line(exc: BaseException) -> str:
    """One machine-parseable line describing a failure."""
    message = str(exc).replace("\n", " ").replace('"', "'")
    return f'error code={exit_code_for(exc)} kind={type(exc).__name__} message="{message}"'
