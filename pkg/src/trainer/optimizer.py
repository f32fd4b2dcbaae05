"""
RMSprop without momentum or centering.
"""
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.segmodel import ModelParams
from src.utils.errors import ConfigError, NonFiniteError, ShapeError

EPS = 1e-8


@dataclass
class RMSpropState:
    """Running average of squared gradients per parameter, plus the step count."""

    square_avg: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "RMSpropState":
        return cls(OrderedDict((name, np.zeros(t.shape)) for name, t in params.items()))

    def copy(self) -> "RMSpropState":
        return RMSpropState(OrderedDict((k, v.copy()) for k, v in self.square_avg.items()), self.step)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.square_avg.values())


def gradients_of(params: ModelParams) -> "OrderedDict[str, np.ndarray]":
    """Leaf gradients after backward(); parameters the loss did not reach get zeros."""
    return OrderedDict(
        (name, t.grad.copy() if t.grad is not None else np.zeros(t.shape)) for name, t in params.items()
    )


def rmsprop_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: RMSpropState,
    lr: float,
    decay: float = 0.9,
    eps: float = EPS,
) -> Tuple[ModelParams, RMSpropState]:
    """
    One update:

        state <- decay * state + (1 - decay) * grad^2
        param <- param - lr * grad / (sqrt(state) + eps)

    Inputs are left untouched; fresh parameters and state are returned.

    Raises:
        ShapeError: If a gradient or state entry does not match its parameter.
        ConfigError: If lr <= 0 or decay is outside (0, 1).
        NonFiniteError: If the update produces NaN or Inf.
    """
    if not lr > 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    if not 0.0 < decay < 1.0:
        raise ConfigError(f"rmsprop decay must lie in (0, 1), got {decay}")

    new_values: Dict[str, np.ndarray] = {}
    new_avg: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, tensor in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        avg = state.square_avg[name]
        if grad.shape != tensor.shape:
            raise ShapeError(f"rmsprop_step[{name}]", grad.shape, tensor.shape)
        if avg.shape != tensor.shape:
            raise ShapeError(f"rmsprop_step[{name}] state", avg.shape, tensor.shape)

        avg = decay * avg + (1.0 - decay) * grad * grad
        value = tensor.values - lr * grad / (np.sqrt(avg) + eps)
        if not (np.all(np.isfinite(avg)) and np.all(np.isfinite(value))):
            raise NonFiniteError(f"rmsprop_step: non-finite update for {name}")
        new_avg[name] = avg
        new_values[name] = value

    return ModelParams.from_arrays(params.config, new_values), RMSpropState(new_avg, state.step + 1)
