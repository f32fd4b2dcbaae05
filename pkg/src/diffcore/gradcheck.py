"""
Central finite-difference verification of analytic gradients.
"""
from typing import Callable, Sequence

import numpy as np
from loguru import logger

from src.diffcore.tensor import ComputeGraph, Tensor
from src.utils.errors import ConfigError, GraphError, NonDeterministicError


def grad_check(
    fn: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    step: float = 1e-5,
) -> float:
    """
    Compare backward() against central differences for every leaf element.

    The function is evaluated twice up front; a mismatch means it is not
    deterministic and the comparison would be meaningless. A perturbation that
    changes the branch taken by any non-smooth primitive (relu sign, max-pool
    winner) straddles a kink, so that element is skipped.

    Args:
        fn: Zero-argument callable rebuilding the scalar from the current leaf values.
        leaves: Leaf tensors with requires_grad=True to check.
        step: Finite-difference step, > 0.

    Returns:
        max over checked elements of |analytic - numeric| / max(1, |numeric|);
        0.0 when every element was skipped.

    Raises:
        ConfigError: If step is not positive.
        NonDeterministicError: If two forward passes disagree.
    """
    if not step > 0:
        raise ConfigError(f"grad_check: step must be > 0, got {step}")
    for leaf in leaves:
        if not leaf.requires_grad or not leaf.is_leaf:
            raise GraphError("grad_check: every checked tensor must be a requires_grad leaf")
        leaf.zero_grad()

    output = fn()
    repeat = fn()
    if output.item() != repeat.item():
        raise NonDeterministicError(
            f"grad_check: forward passes disagree ({output.item()!r} vs {repeat.item()!r})"
        )
    base_graph = ComputeGraph(output)
    output.backward()

    worst = 0.0
    checked = skipped = 0
    for leaf in leaves:
        analytic = leaf.grad.reshape(-1) if leaf.grad is not None else np.zeros(leaf.size)
        flat = leaf.values.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = fn()
            flat[i] = original - step
            minus = fn()
            flat[i] = original
            if not (base_graph.same_branches(ComputeGraph(plus))
                    and base_graph.same_branches(ComputeGraph(minus))):
                skipped += 1
                continue
            numeric = (plus.item() - minus.item()) / (2.0 * step)
            error = abs(analytic[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, error)
            checked += 1

    if skipped:
        logger.debug(f"grad_check skipped {skipped} element(s) at non-smooth points")
    if checked == 0:
        logger.warning("grad_check: every element sat on a non-smooth point, nothing compared")
    logger.debug(f"grad_check compared {checked} element(s), max relative error {worst:.3e}")
    return worst
