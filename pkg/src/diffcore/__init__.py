"""
Minimal dense-tensor computation with reverse-mode differentiation.
"""
from src.diffcore.tensor import ComputeGraph, Tensor, as_tensor
from src.diffcore import ops
from src.diffcore.gradcheck import grad_check

__all__ = ["ComputeGraph", "Tensor", "as_tensor", "ops", "grad_check"]
