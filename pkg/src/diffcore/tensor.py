"""
Dense double-precision tensors with reverse-mode differentiation.

Every primitive in `src.diffcore.ops` returns a new Tensor that remembers its
parents and a closure mapping the output adjoint to parent adjoints. Calling
`backward()` on a scalar replays those closures in reverse topological order.
"""
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import GraphError, NonFiniteError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    A node of the computation graph.

    Leaves are created by the user (optionally with `requires_grad=True`);
    interior nodes are created by primitives. Only leaves receive `.grad`.
    """

    __slots__ = ("values", "requires_grad", "grad", "op", "parents", "_backward", "pattern")
    # ndarray <op> Tensor must defer to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(
        self,
        values: Any,
        requires_grad: bool = False,
        *,
        op: str = "leaf",
        parents: Tuple["Tensor", ...] = (),
        backward: Optional[BackwardFn] = None,
        pattern: Optional[np.ndarray] = None,
    ):
        # Leaves own a private copy; primitive outputs are already fresh arrays
        if op == "leaf":
            arr = np.array(values, dtype=np.float64, order="C")
        else:
            arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{op}: produced non-finite values")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self.parents = parents
        self._backward = backward
        # Branch decisions of non-smooth primitives (relu masks, pool argmax)
        self.pattern = pattern

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def item(self) -> float:
        if self.values.size != 1:
            raise GraphError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        """Copy of the values."""
        return self.values.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """
        Populate `.grad` on every requires_grad leaf reachable from this scalar.

        Gradients accumulate into existing `.grad` buffers.

        Raises:
            GraphError: If the tensor is not a scalar or nothing differentiable was recorded.
        """
        if self.values.size != 1:
            raise GraphError(f"backward: output must be a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward: no differentiable operation was recorded for this output")

        graph = ComputeGraph(self)
        adjoints = {id(self): np.ones_like(self.values)}
        for node in reversed(graph.nodes):
            adjoint = adjoints.pop(id(node), None)
            if adjoint is None:
                continue
            if node.is_leaf:
                node.grad = adjoint.copy() if node.grad is None else node.grad + adjoint
                continue
            for parent, parent_adjoint in zip(node.parents, node._backward(adjoint)):
                if parent_adjoint is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + parent_adjoint
                else:
                    adjoints[key] = parent_adjoint

    # Operator sugar; the primitives live in src.diffcore.ops
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __pow__(self, exponent: float):
        return ops.power(self, exponent)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, key):
        return ops.index(self, key)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def relu(self) -> "Tensor":
        return ops.relu(self)

    def sigmoid(self) -> "Tensor":
        return ops.sigmoid(self)

    def log(self) -> "Tensor":
        return ops.log(self)

    def exp(self) -> "Tensor":
        return ops.exp(self)


class ComputeGraph:
    """
    Topologically ordered record of the primitives that produced an output.

    Built by walking parent links; the walk is iterative so deep graphs do not
    hit the recursion limit.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node.parents):
                if id(parent) not in visited:
                    stack.append((parent, False))

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ops(self) -> List[str]:
        return [node.op for node in self.nodes]

    @property
    def leaves(self) -> List[Tensor]:
        return [node for node in self.nodes if node.is_leaf and node.requires_grad]

    def signature(self) -> List[np.ndarray]:
        """Branch decisions of every non-smooth node, in graph order."""
        return [node.pattern for node in self.nodes if node.pattern is not None]

    def same_branches(self, other: "ComputeGraph") -> bool:
        mine, theirs = self.signature(), other.signature()
        if len(mine) != len(theirs):
            return False
        return all(np.array_equal(a, b) for a, b in zip(mine, theirs))


def as_tensor(value: Any) -> Tensor:
    """Wrap plain numbers and arrays as constant tensors."""
    return value if isinstance(value, Tensor) else Tensor(value)


from src.diffcore import ops  # noqa: E402  (ops needs Tensor defined first)
