"""
Primitive operations and their adjoints.

Broadcasting rules:
  add, sub, mul, div    numpy broadcasting; adjoints are summed back to each operand shape
  broadcast_to          explicit numpy broadcasting
  matmul                2-D only, (m, k) @ (k, n)
  conv2d                input (N, C, H, W), kernel (O, C, kh, kw), stride 1, symmetric zero padding
  max_pool2x2           input (..., H, W) with even H and W
  upsample_nearest2x    input (..., H, W)
  concat                equal shapes except along `axis`
Everything else is elementwise or a reduction over the given axes.

Non-smooth points: relu passes no gradient at exactly 0 (left subgradient);
max_pool2x2 routes the gradient to the first maximal element of each window.
"""
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.diffcore.tensor import Tensor, as_tensor
from src.utils.errors import NonFiniteError, ShapeError


def _result(values, op, parents, backward, pattern=None) -> Tensor:
    """Build an output node; parents are only recorded when a gradient can flow."""
    if any(p.requires_grad for p in parents):
        return Tensor(values, requires_grad=True, op=op, parents=tuple(parents),
                      backward=backward, pattern=pattern)
    return Tensor(values, op=op, pattern=pattern)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back to the operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.values + b.values, "add", (a, b), backward)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.values - b.values, "sub", (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _result(-a.values, "neg", (a,), lambda g: (-g,))


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _result(a.values * b.values, "mul", (a, b), backward)


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.values == 0.0):
        raise NonFiniteError("div: division by zero")

    def backward(g):
        return (_unbroadcast(g / b.values, a.shape),
                _unbroadcast(-g * a.values / (b.values * b.values), b.shape))

    return _result(a.values / b.values, "div", (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    if exponent == 2.0:
        values = a.values * a.values
    else:
        values = a.values ** exponent

    def backward(g):
        return (g * exponent * a.values ** (exponent - 1.0),)

    return _result(values, "pow", (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        return g @ b.values.T, a.values.T @ g

    return _result(a.values @ b.values, "matmul", (a, b), backward)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        values = np.broadcast_to(a.values, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, shape) from None
    return _result(values, "broadcast", (a,), lambda g: (_unbroadcast(g, a.shape),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        values = a.values.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return _result(values, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def index(a: Tensor, key) -> Tensor:
    try:
        values = np.array(a.values[key])
    except IndexError:
        raise ShapeError("index", a.shape, ()) from None

    def backward(g):
        full = np.zeros_like(a.values)
        np.add.at(full, key, g)
        return (full,)

    return _result(values, "index", (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        values = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", tensors[0].shape, tensors[-1].shape) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(values, "concat", tuple(tensors), backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    values = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(values, "sum", (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    values = a.values.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _result(values, "mean", (a,), backward)


def relu(a: Tensor) -> Tensor:
    active = a.values > 0.0
    values = np.where(active, a.values, 0.0)
    return _result(values, "relu", (a,), lambda g: (g * active,), pattern=active)


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.values)
    return _result(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def log(a: Tensor) -> Tensor:
    if np.any(a.values <= 0.0):
        raise NonFiniteError("log: argument must be strictly positive")
    return _result(np.log(a.values), "log", (a,), lambda g: (g / a.values,))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.values)
    return _result(e, "exp", (a,), lambda g: (g * e,))


def conv2d(x: Tensor, kernel: Tensor, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation with stride 1.

    Args:
        x: Input of shape (N, C, H, W).
        kernel: Weights of shape (O, C, kh, kw).
        padding: Zero padding applied on every spatial side.

    Returns:
        Output of shape (N, O, H + 2p - kh + 1, W + 2p - kw + 1).
    """
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ShapeError("conv2d", x.shape, kernel.shape)
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    p = int(padding)
    ho, wo = h + 2 * p - kh + 1, w + 2 * p - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d", x.shape, kernel.shape)

    padded = np.pad(x.values, ((0, 0), (0, 0), (p, p), (p, p)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))  # (N, C, Ho, Wo, kh, kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    weights = kernel.values.reshape(o, c * kh * kw)
    values = (cols @ weights.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def backward(g):
        g_rows = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        grad_kernel = (g_rows.T @ cols).reshape(kernel.shape)
        grad_cols = (g_rows @ weights).reshape(n, ho, wo, c, kh, kw)
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, :, i:i + ho, j:j + wo] += grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, p:p + h, p:p + w] if p else grad_padded
        return grad_x, grad_kernel

    return _result(values, "conv2d", (x, kernel), backward)


def max_pool2x2(x: Tensor) -> Tensor:
    if x.ndim < 2 or x.shape[-1] % 2 or x.shape[-2] % 2:
        raise ShapeError("max_pool2x2", x.shape, (2, 2))
    lead = x.shape[:-2]
    h, w = x.shape[-2:]
    k = len(lead)
    order = tuple(range(k)) + (k, k + 2, k + 1, k + 3)
    windows = (x.values.reshape(lead + (h // 2, 2, w // 2, 2))
               .transpose(order)
               .reshape(lead + (h // 2, w // 2, 4)))
    winner = windows.argmax(axis=-1)  # first index on ties
    values = np.take_along_axis(windows, winner[..., None], axis=-1)[..., 0]

    def backward(g):
        grad_windows = np.zeros_like(windows)
        np.put_along_axis(grad_windows, winner[..., None], g[..., None], axis=-1)
        grad = (grad_windows.reshape(lead + (h // 2, w // 2, 2, 2))
                .transpose(order)
                .reshape(x.shape))
        return (grad,)

    return _result(values, "max_pool2x2", (x,), backward, pattern=winner)


def upsample_nearest2x(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError("upsample_nearest2x", x.shape, ())
    lead = x.shape[:-2]
    h, w = x.shape[-2:]
    values = x.values.repeat(2, axis=-2).repeat(2, axis=-1)

    def backward(g):
        return (g.reshape(lead + (h, 2, w, 2)).sum(axis=(-3, -1)),)

    return _result(values, "upsample_nearest2x", (x,), backward)


def softmax(x: Tensor, axis: int = 0) -> Tensor:
    """Composite softmax; the max shift is a constant so it carries no gradient."""
    shift = Tensor(x.values.max(axis=axis, keepdims=True))
    e = exp(sub(x, shift))
    return div(e, reduce_sum(e, axis=axis, keepdims=True))


def stack_scalars(items: Sequence[Any]) -> Tensor:
    """Concatenate scalars (tensors or numbers) into a 1-D tensor."""
    return concat([reshape(as_tensor(item), (1,)) for item in items], axis=0)
