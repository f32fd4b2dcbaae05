"""
U-Net-like segmentation model built on diffcore primitives.

Layout for depth D and base width w:

    inc      conv3x3(C -> w), relu, conv3x3(w -> w), relu            -> skip 0
    down d   max_pool2x2, double conv (w*2^(d-1) -> w*2^d)            -> skip d   (d = 1..D)
    up d     upsample_nearest2x, concat(skip d-1, x), double conv     (d = D..1)
             (w*2^d + w*2^(d-1) -> w*2^(d-1))
    outc     conv1x1(w -> 1) + sigmoid for two classes, conv1x1(w -> L) + softmax otherwise
"""
from collections import OrderedDict
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.diffcore import Tensor, ops
from src.utils.errors import ShapeError


class SegModelConfig(BaseModel):
    """Architecture hyperparameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    input_side: int = Field(32, ge=1)
    input_channels: int = Field(3, ge=1)
    base_width: int = Field(8, ge=1)
    depth: int = Field(2, ge=0)
    num_classes: int = Field(2, ge=2)

    @model_validator(mode="after")
    def _side_divisible(self) -> "SegModelConfig":
        if self.input_side % (2 ** self.depth):
            raise ValueError(
                f"input_side ({self.input_side}) must be divisible by 2**depth ({2 ** self.depth})"
            )
        return self

    @property
    def output_channels(self) -> int:
        return 1 if self.num_classes == 2 else self.num_classes


def _layer_shapes(config: SegModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Ordered (name, shape) list of every parameter."""
    w = config.base_width
    shapes: List[Tuple[str, Tuple[int, ...]]] = []

    def double_conv(prefix: str, c_in: int, c_out: int) -> None:
        shapes.append((f"{prefix}.conv1.weight", (c_out, c_in, 3, 3)))
        shapes.append((f"{prefix}.conv1.bias", (c_out,)))
        shapes.append((f"{prefix}.conv2.weight", (c_out, c_out, 3, 3)))
        shapes.append((f"{prefix}.conv2.bias", (c_out,)))

    double_conv("inc", config.input_channels, w)
    for d in range(1, config.depth + 1):
        double_conv(f"down{d}", w * 2 ** (d - 1), w * 2 ** d)
    for d in range(config.depth, 0, -1):
        double_conv(f"up{d}", w * 2 ** d + w * 2 ** (d - 1), w * 2 ** (d - 1))
    shapes.append(("outc.weight", (config.output_channels, w, 1, 1)))
    shapes.append(("outc.bias", (config.output_channels,)))
    return shapes


def param_count(config: SegModelConfig) -> int:
    return int(sum(np.prod(shape) for _, shape in _layer_shapes(config)))


class ModelParams:
    """
    Named, ordered collection of parameter tensors.

    Names and order are a pure function of the config.
    """

    def __init__(self, config: SegModelConfig, tensors: "OrderedDict[str, Tensor]"):
        expected = [name for name, _ in _layer_shapes(config)]
        if list(tensors.keys()) != expected:
            raise ShapeError("ModelParams", (len(tensors),), (len(expected),))
        for (name, shape), tensor in zip(_layer_shapes(config), tensors.values()):
            if tensor.shape != shape:
                raise ShapeError(f"ModelParams[{name}]", tensor.shape, shape)
        self.config = config
        self.tensors = tensors

    @classmethod
    def from_arrays(cls, config: SegModelConfig, arrays: Dict[str, np.ndarray]) -> "ModelParams":
        tensors = OrderedDict(
            (name, Tensor(arrays[name], requires_grad=True)) for name, _ in _layer_shapes(config)
        )
        return cls(config, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def leaves(self) -> List[Tensor]:
        return list(self.tensors.values())

    def num_values(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, t.numpy()) for name, t in self.tensors.items())

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(self.config, self.arrays())

    def zero_grad(self) -> None:
        for tensor in self.tensors.values():
            tensor.zero_grad()

    def equals(self, other: "ModelParams") -> bool:
        """Bit-identical values and identical names."""
        if list(self.tensors) != list(other.tensors):
            return False
        return all(np.array_equal(a.values, b.values) for a, b in zip(self.leaves(), other.leaves()))


def init_params(config: SegModelConfig, seed: int) -> ModelParams:
    """
    He-style initialization: kernels ~ N(0, 2 / fan_in), biases exactly zero.

    Args:
        config: Architecture.
        seed: Seed of the generator; equal seeds give bit-identical params.

    Returns:
        Freshly initialized parameters with requires_grad=True.
    """
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in _layer_shapes(config):
        if name.endswith(".bias"):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            arrays[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    params = ModelParams.from_arrays(config, arrays)
    logger.debug(f"Initialized {len(params)} parameter tensors ({params.num_values()} values), seed {seed}")
    return params


def zero_params(config: SegModelConfig) -> ModelParams:
    """All-zero parameters (uniform prediction)."""
    return ModelParams.from_arrays(config, {name: np.zeros(shape) for name, shape in _layer_shapes(config)})


def _conv(x: Tensor, params: ModelParams, prefix: str, padding: int) -> Tensor:
    weight = params[f"{prefix}.weight"]
    bias = params[f"{prefix}.bias"].reshape(1, weight.shape[0], 1, 1)
    return ops.conv2d(x, weight, padding=padding) + bias


def _double_conv(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    x = _conv(x, params, f"{prefix}.conv1", padding=1).relu()
    return _conv(x, params, f"{prefix}.conv2", padding=1).relu()


def predict(params: ModelParams, images: Union[np.ndarray, Tensor]) -> Tensor:
    """
    Per-pixel class probabilities.

    Args:
        params: Model parameters.
        images: One block (C, H, W) or a batch (N, C, H, W), channels first.

    Returns:
        Probability map (L, H, W) for a single block or (N, L, H, W) for a batch.
        Probabilities over the class axis sum to 1; class 1 is the positive class.

    Raises:
        ShapeError: If the spatial size or channel count does not match the config.
    """
    config = params.config
    x = images if isinstance(images, Tensor) else Tensor(images)
    single = x.ndim == 3
    if single:
        x = x.reshape(1, *x.shape)
    expected = (config.input_channels, config.input_side, config.input_side)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ShapeError("predict", x.shape, expected)

    skips = [_double_conv(x, params, "inc")]
    for d in range(1, config.depth + 1):
        skips.append(_double_conv(ops.max_pool2x2(skips[-1]), params, f"down{d}"))
    h = skips[-1]
    for d in range(config.depth, 0, -1):
        h = ops.concat([skips[d - 1], ops.upsample_nearest2x(h)], axis=1)
        h = _double_conv(h, params, f"up{d}")
    logits = _conv(h, params, "outc", padding=0)

    if config.num_classes == 2:
        positive = logits.sigmoid()
        probs = ops.concat([1.0 - positive, positive], axis=1)
    else:
        probs = ops.softmax(logits, axis=1)
    return probs[0] if single else probs
