"""
Quantification network: layer stack, inference and the builder for the
Small/Medium/Large x Strided/Pooling architecture variants.
"""

import math
import threading
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.application.nn.layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool,
    ReLU,
    Softmax,
)
from src.config.logger_config import log
from src.core.exceptions import ArchitectureError, ShapeError
from src.domain.models import (
    InputConfig,
    NetworkConfig,
    Padding,
    ReductionVariant,
    SizeVariant,
)
from src.domain.spectra import ConcentrationVector, InputTensor

# conv1 width, conv2 width, reduction1 width
KERNEL_WIDTHS: Dict[SizeVariant, Tuple[int, int, int]] = {
    SizeVariant.SMALL: (7, 5, 3),
    SizeVariant.MEDIUM: (9, 7, 5),
    SizeVariant.LARGE: (16, 8, 7),
}
BASE_CHANNELS = 256
WIDE_CHANNELS = 512
DENSE_UNITS = 1024
BLOCK_REPEATS = 2


class Mode(str, Enum):
    TRAIN = "train"
    INFERENCE = "inference"


class Network:
    """
    Ordered layer stack mapping a (batch, 1, rows, cols) input to a softmax
    over `config.metabolites`.
    """

    def __init__(
        self,
        config: NetworkConfig,
        layers: List[Layer],
        input_config: Optional[InputConfig] = None,
    ):
        self.config = config
        self.layers = layers
        self.input_config = input_config
        self.mode = Mode.INFERENCE
        self.set_mode(Mode.INFERENCE)
        # layers cache activations during forward
        self._lock = threading.Lock()

    @property
    def metabolites(self) -> Tuple[str, ...]:
        return self.config.metabolites

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return (1, self.config.input_rows, self.config.input_cols)

    def set_mode(self, mode: Mode) -> None:
        self.mode = Mode(mode)
        for layer in self.layers:
            layer.training = self.mode == Mode.TRAIN

    def _as_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"Network expects inputs of shape {self.input_shape[1:]}, got {x.shape[2:]}"
            )
        return x

    def forward(self, x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Forward pass of a (batch, rows, cols) or (batch, 1, rows, cols) array."""
        out = self._as_batch(x)
        for layer in self.layers:
            out = layer.forward(out, rng)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def trainable(self) -> Iterator[Tuple[Layer, str, np.ndarray, np.ndarray]]:
        for layer in self.layers:
            grads = layer.gradients()
            for key, param in layer.parameters().items():
                yield layer, key, param, grads[key]

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer, keyed `layer.key`."""
        state: Dict[str, np.ndarray] = {}
        for layer in self.layers:
            for key, array in {**layer.parameters(), **layer.buffers()}.items():
                state[f"{layer.name}.{key}"] = array.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = sorted(set(expected) - set(state))
        if missing:
            raise ShapeError(f"State is missing entries {missing[:3]}")
        for layer in self.layers:
            for key in {**layer.parameters(), **layer.buffers()}:
                name = f"{layer.name}.{key}"
                value = np.asarray(state[name], dtype=np.float64)
                if value.shape != expected[name].shape:
                    raise ShapeError(
                        f"{name}: shape {value.shape}, expected {expected[name].shape}"
                    )
                if key in layer.parameters():
                    layer.parameters()[key][...] = value
                else:
                    setattr(layer, key, value.copy())

    def predict_batch(self, x: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Inference-mode outputs for a stack of inputs; the previous mode is restored."""
        x = self._as_batch(x)
        with self._lock:
            previous = self.mode
            self.set_mode(Mode.INFERENCE)
            try:
                outputs = [
                    self.forward(x[i : i + chunk]) for i in range(0, x.shape[0], chunk)
                ]
            finally:
                self.set_mode(previous)
        return np.concatenate(outputs, axis=0)

    def predict(self, x: InputTensor) -> ConcentrationVector:
        """Relative concentrations of one input tensor."""
        data = x.data if isinstance(x, InputTensor) else np.asarray(x)
        output = self.predict_batch(data[None])[0]
        return dict(zip(self.metabolites, (float(v) for v in output)))

    def summary(self) -> List[Tuple[str, str, Tuple[int, ...]]]:
        """(name, kind, output shape) of every layer."""
        shape: Tuple[int, ...] = self.input_shape
        rows = []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            rows.append((layer.name, layer.kind, shape))
        return rows

    def parameter_count(self) -> int:
        return int(sum(p.size for _, _, p, _ in self.trainable()))


def _channels(base: int, scale: float) -> int:
    return max(1, math.ceil(base * scale))


class _StackBuilder:
    """Appends layers while tracking the (channels, rows, cols) shape."""

    def __init__(self, input_shape: Tuple[int, int, int], rng: np.random.Generator):
        self.shape = input_shape
        self.rng = rng
        self.layers: List[Layer] = []

    def add(self, layer: Layer) -> None:
        shape = layer.output_shape(self.shape)
        if len(shape) == 3 and (shape[1] < 1 or shape[2] < 1):
            raise ArchitectureError(
                f"Layer {layer.name} reduces the input {self.shape} to {shape}"
            )
        self.layers.append(layer)
        self.shape = shape

    def conv(
        self,
        name: str,
        filters: int,
        kernel: Tuple[int, int],
        stride: Tuple[int, int] = (1, 1),
        padding: Padding = Padding.VALID,
        dropout: float = 0.0,
        batch_norm: bool = False,
    ) -> None:
        self.add(
            Conv2D(self.shape[0], filters, kernel, stride, padding, rng=self.rng, name=name)
        )
        self.add(ReLU(name=f"{name}_relu"))
        if batch_norm:
            self.add(BatchNorm(filters, name=f"{name}_bn"))
        if dropout:
            self.add(Dropout(dropout, name=f"{name}_dropout"))


def build_network(
    cfg: NetworkConfig,
    seed: int = 0,
    input_config: Optional[InputConfig] = None,
) -> Network:
    """
    Instantiate the layer stack of a network variant.

    conv1 and conv2 are strided 1x2 convolutions; reduction1 (height
    min(3, rows), valid) repeats until one row remains, once with a 1-row
    kernel for single-row inputs; then two {conv3, reduction2} and two
    {conv4, reduction3} blocks, where reduction is a 1x3-strided convolution
    or a convolution followed by 1x3 max-pooling; then dense 1024 and a
    softmax output.

    Raises:
        ArchitectureError: If the frequency axis shrinks below one column.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    k1, k2, kr = KERNEL_WIDTHS[cfg.size_variant]
    base = _channels(BASE_CHANNELS, cfg.channel_scale)
    wide = _channels(WIDE_CHANNELS, cfg.channel_scale)
    builder = _StackBuilder((1, cfg.input_rows, cfg.input_cols), rng)

    builder.conv("conv1", base, (1, k1), (1, 2), dropout=0.4, batch_norm=True)
    builder.conv("conv2", base, (1, k2), (1, 2), dropout=0.4)

    repeat = 1
    while True:
        rows = builder.shape[1]
        builder.conv(f"reduction1_{repeat}", base, (min(3, rows), kr), dropout=0.25)
        if builder.shape[1] == 1:
            break
        repeat += 1

    strided = cfg.reduction_variant == ReductionVariant.STRIDED
    for block, channels in (("3", base), ("4", wide)):
        for repeat in range(1, BLOCK_REPEATS + 1):
            builder.conv(
                f"conv{block}_{repeat}", channels, (1, 3), padding=Padding.SAME, dropout=0.25
            )
            reduction = f"reduction{int(block) - 1}_{repeat}"
            if strided:
                builder.conv(reduction, channels, (1, 3), (1, 3), dropout=0.25)
            else:
                builder.conv(reduction, channels, (1, 3), dropout=0.25)
                builder.add(MaxPool((1, 3), name=f"{reduction}_pool"))

    builder.add(Flatten(name="flatten"))
    builder.add(Dense(builder.shape[0], DENSE_UNITS, rng=rng, name="dense1"))
    builder.add(ReLU(name="dense1_relu"))
    builder.add(Dense(DENSE_UNITS, cfg.output_dim, rng=rng, name="output"))
    builder.add(Softmax(name="softmax"))

    network = Network(cfg, builder.layers, input_config)
    log.debug(
        "Network built",
        size=cfg.size_variant.value,
        reduction=cfg.reduction_variant.value,
        rows=cfg.input_rows,
        layers=len(builder.layers),
        parameters=network.parameter_count(),
    )
    return network
