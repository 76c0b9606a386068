"""
Layer engine on numpy. Tensors are float64 arrays of shape
(batch, channels, rows, cols); dense layers work on (batch, features).

Each layer caches what its backward pass needs during forward, so a
backward call always refers to the most recent forward call.
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.core.exceptions import DegenerateBatchError, ShapeError
from src.domain.models import Padding

Pair = Tuple[int, int]
Shape = Tuple[int, ...]


# ---------------------------------------------------------------------------
# Functional kernels
# ---------------------------------------------------------------------------


def _check_4d(x: np.ndarray, what: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{what} must be 4-D (batch, channels, rows, cols), got {x.shape}")


def same_padding(size: int, kernel: int, stride: int) -> Pair:
    """(before, after) padding giving ceil(size / stride) outputs; the odd pad goes after."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv_output_size(size: int, kernel: int, stride: int, padding: Padding) -> int:
    if padding == Padding.SAME:
        return -(-size // stride)
    return (size - kernel) // stride + 1


def _paddings(x_shape: Shape, kernel_shape: Shape, stride: Pair, padding: Padding):
    if padding == Padding.VALID:
        return (0, 0), (0, 0)
    return (
        same_padding(x_shape[2], kernel_shape[2], stride[0]),
        same_padding(x_shape[3], kernel_shape[3], stride[1]),
    )


def _windows(xp: np.ndarray, kh: int, kw: int, stride: Pair) -> np.ndarray:
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return view[:, :, :: stride[0], :: stride[1]]


def conv2d_forward(
    x: np.ndarray,
    kernel: np.ndarray,
    stride: Pair = (1, 1),
    padding: Padding = Padding.VALID,
    bias: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Cross-correlation of x (B, C, H, W) with kernel (F, C, kh, kw).

    Valid output size is floor((n - k) / s) + 1 per axis; Same output size is
    ceil(n / s).

    Raises:
        ShapeError: On channel mismatch or a kernel larger than the padded input.
    """
    _check_4d(x, "Input")
    _check_4d(kernel, "Kernel")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(
            f"Input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}"
        )
    (pt, pb), (pl, pr) = _paddings(x.shape, kernel.shape, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if pt or pb or pl or pr else x
    kh, kw = kernel.shape[2:]
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(
            f"Kernel {kh}x{kw} does not fit padded input {xp.shape[2]}x{xp.shape[3]}"
        )
    windows = _windows(xp, kh, kw, stride)
    out = np.tensordot(windows, kernel, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(
    x: np.ndarray,
    kernel: np.ndarray,
    grad_out: np.ndarray,
    stride: Pair = (1, 1),
    padding: Padding = Padding.VALID,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of conv2d_forward with respect to its input and kernel.

    Returns:
        (grad_x, grad_kernel) with the shapes of x and kernel.
    """
    _check_4d(x, "Input")
    _check_4d(grad_out, "Upstream gradient")
    (pt, pb), (pl, pr) = _paddings(x.shape, kernel.shape, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if pt or pb or pl or pr else x
    kh, kw = kernel.shape[2:]
    windows = _windows(xp, kh, kw, stride)
    if windows.shape[2:4] != grad_out.shape[2:] or grad_out.shape[1] != kernel.shape[0]:
        raise ShapeError(
            f"Upstream gradient {grad_out.shape} does not match the forward output"
        )

    grad_kernel = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))

    ho, wo = grad_out.shape[2:]
    sh, sw = stride
    grad_xp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            contribution = np.tensordot(grad_out, kernel[:, :, i, j], axes=([1], [0]))
            grad_xp[
                :, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw
            ] += contribution.transpose(0, 3, 1, 2)
    grad_x = grad_xp[:, :, pt : pt + x.shape[2], pl : pl + x.shape[3]]
    return np.ascontiguousarray(grad_x), grad_kernel


def maxpool_forward(
    x: np.ndarray, window: Pair = (1, 3), stride: Optional[Pair] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Max over non-padded windows.

    Returns:
        (output, argmax) where argmax holds the flat in-window index of each
        maximum (first index on ties).
    """
    _check_4d(x, "Input")
    stride = stride or window
    ph, pw = window
    if x.shape[2] < ph or x.shape[3] < pw:
        raise ShapeError(f"Pool window {ph}x{pw} larger than input {x.shape[2:]}")
    windows = _windows(x, ph, pw, stride)
    flat = windows.reshape(windows.shape[:4] + (ph * pw,))
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool_backward(
    x_shape: Shape,
    argmax: np.ndarray,
    grad_out: np.ndarray,
    window: Pair = (1, 3),
    stride: Optional[Pair] = None,
) -> np.ndarray:
    """Route each upstream gradient to the input element that won its window."""
    stride = stride or window
    if grad_out.shape != argmax.shape:
        raise ShapeError(f"Upstream gradient {grad_out.shape} vs pool output {argmax.shape}")
    b, c, ho, wo = grad_out.shape
    bi, ci, hi, wi = np.indices((b, c, ho, wo), sparse=False)
    rows = hi * stride[0] + argmax // window[1]
    cols = wi * stride[1] + argmax % window[1]
    grad_x = np.zeros(x_shape, dtype=np.float64)
    np.add.at(grad_x, (bi, ci, rows, cols), grad_out)
    return grad_x


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean squared error over every element, and its gradient 2 (pred - target) / size.

    Raises:
        ShapeError: If the shapes differ.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def he_uniform(
    rng: np.random.Generator, shape: Shape, fan_in: int
) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


class Layer:
    """Base layer: stateless identity with no parameters."""

    kind = "layer"

    def __init__(self, name: str = ""):
        self.name = name or self.kind
        self.training = True

    def forward(self, x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad

    def output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {}

    def buffers(self) -> Dict[str, np.ndarray]:
        """Non-trained state saved with the weights."""
        return {}

    def describe(self) -> Dict[str, object]:
        return {"name": self.name, "kind": self.kind}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"


class Conv2D(Layer):
    kind = "conv"

    def __init__(
        self,
        in_channels: int,
        filters: int,
        kernel: Pair,
        stride: Pair = (1, 1),
        padding: Padding = Padding.VALID,
        rng: Optional[np.random.Generator] = None,
        name: str = "",
    ):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = tuple(kernel)
        self.stride = tuple(stride)
        self.padding = Padding(padding)
        fan_in = in_channels * kernel[0] * kernel[1]
        self.kernel = he_uniform(rng, (filters, in_channels) + self.kernel_size, fan_in)
        self.bias = np.zeros(filters, dtype=np.float64)
        self._x: Optional[np.ndarray] = None
        self.grad_kernel = np.zeros_like(self.kernel)
        self.grad_bias = np.zeros_like(self.bias)

    def forward(self, x, rng=None):
        self._x = x
        return conv2d_forward(x, self.kernel, self.stride, self.padding, self.bias)

    def backward(self, grad):
        grad_x, self.grad_kernel = conv2d_backward(
            self._x, self.kernel, grad, self.stride, self.padding
        )
        self.grad_bias = grad.sum(axis=(0, 2, 3))
        return grad_x

    def output_shape(self, input_shape):
        c, h, w = input_shape
        if c != self.in_channels:
            raise ShapeError(f"{self.name}: {c} input channels, expected {self.in_channels}")
        return (
            self.filters,
            conv_output_size(h, self.kernel_size[0], self.stride[0], self.padding),
            conv_output_size(w, self.kernel_size[1], self.stride[1], self.padding),
        )

    def parameters(self):
        return {"kernel": self.kernel, "bias": self.bias}

    def gradients(self):
        return {"kernel": self.grad_kernel, "bias": self.grad_bias}

    def describe(self):
        return {
            **super().describe(),
            "filters": self.filters,
            "kernel": list(self.kernel_size),
            "stride": list(self.stride),
            "padding": self.padding.value,
        }


class MaxPool(Layer):
    kind = "maxpool"

    def __init__(self, window: Pair = (1, 3), stride: Optional[Pair] = None, name: str = ""):
        super().__init__(name)
        self.window = tuple(window)
        self.stride = tuple(stride or window)
        self._cache = None

    def forward(self, x, rng=None):
        out, argmax = maxpool_forward(x, self.window, self.stride)
        self._cache = (x.shape, argmax)
        return out

    def backward(self, grad):
        x_shape, argmax = self._cache
        return maxpool_backward(x_shape, argmax, grad, self.window, self.stride)

    def output_shape(self, input_shape):
        c, h, w = input_shape
        return (
            c,
            (h - self.window[0]) // self.stride[0] + 1,
            (w - self.window[1]) // self.stride[1] + 1,
        )

    def describe(self):
        return {**super().describe(), "window": list(self.window), "stride": list(self.stride)}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, rng=None):
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return grad * self._mask


class BatchNorm(Layer):
    """
    Batch normalisation per channel (4-D input) or per feature (2-D input).
    Running statistics follow running = momentum * running + (1 - momentum) * batch.
    """

    kind = "batchnorm"

    def __init__(
        self, channels: int, momentum: float = 0.99, eps: float = 1e-12, name: str = ""
    ):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=np.float64)
        self.beta = np.zeros(channels, dtype=np.float64)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache = None

    @staticmethod
    def _axes(x: np.ndarray) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        if x.ndim == 4:
            return (0, 2, 3), (1, -1, 1, 1)
        if x.ndim == 2:
            return (0,), (1, -1)
        raise ShapeError(f"Batch norm expects 2-D or 4-D input, got {x.shape}")

    def forward(self, x, rng=None):
        axes, view = self._axes(x)
        if self.training:
            if x.shape[0] < 2:
                raise DegenerateBatchError(
                    f"{self.name}: batch normalisation needs at least 2 samples in training"
                )
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean.reshape(view)) * inv_std.reshape(view)
        self._cache = (x_hat, inv_std, axes, view, self.training)
        return self.gamma.reshape(view) * x_hat + self.beta.reshape(view)

    def backward(self, grad):
        x_hat, inv_std, axes, view, training = self._cache
        self.grad_gamma = (grad * x_hat).sum(axis=axes)
        self.grad_beta = grad.sum(axis=axes)
        g_hat = grad * self.gamma.reshape(view)
        if not training:
            return g_hat * inv_std.reshape(view)
        count = grad.size / self.channels
        mean_g = g_hat.sum(axis=axes).reshape(view) / count
        mean_gx = (g_hat * x_hat).sum(axis=axes).reshape(view) / count
        return inv_std.reshape(view) * (g_hat - mean_g - x_hat * mean_gx)

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def gradients(self):
        return {"gamma": self.grad_gamma, "beta": self.grad_beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def describe(self):
        return {**super().describe(), "momentum": self.momentum, "eps": self.eps}


class Dropout(Layer):
    """Inverted dropout: kept activations are divided by the keep probability."""

    kind = "dropout"

    def __init__(self, rate: float, name: str = ""):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"Dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask: Optional[np.ndarray] = None
        self._rng = np.random.default_rng(0)

    def forward(self, x, rng=None):
        if not self.training or self.rate == 0.0:
            self._mask = None
            return x
        rng = rng if rng is not None else self._rng
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask

    def describe(self):
        return {**super().describe(), "rate": self.rate}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)


class Dense(Layer):
    kind = "dense"

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: Optional[np.random.Generator] = None,
        name: str = "",
    ):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = he_uniform(rng, (in_features, out_features), in_features)
        self.bias = np.zeros(out_features, dtype=np.float64)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    def forward(self, x, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"{self.name}: expected (batch, {self.in_features}), got {x.shape}"
            )
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, grad):
        self.grad_weight = self._x.T @ grad
        self.grad_bias = grad.sum(axis=0)
        return grad @ self.weight.T

    def output_shape(self, input_shape):
        if input_shape != (self.in_features,):
            raise ShapeError(f"{self.name}: input {input_shape}, expected ({self.in_features},)")
        return (self.out_features,)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def gradients(self):
        return {"weight": self.grad_weight, "bias": self.grad_bias}

    def describe(self):
        return {**super().describe(), "units": self.out_features}


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, rng=None):
        self._y = softmax(x)
        return self._y

    def backward(self, grad):
        y = self._y
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))
