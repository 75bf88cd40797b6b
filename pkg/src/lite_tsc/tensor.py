"""Forward and backward kernels for the layers used by LITE and FCN.

Tensors are plain ``numpy`` arrays laid out as (batch, channels, length).
Every function preserves the floating dtype of its inputs, so the same code
runs in binary32 for training and in binary64 when checking gradients.
Backward passes are written by hand per layer; there is no tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels

MODES = ("standard", "depthwise", "pointwise")


class ShapeError(ValueError):
    """Raised when array shapes disagree with a layer's contract."""


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int = 1
    dilation: int = 1
    mode: str = "standard"
    use_bias: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown convolution mode {self.mode!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.kernel_size < 1 or self.dilation < 1:
            raise ValueError("kernel_size and dilation must be >= 1")
        if self.mode == "pointwise" and (self.kernel_size != 1 or self.dilation != 1):
            raise ValueError("pointwise convolution requires kernel_size=1, dilation=1")
        if self.mode == "depthwise" and self.out_channels != self.in_channels:
            raise ValueError("depthwise convolution requires out_channels == in_channels")

    @property
    def extent(self) -> int:
        """Span of input samples covered by one output position."""
        return 1 + self.dilation * (self.kernel_size - 1)

    @property
    def padding(self) -> tuple[int, int]:
        left = (self.extent - 1) // 2
        return left, self.extent - 1 - left

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        if self.mode == "depthwise":
            return (self.in_channels, 1, self.kernel_size)
        return (self.out_channels, self.in_channels, self.kernel_size)


def _check_input(x: np.ndarray, spec: ConvSpec) -> None:
    if x.ndim != 3 or x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"input of shape {x.shape} does not match spec expecting "
            f"(B, {spec.in_channels}, L)"
        )


def _check_weight(w: np.ndarray, spec: ConvSpec) -> None:
    if w.shape != spec.weight_shape:
        raise ShapeError(f"kernel of shape {w.shape} does not match spec shape {spec.weight_shape}")


def _pad(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    left, right = spec.padding
    if left == 0 and right == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (left, right)))


def _windows(xp: np.ndarray, k: int, d: int, length: int) -> np.ndarray:
    """View of shape (B, C, k, L) with ``[b, c, j, t] = xp[b, c, t + j*d]``."""
    b, c, _ = xp.shape
    s0, s1, s2 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(b, c, k, length), strides=(s0, s1, s2 * d, s2), writeable=False
    )


def conv1d_forward(
    x: np.ndarray, w: np.ndarray, bias: Optional[np.ndarray], spec: ConvSpec
) -> np.ndarray:
    """Stride-1, same-padded 1D cross-correlation.

    ``out[b, o, t] = bias[o] + sum_{c, j} x[b, c, t - pad_left + j*d] * w[o, c, j]``
    for standard and pointwise modes. Depthwise kernels have shape (C, 1, k) and
    channel ``c`` only sees input channel ``c``.
    """
    _check_input(x, spec)
    _check_weight(w, spec)
    length = x.shape[2]
    k, d = spec.kernel_size, spec.dilation

    if spec.mode == "depthwise":
        xp = np.ascontiguousarray(_pad(x, spec))
        out = _kernels.depthwise_forward(xp, np.ascontiguousarray(w[:, 0, :], dtype=x.dtype), d, length)
    elif k == 1:
        out = np.matmul(w[:, :, 0], x)
    else:
        cols = np.ascontiguousarray(_windows(_pad(x, spec), k, d, length))
        cols = cols.reshape(x.shape[0], spec.in_channels * k, length)
        out = np.matmul(w.reshape(spec.out_channels, -1), cols)

    if bias is not None:
        if bias.shape != (spec.out_channels,):
            raise ShapeError(f"bias of shape {bias.shape} does not match {spec.out_channels} outputs")
        out = out + bias[None, :, None]
    return out


def conv1d_backward(
    x: np.ndarray,
    w: np.ndarray,
    grad_out: np.ndarray,
    spec: ConvSpec,
    need_input_grad: bool = True,
    frozen: bool = False,
):
    """Gradients of :func:`conv1d_forward` with respect to input, kernel and bias.

    Returns ``(grad_x, grad_w, grad_bias)``. ``grad_x`` is None when
    ``need_input_grad`` is False, ``grad_w`` is None for frozen kernels and
    ``grad_bias`` is None when the ConvSpec carries no bias.
    """
    _check_input(x, spec)
    _check_weight(w, spec)
    expected = (x.shape[0], spec.out_channels, x.shape[2])
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out of shape {grad_out.shape} does not match output shape {expected}")
    batch, _, length = x.shape
    k, d = spec.kernel_size, spec.dilation
    left, _ = spec.padding

    grad_bias = grad_out.sum(axis=(0, 2)) if spec.use_bias else None
    grad_x = grad_w = None

    if spec.mode == "depthwise":
        xp = np.ascontiguousarray(_pad(x, spec))
        grad_xp, gw = _kernels.depthwise_backward(
            xp, np.ascontiguousarray(w[:, 0, :], dtype=x.dtype), np.ascontiguousarray(grad_out, dtype=x.dtype),
            d, need_input_grad, not frozen,
        )
        if not frozen:
            grad_w = gw[:, None, :]
        if need_input_grad:
            grad_x = grad_xp[:, :, left : left + length]
        return grad_x, grad_w, grad_bias

    if k == 1:
        if not frozen:
            grad_w = np.tensordot(grad_out, x, axes=([0, 2], [0, 2]))[:, :, None]
        if need_input_grad:
            grad_x = np.matmul(w[:, :, 0].T, grad_out)
        return grad_x, grad_w, grad_bias

    w2 = w.reshape(spec.out_channels, -1)
    if not frozen:
        cols = np.ascontiguousarray(_windows(_pad(x, spec), k, d, length))
        cols = cols.reshape(batch, spec.in_channels * k, length)
        grad_w = np.tensordot(grad_out, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    if need_input_grad:
        grad_cols = np.matmul(w2.T, grad_out).reshape(batch, spec.in_channels, k, length)
        grad_xp = np.zeros((batch, spec.in_channels, length + spec.extent - 1), dtype=x.dtype)
        for j in range(k):
            grad_xp[:, :, j * d : j * d + length] += grad_cols[:, :, j, :]
        grad_x = grad_xp[:, :, left : left + length]
    return grad_x, grad_w, grad_bias


def dwsc_specs(in_channels: int, out_channels: int, kernel_size: int, dilation: int = 1):
    """The (depthwise, pointwise) spec pair of a depthwise separable convolution."""
    return (
        ConvSpec(in_channels, in_channels, kernel_size, dilation, "depthwise"),
        ConvSpec(in_channels, out_channels, 1, 1, "pointwise"),
    )


def dwsc_forward(
    x: np.ndarray, depthwise_w: np.ndarray, pointwise_w: np.ndarray, dilation: int = 1
) -> np.ndarray:
    """Depthwise convolution followed directly by a pointwise convolution.

    ``depthwise_w`` has shape (C_in, k) and ``pointwise_w`` shape (C_out, C_in).
    """
    c_in, k = depthwise_w.shape
    dw_spec, pw_spec = dwsc_specs(c_in, pointwise_w.shape[0], k, dilation)
    hidden = conv1d_forward(x, depthwise_w[:, None, :], None, dw_spec)
    return conv1d_forward(hidden, pointwise_w[:, :, None], None, pw_spec)


@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics.

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.99
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, dtype=np.float32, **kwargs) -> "BatchNormState":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            **kwargs,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    training: bool
    gamma: np.ndarray = field(repr=False)


def batchnorm_forward_cached(x: np.ndarray, state: BatchNormState, training: bool):
    if x.ndim != 3 or x.shape[1] != state.channels:
        raise ShapeError(f"input of shape {x.shape} does not match {state.channels} batch-norm channels")
    if training:
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        m = state.momentum
        state.running_mean[...] = m * state.running_mean + (1 - m) * mean
        state.running_var[...] = m * state.running_var + (1 - m) * var
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    x_hat = (x - mean[None, :, None]) * inv_std[None, :, None]
    out = state.gamma[None, :, None] * x_hat + state.beta[None, :, None]
    return out, BatchNormCache(x_hat, inv_std, training, state.gamma)


def batchnorm_forward(x: np.ndarray, state: BatchNormState, training: bool) -> np.ndarray:
    """Normalize each channel over (batch, length); mutates running stats when training."""
    return batchnorm_forward_cached(x, state, training)[0]


def batchnorm_backward(grad_out: np.ndarray, cache: BatchNormCache):
    """Returns ``(grad_x, grad_gamma, grad_beta)``."""
    x_hat = cache.x_hat
    grad_beta = grad_out.sum(axis=(0, 2))
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2))
    g = grad_out * cache.gamma[None, :, None]
    if not cache.training:
        return g * cache.inv_std[None, :, None], grad_gamma, grad_beta
    n = x_hat.shape[0] * x_hat.shape[2]
    grad_x = (cache.inv_std[None, :, None] / n) * (
        n * g
        - g.sum(axis=(0, 2))[None, :, None]
        - x_hat * (g * x_hat).sum(axis=(0, 2))[None, :, None]
    )
    return grad_x, grad_gamma, grad_beta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, out: np.ndarray) -> np.ndarray:
    return grad_out * (out > 0)


def gap(x: np.ndarray) -> np.ndarray:
    """Global average pooling over the time axis: (B, C, L) -> (B, C)."""
    if x.ndim != 3:
        raise ShapeError(f"gap expects (B, C, L), got {x.shape}")
    if x.shape[2] == 0:
        raise ShapeError("gap requires a series length of at least 1")
    return x.mean(axis=2)


def gap_backward(grad_out: np.ndarray, length: int) -> np.ndarray:
    return np.repeat(grad_out[:, :, None] / length, length, axis=2)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dense_forward(features: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Logits of a fully connected layer; ``w`` has shape (n_classes, n_features)."""
    if features.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(
            f"dense layer mismatch: features {features.shape}, weight {w.shape}, bias {b.shape}"
        )
    return features @ w.T + b


def dense_softmax(features: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return softmax(dense_forward(features, w, b))


def dense_backward(grad_logits: np.ndarray, features: np.ndarray, w: np.ndarray):
    """Returns ``(grad_features, grad_w, grad_b)``."""
    return grad_logits @ w, grad_logits.T @ features, grad_logits.sum(axis=0)


def _check_one_hot(target: np.ndarray) -> None:
    if not np.all((target == 0) | (target == 1)) or not np.all(target.sum(axis=-1) == 1):
        raise ValueError("target must be one-hot encoded")


def cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    """Categorical cross-entropy, averaged over the batch when ``pred`` is 2-D."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    _check_one_hot(target)
    clipped = np.clip(pred, 1e-9, 1.0)
    losses = -(target * np.log(clipped)).sum(axis=-1)
    return float(np.mean(losses))


def softmax_cross_entropy_backward(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of the batch-mean loss with respect to the logits."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    _check_one_hot(target)
    batch = pred.shape[0] if pred.ndim == 2 else 1
    return ((pred - target) / batch).astype(pred.dtype)


def one_hot(labels: np.ndarray, n_classes: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], n_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1
    return out
