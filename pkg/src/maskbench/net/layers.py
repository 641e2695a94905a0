"""Differentiable numpy kernels: convolutions, batch norm, activations, pooling.

Every layer caches what its backward pass needs during ``forward(...,
training=True)`` and releases the cache after ``backward``.  Convolutions
cache the (padded) input rather than the expanded im2col matrix to keep
peak memory proportional to the activations.
"""

from __future__ import annotations

import numpy as np

from maskbench.net.module import Module


def _im2col(padded: np.ndarray, ksize: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """(B, C, Hp, Wp) -> (B, out_h * out_w, C * ksize * ksize)."""
    windows = np.lib.stride_tricks.sliding_window_view(padded, (ksize, ksize), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    batch = padded.shape[0]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch, out_h * out_w, -1)


def _col2im(cols: np.ndarray, shape: tuple, ksize: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add columns back to (B, C, Hp, Wp)."""
    batch, channels, _, _ = shape
    out = np.zeros(shape, dtype=cols.dtype)
    cols = cols.reshape(batch, out_h, out_w, channels, ksize, ksize).transpose(0, 3, 1, 2, 4, 5)
    for i in range(ksize):
        for j in range(ksize):
            out[:, :, i : i + out_h * stride : stride, j : j + out_w * stride : stride] += cols[..., i, j]
    return out


class Conv2d(Module):
    """3x3 (or kxk) same-padding convolution, stride 1, with bias.

    ``tally=False`` marks shortcut projections that are excluded from the
    architecture's convolutional-layer count.
    """

    def __init__(self, in_channels, out_channels, ksize=3, rng=None, dtype=np.float32,
                 tally=True, zero_init=False):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.ksize = ksize
        self.pad = ksize // 2
        self.tally = tally
        fan_in = in_channels * ksize * ksize
        if zero_init:
            weight = np.zeros((out_channels, in_channels, ksize, ksize), dtype=dtype)
        else:
            weight = (rng.standard_normal((out_channels, in_channels, ksize, ksize))
                      * np.sqrt(2.0 / fan_in)).astype(dtype)
        self.weight = self.param("weight", weight)
        self.bias = self.param("bias", np.zeros(out_channels, dtype=dtype))
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        b, c, h, w = x.shape
        padded = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        cols = _im2col(padded, self.ksize, 1, h, w)
        out = cols @ self.weight.reshape(self.out_channels, -1).T + self.bias
        if training:
            self._cache = (padded, x.shape)
        return out.reshape(b, h, w, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        padded, x_shape = self._cache
        self._cache = None
        b, c, h, w = x_shape
        grad2 = grad_out.transpose(0, 2, 3, 1).reshape(b * h * w, self.out_channels)
        cols = _im2col(padded, self.ksize, 1, h, w).reshape(b * h * w, -1)
        self.grad("bias")[...] += grad2.sum(axis=0)
        self.grad("weight")[...] += (grad2.T @ cols).reshape(self.weight.shape)
        grad_cols = (grad2 @ self.weight.reshape(self.out_channels, -1)).reshape(b, h * w, -1)
        grad_padded = _col2im(grad_cols, padded.shape, self.ksize, 1, h, w)
        return grad_padded[:, :, self.pad : self.pad + h, self.pad : self.pad + w]


class ConvTranspose2d(Module):
    """kxk transposed convolution; the default (k=3, stride 2, pad 1,
    output pad 1) exactly doubles both spatial dims."""

    def __init__(self, in_channels, out_channels, ksize=3, stride=2, pad=1, out_pad=1,
                 rng=None, dtype=np.float32, tally=True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.ksize = ksize
        self.stride = stride
        self.pad = pad
        self.out_pad = out_pad
        self.tally = tally
        fan_in = in_channels * ksize * ksize
        weight = (rng.standard_normal((in_channels, out_channels, ksize, ksize))
                  * np.sqrt(2.0 / fan_in)).astype(dtype)
        self.weight = self.param("weight", weight)
        self.bias = self.param("bias", np.zeros(out_channels, dtype=dtype))
        self._cache = None

    def out_size(self, size: int) -> int:
        return (size - 1) * self.stride - 2 * self.pad + self.ksize + self.out_pad

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        b, c, h, w = x.shape
        out_h, out_w = self.out_size(h), self.out_size(w)
        full_h = (h - 1) * self.stride + self.ksize
        full_w = (w - 1) * self.stride + self.ksize
        cols = (x.transpose(0, 2, 3, 1).reshape(b * h * w, c)
                @ self.weight.reshape(c, -1)).reshape(b, h, w, self.out_channels, self.ksize, self.ksize)
        cols = cols.transpose(0, 3, 1, 2, 4, 5)
        full = np.zeros((b, self.out_channels, full_h, full_w), dtype=x.dtype)
        for i in range(self.ksize):
            for j in range(self.ksize):
                full[:, :, i : i + (h - 1) * self.stride + 1 : self.stride,
                     j : j + (w - 1) * self.stride + 1 : self.stride] += cols[..., i, j]
        out = full[:, :, self.pad : self.pad + out_h, self.pad : self.pad + out_w]
        if training:
            self._cache = (x, (full_h, full_w))
        return out + self.bias[:, None, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, (full_h, full_w) = self._cache
        self._cache = None
        b, c, h, w = x.shape
        self.grad("bias")[...] += grad_out.sum(axis=(0, 2, 3))
        grad_full = np.zeros((b, self.out_channels, full_h, full_w), dtype=grad_out.dtype)
        grad_full[:, :, self.pad : self.pad + grad_out.shape[2],
                  self.pad : self.pad + grad_out.shape[3]] = grad_out
        grad_cols = np.empty((b, self.out_channels, h, w, self.ksize, self.ksize), dtype=grad_out.dtype)
        for i in range(self.ksize):
            for j in range(self.ksize):
                grad_cols[..., i, j] = grad_full[:, :, i : i + (h - 1) * self.stride + 1 : self.stride,
                                                 j : j + (w - 1) * self.stride + 1 : self.stride]
        grad_cols = grad_cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, -1)
        x2 = x.transpose(0, 2, 3, 1).reshape(b * h * w, c)
        self.grad("weight")[...] += (x2.T @ grad_cols).reshape(self.weight.shape)
        grad_x = grad_cols @ self.weight.reshape(c, -1).T
        return grad_x.reshape(b, h, w, c).transpose(0, 3, 1, 2)


class BatchNorm(Module):
    """Batch normalization over all axes except ``feature_axis``.

    ``feature_axis=1`` is standard per-channel BN; ``feature_axis=3``
    normalizes each frequency bin over (batch, channels, time), which is
    how the input spectrogram is whitened.  Running statistics use
    ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, num_features, feature_axis=1, eps=1e-5, momentum=0.9, dtype=np.float32):
        super().__init__()
        self.num_features = num_features
        self.feature_axis = feature_axis
        self.eps = eps
        self.momentum = momentum
        self.gamma = self.param("gamma", np.ones(num_features, dtype=dtype))
        self.beta = self.param("beta", np.zeros(num_features, dtype=dtype))
        self.running_mean = self.buffer("running_mean", np.zeros(num_features, dtype=dtype))
        self.running_var = self.buffer("running_var", np.ones(num_features, dtype=dtype))
        self._cache = None

    def _shape(self, ndim: int) -> tuple:
        shape = [1] * ndim
        shape[self.feature_axis] = self.num_features
        return tuple(shape)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        axes = tuple(a for a in range(x.ndim) if a != self.feature_axis)
        shape = self._shape(x.ndim)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean[...] = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var[...] = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        if training:
            self._cache = (xhat, inv_std, axes, shape)
        return self.gamma.reshape(shape) * xhat + self.beta.reshape(shape)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xhat, inv_std, axes, shape = self._cache
        self._cache = None
        m = grad_out.size // self.num_features
        self.grad("gamma")[...] += (grad_out * xhat).sum(axis=axes)
        self.grad("beta")[...] += grad_out.sum(axis=axes)
        grad_xhat = grad_out * self.gamma.reshape(shape)
        # batch-statistics backward: both mean and var depend on x
        term = (grad_xhat
                - grad_xhat.mean(axis=axes).reshape(shape)
                - xhat * (grad_xhat * xhat).mean(axis=axes).reshape(shape))
        return term * inv_std.reshape(shape)


class LeakyReLU(Module):
    def __init__(self, slope=0.01):
        super().__init__()
        self.slope = slope
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        positive = x > 0
        if training:
            self._cache = positive
        return np.where(positive, x, self.slope * x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        positive = self._cache
        self._cache = None
        return np.where(positive, grad_out, self.slope * grad_out)


class Sigmoid(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        out = 1.0 / (1.0 + np.exp(-x))
        if training:
            self._cache = out
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        out = self._cache
        self._cache = None
        return grad_out * out * (1.0 - out)


class AvgPool2d(Module):
    """2x2 average pooling; spatial dims must be even."""

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        b, c, h, w = x.shape
        if h % self.size or w % self.size:
            raise ValueError(f"pooling {self.size}x{self.size} needs even dims, got {h}x{w}")
        view = x.reshape(b, c, h // self.size, self.size, w // self.size, self.size)
        return view.mean(axis=(3, 5))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        scaled = grad_out / (self.size * self.size)
        return np.repeat(np.repeat(scaled, self.size, axis=2), self.size, axis=3)
