"""Building blocks for the plain and residual UNets.

Residual blocks follow the pre-activation ordering (BN -> leaky ReLU ->
conv) with an identity shortcut, or a 1x1 projection when the channel
count changes.  Projections are not tallied in the architecture's
convolutional-layer count.
"""

from __future__ import annotations

import numpy as np

from maskbench.net.layers import AvgPool2d, BatchNorm, Conv2d, ConvTranspose2d, LeakyReLU
from maskbench.net.module import Module, ModuleList

LEAKY_SLOPE = 0.01


class ConvBNAct(Module):
    """conv -> BN -> leaky ReLU, the plain-UNet unit."""

    def __init__(self, in_channels, out_channels, rng, dtype):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, rng=rng, dtype=dtype)
        self.bn = BatchNorm(out_channels, dtype=dtype)
        self.act = LeakyReLU(LEAKY_SLOPE)

    def forward(self, x, training=False):
        return self.act.forward(self.bn.forward(self.conv.forward(x, training), training), training)

    def backward(self, grad):
        return self.conv.backward(self.bn.backward(self.act.backward(grad)))


class UpsampleBNAct(Module):
    """transposed conv -> BN -> leaky ReLU, the plain-UNet upsampling unit."""

    def __init__(self, in_channels, out_channels, rng, dtype):
        super().__init__()
        self.up = ConvTranspose2d(in_channels, out_channels, rng=rng, dtype=dtype)
        self.bn = BatchNorm(out_channels, dtype=dtype)
        self.act = LeakyReLU(LEAKY_SLOPE)

    def forward(self, x, training=False):
        return self.act.forward(self.bn.forward(self.up.forward(x, training), training), training)

    def backward(self, grad):
        return self.up.backward(self.bn.backward(self.act.backward(grad)))


class ResConvBlock(Module):
    """Two pre-activation 3x3 convolutions plus a shortcut.

    With ``zero_residual=True`` the second convolution starts at zero, so
    the block is the identity map at initialization whenever the shortcut
    is the identity (equal channel counts).
    """

    def __init__(self, in_channels, out_channels, rng, dtype, zero_residual=False):
        super().__init__()
        self.bn1 = BatchNorm(in_channels, dtype=dtype)
        self.act1 = LeakyReLU(LEAKY_SLOPE)
        self.conv1 = Conv2d(in_channels, out_channels, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(out_channels, dtype=dtype)
        self.act2 = LeakyReLU(LEAKY_SLOPE)
        self.conv2 = Conv2d(out_channels, out_channels, rng=rng, dtype=dtype, zero_init=zero_residual)
        if in_channels != out_channels:
            self.shortcut = Conv2d(in_channels, out_channels, ksize=1, rng=rng, dtype=dtype, tally=False)
        else:
            self.shortcut = None

    def forward(self, x, training=False):
        h = self.conv1.forward(self.act1.forward(self.bn1.forward(x, training), training), training)
        h = self.conv2.forward(self.act2.forward(self.bn2.forward(h, training), training), training)
        if self.shortcut is None:
            return h + x
        return h + self.shortcut.forward(x, training)

    def backward(self, grad):
        gh = self.conv1.backward(self.bn2.backward(self.act2.backward(self.conv2.backward(grad))))
        gx = self.bn1.backward(self.act1.backward(gh))
        if self.shortcut is None:
            return gx + grad
        return gx + self.shortcut.backward(grad)


class RcbChain(Module):
    """A stack of residual convolutional blocks at one resolution."""

    def __init__(self, in_channels, out_channels, n_blocks, rng, dtype, zero_residual=False):
        super().__init__()
        self.blocks = ModuleList(
            ResConvBlock(in_channels if i == 0 else out_channels, out_channels, rng, dtype, zero_residual)
            for i in range(n_blocks)
        )

    def forward(self, x, training=False):
        for block in self.blocks:
            x = block.forward(x, training)
        return x

    def backward(self, grad):
        for block in reversed(list(self.blocks)):
            grad = block.backward(grad)
        return grad


class ResEncoderBlock(Module):
    """RCB chain followed by 2x2 average pooling; exposes the pre-pool
    activation for the symmetric decoder skip."""

    def __init__(self, in_channels, out_channels, n_rcb, rng, dtype, zero_residual=False):
        super().__init__()
        self.rcbs = RcbChain(in_channels, out_channels, n_rcb, rng, dtype, zero_residual)
        self.pool = AvgPool2d(2)

    def forward(self, x, training=False):
        skip = self.rcbs.forward(x, training)
        return skip, self.pool.forward(skip, training)

    def backward(self, grad_pooled, grad_skip):
        return self.rcbs.backward(self.pool.backward(grad_pooled) + grad_skip)


class ResDecoderBlock(Module):
    """Pre-activation transposed-conv upsampling, skip concat, RCB chain."""

    def __init__(self, in_channels, out_channels, n_rcb, rng, dtype, zero_residual=False):
        super().__init__()
        self.bn = BatchNorm(in_channels, dtype=dtype)
        self.act = LeakyReLU(LEAKY_SLOPE)
        self.up = ConvTranspose2d(in_channels, out_channels, rng=rng, dtype=dtype)
        self.rcbs = RcbChain(2 * out_channels, out_channels, n_rcb, rng, dtype, zero_residual)
        self.out_channels = out_channels

    def forward(self, x, skip, training=False):
        up = self.up.forward(self.act.forward(self.bn.forward(x, training), training), training)
        joined = np.concatenate([up, skip], axis=1)
        return self.rcbs.forward(joined, training)

    def backward(self, grad):
        grad_joined = self.rcbs.backward(grad)
        grad_up = grad_joined[:, : self.out_channels]
        grad_skip = grad_joined[:, self.out_channels :]
        grad_x = self.bn.backward(self.act.backward(self.up.backward(grad_up)))
        return grad_x, grad_skip


class UNetEncoderStage(Module):
    """Two conv layers and a downsampling layer."""

    def __init__(self, in_channels, out_channels, rng, dtype):
        super().__init__()
        self.conv1 = ConvBNAct(in_channels, out_channels, rng, dtype)
        self.conv2 = ConvBNAct(out_channels, out_channels, rng, dtype)
        self.pool = AvgPool2d(2)

    def forward(self, x, training=False):
        skip = self.conv2.forward(self.conv1.forward(x, training), training)
        return skip, self.pool.forward(skip, training)

    def backward(self, grad_pooled, grad_skip):
        grad = self.pool.backward(grad_pooled) + grad_skip
        return self.conv1.backward(self.conv2.backward(grad))


class UNetDecoderStage(Module):
    """One transposed conv for upsampling, skip concat, two conv layers."""

    def __init__(self, in_channels, out_channels, rng, dtype):
        super().__init__()
        self.up = UpsampleBNAct(in_channels, out_channels, rng, dtype)
        self.conv1 = ConvBNAct(2 * out_channels, out_channels, rng, dtype)
        self.conv2 = ConvBNAct(out_channels, out_channels, rng, dtype)
        self.out_channels = out_channels

    def forward(self, x, skip, training=False):
        up = self.up.forward(x, training)
        joined = np.concatenate([up, skip], axis=1)
        return self.conv2.forward(self.conv1.forward(joined, training), training)

    def backward(self, grad):
        grad_joined = self.conv1.backward(self.conv2.backward(grad))
        grad_up = self.up.backward(grad_joined[:, : self.out_channels])
        return grad_up, grad_joined[:, self.out_channels :]
