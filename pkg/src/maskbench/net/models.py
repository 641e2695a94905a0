"""The 33-layer UNet and the 143-layer residual UNet.

Both take a magnitude-spectrogram stack ``(batch, channels, time, freq)``
whose spatial dims are multiples of ``2 ** depth`` and produce a raw head
tensor with ``J = heads * channels`` output channels.  Head semantics:

* ``m_mag`` -- bounded mask magnitude (sigmoid applied by ``split_heads``),
* ``q``    -- direct magnitude prediction, a residual on ``m_mag * |X|``,
* ``p_r``, ``p_i`` -- unnormalized phase-rotation components.

The ``mask`` variant emits only ``m_mag`` (J=2 for stereo), ``decouple``
adds the phase pair (J=6), and ``decouple_plus`` adds the direct
magnitude residual as well (J=8).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from maskbench.net.blocks import (
    ConvBNAct,
    ResDecoderBlock,
    ResEncoderBlock,
    RcbChain,
    UNetDecoderStage,
    UNetEncoderStage,
)
from maskbench.net.layers import BatchNorm, Conv2d, ConvTranspose2d
from maskbench.net.module import Module, ModuleList

VARIANT_HEADS = {
    "mask": ("m_mag",),
    "decouple": ("m_mag", "p_r", "p_i"),
    "decouple_plus": ("m_mag", "q", "p_r", "p_i"),
}


@dataclass(frozen=True)
class NetConfig:
    """Width/variant configuration shared by both architectures.

    ``widths`` has one entry per encoder level; its length sets the depth
    and therefore the required spatial divisibility (``2 ** depth``).
    ``freq_bins`` is the (padded) spectrogram height the input batch norm
    is built for.
    """

    variant: str = "decouple_plus"
    in_channels: int = 2
    widths: tuple[int, ...] = (8, 16, 24, 32, 48, 64)
    freq_bins: int = 1088
    rcb_per_block: int = 4
    intermediate_blocks: int = 4
    seed: int = 0
    zero_residual: bool = False
    dtype: object = field(default=np.float32, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANT_HEADS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANT_HEADS)}")
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be >= 1, got {self.widths}")
        if self.in_channels < 1 or self.freq_bins < 1:
            raise ValueError("in_channels and freq_bins must be >= 1")

    @property
    def depth(self) -> int:
        return len(self.widths)

    @property
    def grid_multiple(self) -> int:
        return 2**self.depth

    @property
    def head_names(self) -> tuple[str, ...]:
        return VARIANT_HEADS[self.variant]

    @property
    def out_channels(self) -> int:
        """J: one output channel per head per input channel."""
        return len(self.head_names) * self.in_channels


@dataclass
class HeadOutputs:
    """The four separation head grids, each ``(batch, channels, time, freq)``.

    ``m_mag`` is sigmoid-activated (values in (0, 1)); heads absent from
    the model variant hold their neutral constants (q=0, p_r=1, p_i=0) so
    the downstream combination and reconstruction are variant-agnostic.
    """

    m_mag: np.ndarray
    q: np.ndarray
    p_r: np.ndarray
    p_i: np.ndarray


def split_heads(raw: np.ndarray, cfg: NetConfig) -> HeadOutputs:
    """Slice the raw head tensor and apply head activations."""
    c = cfg.in_channels
    if raw.shape[1] != cfg.out_channels:
        raise ValueError(f"raw head tensor has {raw.shape[1]} channels, expected {cfg.out_channels}")
    pieces = {name: raw[:, i * c : (i + 1) * c] for i, name in enumerate(cfg.head_names)}
    m_mag = 1.0 / (1.0 + np.exp(-pieces["m_mag"]))
    shape = m_mag.shape
    q = pieces.get("q", np.zeros(shape, dtype=raw.dtype))
    p_r = pieces.get("p_r", np.ones(shape, dtype=raw.dtype))
    p_i = pieces.get("p_i", np.zeros(shape, dtype=raw.dtype))
    return HeadOutputs(m_mag=m_mag, q=q, p_r=p_r, p_i=p_i)


def head_grads_to_raw(heads: HeadOutputs, grads: dict[str, np.ndarray], cfg: NetConfig) -> np.ndarray:
    """Map gradients w.r.t. head grids back to the raw head tensor.

    Applies the sigmoid derivative on the ``m_mag`` slice and drops
    gradients for heads the variant does not emit.
    """
    c = cfg.in_channels
    b, _, t, f = heads.m_mag.shape
    raw = np.zeros((b, cfg.out_channels, t, f), dtype=heads.m_mag.dtype)
    for i, name in enumerate(cfg.head_names):
        g = grads[name]
        if name == "m_mag":
            g = g * heads.m_mag * (1.0 - heads.m_mag)
        raw[:, i * c : (i + 1) * c] = g
    return raw


class _UNetBase(Module):
    """Shared input checks and head plumbing for both architectures."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.input_bn = BatchNorm(cfg.freq_bins, feature_axis=3, dtype=cfg.dtype)

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4:
            raise ValueError(f"expected a (batch, channels, time, freq) tensor, got ndim={x.ndim}")
        if x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"input has {x.shape[1]} channels, model expects {self.cfg.in_channels}")
        if x.shape[3] != self.cfg.freq_bins:
            raise ValueError(f"input has {x.shape[3]} frequency bins, model was built for {self.cfg.freq_bins}")
        m = self.cfg.grid_multiple
        if x.shape[2] % m or x.shape[3] % m:
            raise ValueError(
                f"spatial dims {x.shape[2]}x{x.shape[3]} are not divisible by {m}; pad the input first"
            )

    def forward_heads(self, x: np.ndarray, training: bool = False) -> HeadOutputs:
        """Forward pass returning activated head grids instead of the raw tensor."""
        return split_heads(self.forward(x, training), self.cfg)


class UNet(_UNetBase):
    """Plain UNet: per encoder level two convs + downsample, per decoder
    level one transposed conv + two convs, then three final convs."""

    def __init__(self, cfg: NetConfig):
        super().__init__(cfg)
        rng = np.random.default_rng(cfg.seed)
        dtype = cfg.dtype
        widths = cfg.widths
        self.encoders = ModuleList(
            UNetEncoderStage(cfg.in_channels if i == 0 else widths[i - 1], widths[i], rng, dtype)
            for i in range(cfg.depth)
        )
        self.decoders = ModuleList(
            UNetDecoderStage(widths[min(i + 1, cfg.depth - 1)], widths[i], rng, dtype)
            for i in reversed(range(cfg.depth))
        )
        self.final1 = ConvBNAct(widths[0], widths[0], rng, dtype)
        self.final2 = ConvBNAct(widths[0], widths[0], rng, dtype)
        self.head_conv = Conv2d(widths[0], cfg.out_channels, rng=rng, dtype=dtype)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._check_input(x)
        h = self.input_bn.forward(x.astype(self.cfg.dtype, copy=False), training)
        skips = []
        for enc in self.encoders:
            skip, h = enc.forward(h, training)
            skips.append(skip)
        for dec, skip in zip(self.decoders, reversed(skips)):
            h = dec.forward(h, skip, training)
        h = self.final2.forward(self.final1.forward(h, training), training)
        return self.head_conv.forward(h, training)

    def backward(self, grad_raw: np.ndarray) -> np.ndarray:
        grad = self.final1.backward(self.final2.backward(self.head_conv.backward(grad_raw)))
        skip_grads = []
        for dec in reversed(list(self.decoders)):
            grad, grad_skip = dec.backward(grad)
            skip_grads.append(grad_skip)
        for enc, grad_skip in zip(reversed(list(self.encoders)), reversed(skip_grads)):
            grad = enc.backward(grad, grad_skip)
        return self.input_bn.backward(grad)


class ResUNet(_UNetBase):
    """Residual UNet: residual encoder/decoder blocks around intermediate
    convolutional blocks, a final intermediate block, and a head conv."""

    def __init__(self, cfg: NetConfig):
        super().__init__(cfg)
        rng = np.random.default_rng(cfg.seed)
        dtype, widths, n = cfg.dtype, cfg.widths, cfg.rcb_per_block
        self.encoders = ModuleList(
            ResEncoderBlock(cfg.in_channels if i == 0 else widths[i - 1], widths[i], n, rng, dtype,
                            cfg.zero_residual)
            for i in range(cfg.depth)
        )
        top = widths[cfg.depth - 1]
        self.intermediates = ModuleList(
            RcbChain(top, top, n, rng, dtype, cfg.zero_residual) for _ in range(cfg.intermediate_blocks)
        )
        self.decoders = ModuleList(
            ResDecoderBlock(widths[min(i + 1, cfg.depth - 1)], widths[i], n, rng, dtype, cfg.zero_residual)
            for i in reversed(range(cfg.depth))
        )
        self.final_icb = RcbChain(widths[0], widths[0], n, rng, dtype, cfg.zero_residual)
        self.head_conv = Conv2d(widths[0], cfg.out_channels, rng=rng, dtype=dtype)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._check_input(x)
        h = self.input_bn.forward(x.astype(self.cfg.dtype, copy=False), training)
        skips = []
        for enc in self.encoders:
            skip, h = enc.forward(h, training)
            skips.append(skip)
        for icb in self.intermediates:
            h = icb.forward(h, training)
        for dec, skip in zip(self.decoders, reversed(skips)):
            h = dec.forward(h, skip, training)
        h = self.final_icb.forward(h, training)
        return self.head_conv.forward(h, training)

    def backward(self, grad_raw: np.ndarray) -> np.ndarray:
        grad = self.final_icb.backward(self.head_conv.backward(grad_raw))
        skip_grads = []
        for dec in reversed(list(self.decoders)):
            grad, grad_skip = dec.backward(grad)
            skip_grads.append(grad_skip)
        for icb in reversed(list(self.intermediates)):
            grad = icb.backward(grad)
        for enc, grad_skip in zip(reversed(list(self.encoders)), reversed(skip_grads)):
            grad = enc.backward(grad, grad_skip)
        return self.input_bn.backward(grad)


def count_conv_layers(model: Module) -> int:
    """Number of convolutional layers (3x3 convs and transposed convs);
    1x1 shortcut projections are excluded from the tally."""
    return sum(1 for m in model.modules() if isinstance(m, (Conv2d, ConvTranspose2d)) and m.tally)


def build_unet33(cfg: NetConfig | None = None, **overrides) -> UNet:
    """The 33-conv-layer UNet: depth 6 plus three final convolutions."""
    cfg = replace(cfg, **overrides) if cfg is not None else NetConfig(**overrides)
    if cfg.depth != 6:
        raise ValueError(f"the 33-layer UNet is defined at depth 6, got {cfg.depth}")
    return UNet(cfg)


def build_resunet143(cfg: NetConfig | None = None, **overrides) -> ResUNet:
    """The 143-conv-layer residual UNet: 6 residual encoder blocks (8 convs
    each), 4 intermediate blocks (8 each), 6 residual decoder blocks (9
    each), a final intermediate block (8), and the head conv (1)."""
    cfg = replace(cfg, **overrides) if cfg is not None else NetConfig(**overrides)
    if cfg.depth != 6 or cfg.rcb_per_block != 4 or cfg.intermediate_blocks != 4:
        raise ValueError("the 143-layer residual UNet requires depth 6, 4 RCBs per block, and 4 ICBs")
    return ResUNet(cfg)
