"""Desk-scale UNet/ResUNet: forward, hand-written backward, Adam training."""

from maskbench.net.models import (
    HeadOutputs,
    NetConfig,
    ResUNet,
    UNet,
    build_resunet143,
    build_unet33,
    count_conv_layers,
    split_heads,
)
from maskbench.net.pipeline import force_identity_heads, separate
from maskbench.net.training import (
    Adam,
    SOURCE_LEARNING_RATES,
    lr_schedule,
    train_step,
    waveform_l1_loss,
)
from maskbench.net.weights_io import load_weights, save_weights

__all__ = [
    "Adam",
    "HeadOutputs",
    "NetConfig",
    "ResUNet",
    "SOURCE_LEARNING_RATES",
    "UNet",
    "build_resunet143",
    "build_unet33",
    "count_conv_layers",
    "force_identity_heads",
    "load_weights",
    "lr_schedule",
    "save_weights",
    "separate",
    "split_heads",
    "train_step",
    "waveform_l1_loss",
]
