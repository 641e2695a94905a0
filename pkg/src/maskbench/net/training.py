"""Adam training on the waveform-domain L1 loss, plus the toy problem.

A training step runs: STFT the mixtures, feed the padded magnitude stack
through the network, combine heads into a source estimate, inverse-STFT,
take the mean absolute waveform error, and backpropagate through the
whole chain (iSTFT included) into one Adam update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from maskbench.dsp import ComplexSpectrogram, StftConfig, Waveform, istft, stft
from maskbench.net.models import NetConfig, head_grads_to_raw, split_heads
from maskbench.net.pipeline import (
    PHASE_EPS,
    head_math_backward,
    head_math_forward,
    istft_adjoint,
    pad_to_multiple,
    unpad,
)

#: Per-source base learning rates (drums overfit faster than vocals, so
#: the rates differ per source).
SOURCE_LEARNING_RATES = {
    "vocals": 0.001,
    "accompaniment": 0.0005,
    "bass": 0.0001,
    "drums": 0.0002,
    "other": 0.0005,
}

LR_DECAY_FACTOR = 0.9
LR_DECAY_INTERVAL = 15_000


def lr_schedule(step: int, base_lr: float, factor: float = LR_DECAY_FACTOR,
                interval: int = LR_DECAY_INTERVAL) -> float:
    """Learning rate after ``step`` steps: multiplied by ``factor`` every
    ``interval`` steps."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return base_lr * factor ** (step // interval)


def waveform_l1_loss(est: Waveform, target: Waveform) -> float:
    """Mean absolute sample difference across channels and time."""
    if est.data.shape != target.data.shape:
        raise ValueError(f"shape mismatch: {est.data.shape} vs {target.data.shape}")
    return float(np.mean(np.abs(est.data - target.data)))


class Adam:
    """Standard Adam with bias correction; updates parameters in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, param in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            param -= (lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(param.dtype)


def batch_loss_and_grads(model, batch: list[tuple[Waveform, Waveform]],
                         stft_cfg: StftConfig, phase_eps: float = PHASE_EPS,
                         with_grads: bool = True):
    """Forward (+ backward) over one batch in training mode.

    Returns the scalar loss; with ``with_grads`` the gradients are left in
    the model (used by :func:`train_step`), without it the model is not
    touched (used by finite-difference checks).  All pairs must share
    length, rate, and channel count so their spectrograms stack.
    """
    cfg: NetConfig = model.cfg
    if with_grads:
        model.zero_grad()

    specs = [stft(mix, stft_cfg) for mix, _ in batch]
    X = np.stack([s.data for s in specs])  # (B, C, T, F)
    targets = np.stack([tgt.data for _, tgt in batch])
    n_samples = batch[0][0].samples_per_channel

    padded, size = pad_to_multiple(np.abs(X), cfg.grid_multiple)
    raw = model.forward(padded.astype(cfg.dtype), training=True)
    heads = split_heads(unpad(raw, size).astype(np.float64), cfg)

    est_spec, cache = head_math_forward(heads, X, phase_eps)
    est = np.stack([
        istft(ComplexSpectrogram(est_spec[b], stft_cfg.window_size, stft_cfg.hop_size),
              stft_cfg, n_samples)
        for b in range(len(batch))
    ])

    diff = est - targets
    loss = float(np.mean(np.abs(diff)))
    if not with_grads:
        return loss

    grad_wave = np.sign(diff) / diff.size
    grad_spec = np.stack([
        istft_adjoint(grad_wave[b], stft_cfg, X.shape[2]) for b in range(len(batch))
    ])
    head_grads = head_math_backward(cache, grad_spec)
    grad_raw = head_grads_to_raw(heads, head_grads, cfg)
    grad_padded = np.zeros(padded.shape[:1] + (cfg.out_channels,) + padded.shape[2:], dtype=cfg.dtype)
    grad_padded[:, :, : size[0], : size[1]] = grad_raw
    model.backward(grad_padded)
    return loss


def train_step(model, batch, adam: Adam, lr: float,
               stft_cfg: StftConfig, phase_eps: float = PHASE_EPS) -> float:
    """One Adam update on a batch of (mixture, target) waveform pairs."""
    loss = batch_loss_and_grads(model, batch, stft_cfg, phase_eps)
    if not math.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss {loss} at adam step {adam.step_count + 1} (lr={lr}); "
            "check input scaling and learning rate"
        )
    adam.step(dict(model.named_gradients()), lr)
    return loss


# ---------------------------------------------------------------------------
# Toy problem: a deterministic 2-source task small enough for CI
# ---------------------------------------------------------------------------

TOY_SAMPLE_RATE = 2048
TOY_SECONDS = 0.5
TOY_STFT = StftConfig(window_size=64, hop_size=32)
TOY_WIDTHS = (4, 8, 8, 12, 12, 16)


def toy_net_config(seed: int = 0) -> NetConfig:
    # window 64 -> 33 bins -> padded to 64 for the depth-6 grid
    return NetConfig(variant="decouple_plus", in_channels=1, widths=TOY_WIDTHS,
                     freq_bins=64, seed=seed)


def make_toy_batches(seed: int, n_items: int = 4) -> list[tuple[Waveform, Waveform]]:
    """Fixed set of (mixture, target) pairs: low-band harmonic target plus
    a high-band noise interferer, mostly disjoint in frequency."""
    rng = np.random.default_rng(seed)
    n = int(TOY_SECONDS * TOY_SAMPLE_RATE)
    t = np.arange(n) / TOY_SAMPLE_RATE
    pairs = []
    for _ in range(n_items):
        f0 = rng.uniform(60.0, 140.0)
        target = np.zeros(n)
        for k, amp in enumerate((0.5, 0.3, 0.2), start=1):
            target += amp * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi))
        target *= 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t) ** 2

        noise = rng.standard_normal(n)
        spectrum = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(n, 1.0 / TOY_SAMPLE_RATE)
        spectrum[freqs < 550.0] = 0.0
        interferer = np.fft.irfft(spectrum, n)
        interferer *= 0.4 / (np.abs(interferer).max() + 1e-12)

        mixture = target + interferer
        pairs.append((Waveform(mixture[None], TOY_SAMPLE_RATE), Waveform(target[None], TOY_SAMPLE_RATE)))
    return pairs


@dataclass
class ToyTrainResult:
    losses: list[float]
    initial_loss: float
    final_loss: float


def train_toy(model, steps: int = 200, seed: int = 0, base_lr: float = 3e-3,
              batch_size: int = 2, log=None) -> ToyTrainResult:
    """Seeded toy training loop used by the CLI and the smoke tests.

    Cycles deterministically through the fixed toy pairs; ``initial_loss``
    is the first step's loss, ``final_loss`` the mean loss over the last
    five steps (the tail smooths per-batch jitter).
    """
    pairs = make_toy_batches(seed)
    adam = Adam(dict(model.named_parameters()), lr=base_lr)
    losses = []
    for step in range(steps):
        batch = [pairs[(step * batch_size + i) % len(pairs)] for i in range(batch_size)]
        lr = lr_schedule(step, base_lr)
        loss = train_step(model, batch, adam, lr, TOY_STFT)
        losses.append(loss)
        if log is not None:
            log(step, loss)
    tail = losses[-5:] if len(losses) >= 5 else losses
    return ToyTrainResult(losses, losses[0], float(np.mean(tail)))
