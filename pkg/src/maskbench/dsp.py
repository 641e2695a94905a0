"""STFT/iSTFT engine and complex-spectrogram primitives.

Conventions used throughout the package:

* waveforms are ``(channels, samples)`` float64 arrays in a nominal
  [-1, 1] range,
* spectrograms are ``(channels, frames, bins)`` complex128 arrays with a
  one-sided spectrum (``bins = window_size // 2 + 1``),
* ``angle(0) == 0`` (the ``atan2(0, 0)`` convention).

All functions are pure and thread-safe; 64-bit floats are used internally.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Denominators below this are treated as zero during overlap-add division.
_OLA_TINY = 1e-12


@dataclass(frozen=True)
class Waveform:
    """A multi-channel time-domain signal.

    Attributes:
        data: ``(channels, samples)`` float64 array, channel-major.
        sample_rate: sampling rate in Hz, > 0.
    """

    data: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2:
            raise ValueError(f"waveform data must be 2-D (channels, samples), got ndim={data.ndim}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples_per_channel(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.samples_per_channel / self.sample_rate

    def with_data(self, data: np.ndarray) -> "Waveform":
        return dataclasses.replace(self, data=data)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """A per-channel one-sided complex STFT grid.

    Attributes:
        data: ``(channels, frames, bins)`` complex128 array.
        origin_window: analysis window length in samples.
        origin_hop: analysis hop in samples.
    """

    data: np.ndarray
    origin_window: int
    origin_hop: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 3:
            raise ValueError(f"spectrogram data must be 3-D (channels, frames, bins), got ndim={data.ndim}")
        if data.shape[1] < 1:
            raise ValueError("spectrogram must contain at least one frame")
        expected_bins = self.origin_window // 2 + 1
        if data.shape[2] != expected_bins:
            raise ValueError(
                f"bin count {data.shape[2]} does not match one-sided spectrum of "
                f"window {self.origin_window} (expected {expected_bins})"
            )
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def bins(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "ComplexSpectrogram":
        """Return a copy carrying ``data`` with the same STFT origin metadata."""
        return dataclasses.replace(self, data=data)


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis parameters for :func:`stft` and :func:`istft`."""

    window_size: int = 2048
    hop_size: int = 441
    window_kind: str = "hann"
    center_pad: bool = True

    def __post_init__(self):
        if self.window_size <= 0 or self.hop_size <= 0:
            raise ValueError("window_size and hop_size must be > 0")
        if self.hop_size > self.window_size:
            raise ValueError(f"hop_size {self.hop_size} exceeds window_size {self.window_size}")
        if self.window_kind != "hann":
            raise ValueError(f"unsupported window kind: {self.window_kind!r}")

    def window(self) -> np.ndarray:
        return hann_window(self.window_size)


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window of the given length."""
    n = np.arange(length, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / length))


@lru_cache(maxsize=8)
def _window_cached(length: int) -> np.ndarray:
    window = hann_window(length)
    window.setflags(write=False)
    return window


@lru_cache(maxsize=16)
def _ola_norm(window_size: int, hop_size: int, n_frames: int) -> tuple[np.ndarray, np.ndarray]:
    """Summed squared synthesis window per output sample.

    Returns (norm, covered): the denominator with uncovered positions
    replaced by 1, and the boolean coverage mask.  Both are cached and
    read-only.
    """
    window = _window_cached(window_size)
    total = (n_frames - 1) * hop_size + window_size
    norm = np.zeros(total)
    wsq = window * window
    for t in range(n_frames):
        norm[t * hop_size : t * hop_size + window_size] += wsq
    covered = norm > _OLA_TINY
    norm[~covered] = 1.0
    norm.setflags(write=False)
    covered.setflags(write=False)
    return norm, covered


def _frame_count(n_samples: int, cfg: StftConfig) -> int:
    padded = n_samples + 2 * (cfg.window_size // 2) if cfg.center_pad else n_samples
    if padded < cfg.window_size:
        raise ValueError(
            f"window of {cfg.window_size} samples is larger than the "
            f"{'padded ' if cfg.center_pad else ''}signal of {padded} samples"
        )
    return 1 + (padded - cfg.window_size) // cfg.hop_size


def stft(wave: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    """Short-time Fourier transform of every channel.

    With ``center_pad=True`` the signal is zero-padded by half a window on
    both sides so that frame ``t`` is centered on sample ``t * hop_size``.

    Args:
        wave: input signal, must be non-empty.
        cfg: analysis parameters.

    Returns:
        One-sided complex spectrogram, shape ``(channels, frames, bins)``.
    """
    if wave.samples_per_channel == 0:
        raise ValueError("cannot transform an empty waveform")
    n_frames = _frame_count(wave.samples_per_channel, cfg)
    x = wave.data
    if cfg.center_pad:
        pad = cfg.window_size // 2
        x = np.pad(x, ((0, 0), (pad, pad)))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_size, axis=1)
    frames = frames[:, :: cfg.hop_size][:, :n_frames]
    spec = np.fft.rfft(frames * _window_cached(cfg.window_size), axis=-1)
    return ComplexSpectrogram(spec, origin_window=cfg.window_size, origin_hop=cfg.hop_size)


def istft(spec: ComplexSpectrogram, cfg: StftConfig, out_length: int) -> "np.ndarray":
    """Inverse STFT via weighted overlap-add.

    The analysis Hann window is reused for synthesis and the overlap-add
    result is divided by the summed squared window, which reconstructs
    unmodified spectrograms exactly wherever the window coverage is
    non-zero.  The output is truncated or zero-padded to ``out_length``.

    Returns:
        ``(channels, out_length)`` float64 array.  (Callers that need a
        :class:`Waveform` attach their own sample rate.)
    """
    if cfg.window_size != spec.origin_window or cfg.hop_size != spec.origin_hop:
        raise ValueError(
            f"config (window={cfg.window_size}, hop={cfg.hop_size}) does not match "
            f"spectrogram origin (window={spec.origin_window}, hop={spec.origin_hop})"
        )
    frames = np.fft.irfft(spec.data, n=cfg.window_size, axis=-1)
    frames *= _window_cached(cfg.window_size)
    n_channels, n_frames = frames.shape[0], frames.shape[1]
    total = (n_frames - 1) * cfg.hop_size + cfg.window_size
    out = np.zeros((n_channels, total))
    for t in range(n_frames):
        start = t * cfg.hop_size
        out[:, start : start + cfg.window_size] += frames[:, t]
    norm, covered = _ola_norm(cfg.window_size, cfg.hop_size, n_frames)
    out /= norm
    if not covered.all():
        out[:, ~covered] = 0.0
    start = cfg.window_size // 2 if cfg.center_pad else 0
    result = out[:, start : start + out_length]
    if result.shape[1] < out_length:
        result = np.pad(result, ((0, 0), (0, out_length - result.shape[1])))
    return result


def magnitude(spec: ComplexSpectrogram) -> np.ndarray:
    """Per-bin magnitude, ``(channels, frames, bins)`` float64."""
    return np.abs(spec.data)


def angle(spec: ComplexSpectrogram) -> np.ndarray:
    """Per-bin phase in [-pi, pi]; zero bins map to angle 0."""
    return np.angle(spec.data)


def polar(mag: np.ndarray, ang: np.ndarray, like: ComplexSpectrogram) -> ComplexSpectrogram:
    """Rebuild a spectrogram from magnitude and phase grids.

    ``like`` supplies the STFT origin metadata; ``polar(magnitude(X),
    angle(X), X)`` equals ``X`` up to floating-point rounding.
    """
    mag = np.asarray(mag, dtype=np.float64)
    ang = np.asarray(ang, dtype=np.float64)
    if mag.shape != ang.shape:
        raise ValueError(f"magnitude shape {mag.shape} != angle shape {ang.shape}")
    if mag.shape != like.data.shape:
        raise ValueError(f"grid shape {mag.shape} != spectrogram shape {like.data.shape}")
    return like.with_data(mag * np.exp(1j * ang))
