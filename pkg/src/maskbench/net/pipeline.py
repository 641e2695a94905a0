"""End-to-end separation: spectrogram in, separated waveform out.

Also hosts the differentiable path from head grids to the waveform-domain
loss (magnitude combination, phase-rotation reconstruction, inverse STFT)
with an exact adjoint for training.  The head math matches the public
:mod:`maskbench.masks` functions bin for bin; they are re-expressed here
so every intermediate needed by the backward pass is cached.
"""

from __future__ import annotations

import numpy as np

from maskbench import masks
from maskbench.dsp import StftConfig, Waveform, istft, stft
from maskbench.net.models import HeadOutputs, NetConfig, split_heads

#: Stabilizer inside the phase-normalization square root.
PHASE_EPS = 1e-12


def pad_to_multiple(x: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Pad the trailing (time, freq) axes up to a multiple; returns the
    padded tensor and the original (time, freq) for unpadding.

    Reflect padding is used when the signal is long enough, edge padding
    otherwise (tiny toy grids).
    """
    t, f = x.shape[-2], x.shape[-1]
    pad_t = (-t) % multiple
    pad_f = (-f) % multiple
    if pad_t == 0 and pad_f == 0:
        return x, (t, f)
    spec = [(0, 0)] * (x.ndim - 2) + [(0, pad_t), (0, pad_f)]
    mode = "reflect" if pad_t < t and pad_f < f else "edge"
    return np.pad(x, spec, mode=mode), (t, f)


def unpad(x: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    return x[..., : size[0], : size[1]]


def istft_adjoint(grad_wave: np.ndarray, cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Adjoint of :func:`maskbench.dsp.istft` as a real-linear map.

    Given the gradient w.r.t. the synthesized waveform ``(channels, L)``,
    returns the gradient w.r.t. the complex spectrogram ``(channels,
    n_frames, bins)``, where real/imag parts carry d(loss)/d(Re S) and
    d(loss)/d(Im S).  The DC and Nyquist bins have no imaginary degree of
    freedom, so their imaginary gradients are zero.
    """
    win = cfg.window_size
    hop = cfg.hop_size
    window = cfg.window()
    total = (n_frames - 1) * hop + win
    channels = grad_wave.shape[0]
    start = win // 2 if cfg.center_pad else 0

    norm = np.zeros(total)
    wsq = window * window
    for t in range(n_frames):
        norm[t * hop : t * hop + win] += wsq
    covered = norm > 1e-12

    g = np.zeros((channels, total))
    usable = min(grad_wave.shape[1], total - start)
    g[:, start : start + usable] = grad_wave[:, :usable]
    g[:, covered] /= norm[covered]
    g[:, ~covered] = 0.0

    frames = np.lib.stride_tricks.sliding_window_view(g, win, axis=1)[:, ::hop][:, :n_frames]
    spec_grad = np.fft.rfft(frames * window, axis=-1)
    scale = np.full(win // 2 + 1, 2.0 / win)
    scale[0] = 1.0 / win
    if win % 2 == 0:
        scale[-1] = 1.0 / win
    spec_grad *= scale
    spec_grad[..., 0] = spec_grad[..., 0].real
    if win % 2 == 0:
        spec_grad[..., -1] = spec_grad[..., -1].real
    return spec_grad


def head_math_forward(
    heads: HeadOutputs,
    X: np.ndarray,
    phase_eps: float = PHASE_EPS,
) -> tuple[np.ndarray, dict]:
    """Heads + mixture spectrogram -> estimated source spectrogram.

    ``X`` is a complex ``(batch, channels, time, freq)`` stack.  Returns
    the complex estimate and a cache for :func:`head_math_backward`.
    """
    m, q, p_r, p_i = heads.m_mag, heads.q, heads.p_r, heads.p_i
    denom = np.sqrt(p_r * p_r + p_i * p_i + phase_eps)
    cos_m = p_r / denom
    sin_m = p_i / denom

    x_mag = np.abs(X)
    pre = m * x_mag + q
    s_mag = np.maximum(pre, 0.0)

    safe = np.where(x_mag > 0, x_mag, 1.0)
    cos_x = np.where(x_mag > 0, X.real / safe, 1.0)
    sin_x = np.where(x_mag > 0, X.imag / safe, 0.0)

    est_r = s_mag * (cos_m * cos_x - sin_m * sin_x)
    est_i = s_mag * (sin_m * cos_x + cos_m * sin_x)
    cache = dict(
        heads=heads, denom=denom, cos_m=cos_m, sin_m=sin_m, x_mag=x_mag,
        pre=pre, s_mag=s_mag, cos_x=cos_x, sin_x=sin_x, phase_eps=phase_eps,
    )
    return est_r + 1j * est_i, cache


def head_math_backward(cache: dict, grad_spec: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients w.r.t. the four head grids given d(loss)/d(estimate).

    ``grad_spec`` is complex with real/imag parts holding the gradients
    w.r.t. the real/imag parts of the estimate.
    """
    heads: HeadOutputs = cache["heads"]
    cos_m, sin_m = cache["cos_m"], cache["sin_m"]
    cos_x, sin_x = cache["cos_x"], cache["sin_x"]
    s_mag, pre, x_mag = cache["s_mag"], cache["pre"], cache["x_mag"]
    denom, phase_eps = cache["denom"], cache["phase_eps"]
    p_r, p_i = heads.p_r, heads.p_i

    g_r, g_i = grad_spec.real, grad_spec.imag
    d_smag = g_r * (cos_m * cos_x - sin_m * sin_x) + g_i * (sin_m * cos_x + cos_m * sin_x)
    d_cos = s_mag * (g_r * cos_x + g_i * sin_x)
    d_sin = s_mag * (-g_r * sin_x + g_i * cos_x)

    d_pre = np.where(pre > 0, d_smag, 0.0)
    d_m = d_pre * x_mag
    d_q = d_pre

    inv_d3 = 1.0 / (denom * denom * denom)
    d_pr = (d_cos * (p_i * p_i + phase_eps) - d_sin * p_r * p_i) * inv_d3
    d_pi = (-d_cos * p_r * p_i + d_sin * (p_r * p_r + phase_eps)) * inv_d3
    return {"m_mag": d_m, "q": d_q, "p_r": d_pr, "p_i": d_pi}


def separate(model, mixture: Waveform, stft_cfg: StftConfig | None = None) -> Waveform:
    """Run the full separation pipeline in eval mode.

    stft -> magnitude -> pad -> network heads -> bounded-mask + residual
    magnitude -> phase-rotation reconstruction -> istft, truncated to the
    input length.
    """
    cfg: NetConfig = model.cfg
    stft_cfg = stft_cfg if stft_cfg is not None else StftConfig()
    X = stft(mixture, stft_cfg)
    mag = np.abs(X.data)[None]  # (1, C, T, F)
    padded, size = pad_to_multiple(mag, cfg.grid_multiple)
    raw = model.forward(padded.astype(cfg.dtype), training=False)
    heads = split_heads(unpad(raw, size).astype(np.float64), cfg)

    cos_m, sin_m = masks.decouple_phase(heads.p_r[0], heads.p_i[0], eps=PHASE_EPS)
    s_mag = masks.combine_mask_direct(heads.m_mag[0], np.abs(X.data), heads.q[0])
    est = masks.reconstruct_stft(s_mag, cos_m, sin_m, X)
    data = istft(est, stft_cfg, mixture.samples_per_channel)
    return Waveform(data, mixture.sample_rate)


def force_identity_heads(model, mask_logit: float = 20.0) -> None:
    """Overwrite the head conv so the model is a pass-through separator.

    Zeroes the final convolution and sets per-head biases to (sigmoid
    saturated) m_mag ~ 1, q = 0, p_r = 1, p_i = 0: the estimate becomes
    the mixture itself up to STFT round-trip error.  Useful as a pipeline
    oracle and for smoke-testing the weights container.
    """
    cfg: NetConfig = model.cfg
    model.head_conv.weight[...] = 0.0
    bias_values = {"m_mag": mask_logit, "q": 0.0, "p_r": 1.0, "p_i": 0.0}
    c = cfg.in_channels
    for i, name in enumerate(cfg.head_names):
        model.head_conv.bias[i * c : (i + 1) * c] = bias_values[name]
