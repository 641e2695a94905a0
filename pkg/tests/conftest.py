import numpy as np
import pytest

from maskbench.dsp import ComplexSpectrogram, StftConfig, Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spec(rng, channels=1, frames=6, window=16, scale=1.0):
    """Random complex spectrogram with the matching bin count."""
    bins = window // 2 + 1
    data = scale * (rng.standard_normal((channels, frames, bins))
                    + 1j * rng.standard_normal((channels, frames, bins)))
    return ComplexSpectrogram(data, origin_window=window, origin_hop=window // 4)


def make_out_of_phase_stems(rng, n_sources=2, sample_rate=8000, seconds=1.0):
    """Synthetic stems where one source is partly anti-correlated with the
    first, guaranteeing mask magnitudes above 1 in the mixture."""
    n = int(sample_rate * seconds)
    t = np.arange(n) / sample_rate
    stems = {}
    base = 0.5 * np.sin(2 * np.pi * rng.uniform(200, 500) * t)
    base += 0.2 * np.sin(2 * np.pi * rng.uniform(600, 1200) * t + rng.uniform(0, 2 * np.pi))
    stems["src0"] = Waveform(base[None], sample_rate)
    anti = -rng.uniform(0.4, 0.7) * base + 0.25 * rng.standard_normal(n)
    stems["src1"] = Waveform(anti[None], sample_rate)
    for k in range(2, n_sources):
        extra = 0.3 * np.sin(2 * np.pi * rng.uniform(150, 2000) * t + rng.uniform(0, 2 * np.pi))
        extra += 0.1 * rng.standard_normal(n)
        stems[f"src{k}"] = Waveform(extra[None], sample_rate)
    return stems


SMALL_STFT = StftConfig(window_size=512, hop_size=128)
