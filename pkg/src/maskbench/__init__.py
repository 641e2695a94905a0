"""maskbench: complex-mask calculus, oracle SDR benchmarking, and
desk-scale residual UNets for music source separation."""

__version__ = "0.1.0"

from maskbench.dsp import ComplexSpectrogram, StftConfig, Waveform, istft, stft

__all__ = [
    "ComplexSpectrogram",
    "StftConfig",
    "Waveform",
    "istft",
    "stft",
    "__version__",
]
