"""Signal-to-distortion ratio metrics and the oracle upper-bound benchmark.

The benchmark applies oracle masks of a chosen family and magnitude bound
to a mixture built by summing the provided stems, resynthesizes, and
scores each (source, variant) cell with the energy-ratio SDR.  It answers
"how well could any estimator of this mask family possibly do on these
stems".
"""

from __future__ import annotations

import io
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from maskbench import masks
from maskbench.dsp import ComplexSpectrogram, StftConfig, Waveform, istft, stft

#: dB ceiling applied when rendering reports (raw values stay available).
REPORT_CAP_DB = 100.0


def _sdr_arrays(reference: np.ndarray, estimate: np.ndarray, eps: float) -> float:
    signal = float(np.sum(reference * reference))
    if signal == 0.0:
        return -math.inf
    noise = float(np.sum((estimate - reference) ** 2))
    return 10.0 * math.log10(signal / (noise + eps))


def sdr(reference: Waveform, estimate: Waveform, eps: float = 1e-10) -> float:
    """Energy-ratio SDR in dB: ``10 log10(||s||^2 / (||s_hat - s||^2 + eps))``.

    Multi-channel signals are flattened into one vector before the norms.
    Returns ``-inf`` for an all-zero reference.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if reference.data.shape != estimate.data.shape:
        raise ValueError(
            f"reference shape {reference.data.shape} != estimate shape {estimate.data.shape}"
        )
    return _sdr_arrays(reference.data.ravel(), estimate.data.ravel(), eps)


def windowed_median_sdr(
    reference: Waveform,
    estimate: Waveform,
    window_s: float = 1.0,
    eps: float = 1e-10,
) -> float:
    """Median of per-window SDRs over non-overlapping windows.

    Windows with a silent reference are skipped; a trailing partial window
    is dropped.  Returns ``-inf`` if every window was silent.
    """
    if window_s <= 0:
        raise ValueError("window_s must be > 0")
    if reference.data.shape != estimate.data.shape:
        raise ValueError(
            f"reference shape {reference.data.shape} != estimate shape {estimate.data.shape}"
        )
    win = int(round(window_s * reference.sample_rate))
    n = reference.samples_per_channel
    if n < win:
        raise ValueError(f"signal of {n} samples is shorter than one {win}-sample window")
    values = []
    for start in range(0, n - win + 1, win):
        ref = reference.data[:, start : start + win].ravel()
        if not np.any(ref):
            continue
        values.append(_sdr_arrays(ref, estimate.data[:, start : start + win].ravel(), eps))
    if not values:
        return -math.inf
    return statistics.median(values)


@dataclass(frozen=True)
class MaskVariant:
    """An oracle separation recipe: mask family plus magnitude bound."""

    kind: str  # mixture | ibm | irm | cirm
    bound: float = math.inf

    def __post_init__(self):
        if self.kind not in ("mixture", "ibm", "irm", "cirm"):
            raise ValueError(f"unknown mask variant kind: {self.kind!r}")
        if self.bound <= 0:
            raise ValueError(f"mask bound must be > 0, got {self.bound}")

    @property
    def label(self) -> str:
        if self.kind in ("mixture", "ibm"):
            return self.kind
        bound = "inf" if math.isinf(self.bound) else f"{self.bound:g}"
        return f"{self.kind}:{bound}"


def parse_variant(text: str) -> MaskVariant:
    """Parse one ``kind[:bound]`` token, e.g. ``cirm:1`` or ``irm:inf``."""
    kind, _, bound = text.strip().partition(":")
    if not bound:
        return MaskVariant(kind)
    return MaskVariant(kind, math.inf if bound == "inf" else float(bound))


def parse_variants(text: str) -> list[MaskVariant]:
    """Parse a comma-separated variant list."""
    return [parse_variant(item) for item in text.split(",") if item.strip()]


DEFAULT_VARIANTS = parse_variants("mixture,ibm,irm:1,irm:inf,cirm:1,cirm:2,cirm:5,cirm:10,cirm:inf")


@dataclass
class SdrReport:
    """Per-source SDRs for every requested mask variant."""

    sources: list[str]
    variants: list[str]
    scores: dict[str, dict[str, float]]
    aggregation: str = "global"
    cap_db: float = field(default=REPORT_CAP_DB, repr=False)

    def capped(self, source: str, variant: str) -> float:
        return min(self.scores[source][variant], self.cap_db)

    def to_csv(self, out: io.TextIOBase) -> None:
        """``source,variant,sdr_db`` rows, dB values capped for comparability."""
        out.write("source,variant,sdr_db\n")
        for source in self.sources:
            for variant in self.variants:
                out.write(f"{source},{variant},{self.capped(source, variant):.4f}\n")

    def to_table(self) -> str:
        """Human-readable table: sources as rows, variants as columns."""
        width = max(len(v) for v in self.variants) + 2
        name_w = max(len(s) for s in self.sources) + 2
        lines = ["".ljust(name_w) + "".join(v.rjust(width) for v in self.variants)]
        for source in self.sources:
            cells = "".join(f"{self.capped(source, v):{width}.2f}" for v in self.variants)
            lines.append(source.ljust(name_w) + cells)
        return "\n".join(lines)


def separate_with_variant(
    variant: MaskVariant,
    S: ComplexSpectrogram,
    X: ComplexSpectrogram,
    mixture: Waveform,
    cfg: StftConfig,
    eps: float,
) -> Waveform:
    """Apply one oracle mask variant and resynthesize the estimate."""
    if variant.kind == "mixture":
        return mixture
    if variant.kind == "ibm":
        mag = masks.ideal_binary_mask(S, X) * np.abs(X.data)
        est = masks.apply_magnitude_with_mixture_phase(mag, X)
    elif variant.kind == "irm":
        mag = masks.ideal_ratio_mask(S, X, bound=variant.bound, eps=eps) * np.abs(X.data)
        est = masks.apply_magnitude_with_mixture_phase(mag, X)
    else:  # cirm
        M = masks.compute_cirm(S, X, eps=eps)
        M = masks.clip_mask_magnitude(M, variant.bound)
        est = masks.apply_complex_mask(M, X)
    data = istft(est, cfg, mixture.samples_per_channel)
    return Waveform(data, mixture.sample_rate)


def oracle_benchmark(
    stems: dict[str, Waveform],
    variants: list[MaskVariant] | None = None,
    stft_cfg: StftConfig | None = None,
    eps: float = 1e-10,
    aggregation: str = "global",
    window_s: float = 1.0,
) -> SdrReport:
    """Score oracle separations of every stem from the summed mixture.

    For each source the oracle mask is computed from the true source and
    mixture spectrograms, applied (complex product for cIRM variants,
    mixture-phase magnitude for IBM/IRM), resynthesized and compared
    against the stem.  The ``mixture`` variant scores the unprocessed
    mixture as the estimate.

    Args:
        stems: at least two equal-length, equal-rate source waveforms.
        variants: recipes to evaluate; defaults to :data:`DEFAULT_VARIANTS`.
        stft_cfg: analysis parameters (default ``StftConfig()``).
        eps: stabilizer for mask division and the SDR denominator.
        aggregation: ``global`` or ``windowed_median``.
        window_s: window length for the ``windowed_median`` aggregation.
    """
    if len(stems) < 2:
        raise ValueError(f"need at least 2 sources, got {len(stems)}")
    if aggregation not in ("global", "windowed_median"):
        raise ValueError(f"unknown aggregation: {aggregation!r}")
    variants = list(variants) if variants is not None else list(DEFAULT_VARIANTS)
    cfg = stft_cfg if stft_cfg is not None else StftConfig()

    names = list(stems)
    first = stems[names[0]]
    for name in names[1:]:
        if stems[name].data.shape != first.data.shape or stems[name].sample_rate != first.sample_rate:
            raise ValueError(f"stem {name!r} does not match the shape/rate of {names[0]!r}")

    mixture = Waveform(sum(stems[name].data for name in names), first.sample_rate)
    X = stft(mixture, cfg)

    scores: dict[str, dict[str, float]] = {}
    for name in names:
        S = stft(stems[name], cfg)
        row: dict[str, float] = {}
        for variant in variants:
            estimate = separate_with_variant(variant, S, X, mixture, cfg, eps)
            if aggregation == "windowed_median":
                row[variant.label] = windowed_median_sdr(stems[name], estimate, window_s, eps)
            else:
                row[variant.label] = sdr(stems[name], estimate, eps)
        scores[name] = row
    return SdrReport(names, [v.label for v in variants], scores, aggregation)
