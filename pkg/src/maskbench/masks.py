"""Mask mathematics for spectrogram-domain source separation.

Covers the oracle masks (binary, ratio, complex ratio with magnitude
bounds), the decoupled magnitude/phase reconstruction of a complex mask
from network head outputs, the bounded-mask-plus-residual magnitude
combination, and a distribution analyzer for complex masks.

Masks are plain numpy arrays shaped like the spectrogram they apply to,
``(channels, frames, bins)``: complex128 for complex masks, float64 for
magnitude masks.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from maskbench.dsp import ComplexSpectrogram

#: Number of uniform angle-histogram buckets over [-pi, pi].
ANGLE_BUCKETS = 36

#: Largest number of (re, im) points kept in a scatter sample.
MAX_SCATTER_POINTS = 50_000


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def compute_cirm(S: ComplexSpectrogram, X: ComplexSpectrogram, eps: float = 1e-10) -> np.ndarray:
    """Complex ideal ratio mask M = S / X.

    Computed through the real/imaginary expansion
    ``(S_r X_r + S_i X_i + i (S_i X_r - S_r X_i)) / (X_r^2 + X_i^2 + eps)``
    so a non-zero ``eps`` stabilizes silent mixture bins.  ``eps=0`` gives
    the exact division (and 0/0 -> nan, so reserve it for analytic inputs).
    """
    _check_shapes(S.data, X.data, "compute_cirm")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    xr, xi = X.data.real, X.data.imag
    sr, si = S.data.real, S.data.imag
    denom = xr * xr + xi * xi + eps
    return ((sr * xr + si * xi) + 1j * (si * xr - sr * xi)) / denom


def apply_complex_mask(M: np.ndarray, X: ComplexSpectrogram) -> ComplexSpectrogram:
    """Elementwise complex product M * X: a magnitude scaling plus a phase rotation."""
    M = np.asarray(M)
    _check_shapes(M, X.data, "apply_complex_mask")
    return X.with_data(M * X.data)


def ideal_binary_mask(S: ComplexSpectrogram, X: ComplexSpectrogram) -> np.ndarray:
    """Per-bin 0/1 mask selecting bins where the target dominates the residual.

    A bin is kept when ``|S| >= |X - S|``, i.e. the target is at least as
    strong as everything else in the mixture at that bin.
    """
    _check_shapes(S.data, X.data, "ideal_binary_mask")
    return (np.abs(S.data) >= np.abs(X.data - S.data)).astype(np.float64)


def ideal_ratio_mask(
    S: ComplexSpectrogram,
    X: ComplexSpectrogram,
    bound: float = math.inf,
    eps: float = 1e-10,
) -> np.ndarray:
    """Magnitude ratio mask |S| / (|X| + eps), clipped to [0, bound]."""
    _check_shapes(S.data, X.data, "ideal_ratio_mask")
    mask = np.abs(S.data) / (np.abs(X.data) + eps)
    if math.isfinite(bound):
        mask = np.minimum(mask, bound)
    return mask


def clip_mask_magnitude(M: np.ndarray, bound: float) -> np.ndarray:
    """Clip |M| to ``bound`` while preserving each bin's angle.

    Bins with ``|M| <= bound`` pass through bit-identically.
    """
    if bound <= 0:
        raise ValueError(f"bound must be > 0, got {bound}")
    M = np.asarray(M, dtype=np.complex128)
    if not math.isfinite(bound):
        return M.copy()
    mag = np.abs(M)
    over = mag > bound
    out = M.copy()
    out[over] *= bound / mag[over]
    return out


def apply_magnitude_with_mixture_phase(mag: np.ndarray, X: ComplexSpectrogram) -> ComplexSpectrogram:
    """Attach the mixture's phase to a magnitude grid.

    ``mag`` is the estimated source magnitude |S| (callers separating with
    a magnitude mask multiply it by |X| first).  Zero mixture bins use the
    angle-0 convention, so the output there is ``mag`` itself.
    """
    mag = np.asarray(mag, dtype=np.float64)
    _check_shapes(mag, X.data, "apply_magnitude_with_mixture_phase")
    xmag = np.abs(X.data)
    unit = np.where(xmag > 0, X.data / np.where(xmag > 0, xmag, 1.0), 1.0 + 0.0j)
    return X.with_data(mag * unit)


def decouple_phase(p_r: np.ndarray, p_i: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Turn unnormalized head outputs into (cos, sin) of the mask angle.

    ``cos = p_r / sqrt(p_r^2 + p_i^2 + eps)`` and likewise for sin.  Where
    both heads are ~0 the outputs degrade to (0, 0), which downstream
    reconstruction treats as a zero mask.  The shrinkage from ``eps`` is
    bounded by ``eps / (2 (p_r^2 + p_i^2))``.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    p_r = np.asarray(p_r, dtype=np.float64)
    p_i = np.asarray(p_i, dtype=np.float64)
    _check_shapes(p_r, p_i, "decouple_phase")
    denom = np.sqrt(p_r * p_r + p_i * p_i + eps)
    return p_r / denom, p_i / denom


def recover_cirm(m_mag: np.ndarray, cos_m: np.ndarray, sin_m: np.ndarray) -> np.ndarray:
    """Assemble the complex mask ``m_mag * (cos + j sin)``."""
    m_mag = np.asarray(m_mag, dtype=np.float64)
    _check_shapes(m_mag, np.asarray(cos_m), "recover_cirm")
    _check_shapes(m_mag, np.asarray(sin_m), "recover_cirm")
    return m_mag * cos_m + 1j * (m_mag * sin_m)


def combine_mask_direct(m_mag: np.ndarray, x_mag: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Bounded-mask magnitude plus a direct-prediction residual.

    ``relu(m_mag * x_mag + q)``: the residual term lets the effective mask
    magnitude exceed the [0, 1] ceiling of ``m_mag`` alone, and the relu
    keeps the result a valid magnitude.
    """
    m_mag = np.asarray(m_mag, dtype=np.float64)
    _check_shapes(m_mag, np.asarray(x_mag), "combine_mask_direct")
    _check_shapes(m_mag, np.asarray(q), "combine_mask_direct")
    return np.maximum(m_mag * x_mag + q, 0.0)


def reconstruct_stft(
    s_mag: np.ndarray,
    cos_m: np.ndarray,
    sin_m: np.ndarray,
    X: ComplexSpectrogram,
) -> ComplexSpectrogram:
    """Build the separated STFT from a magnitude and a mask-angle rotation.

    Per bin the output is ``s_mag * exp(j (angle_m + angle_x))``, computed
    with the angle-addition identities from ``(cos_m, sin_m)`` and the
    mixture's own cos/sin, so no atan2 is evaluated.  Zero mixture bins use
    the angle-0 convention (cos 1, sin 0).
    """
    s_mag = np.asarray(s_mag, dtype=np.float64)
    _check_shapes(s_mag, np.asarray(cos_m), "reconstruct_stft")
    _check_shapes(s_mag, np.asarray(sin_m), "reconstruct_stft")
    _check_shapes(s_mag, X.data, "reconstruct_stft")
    xmag = np.abs(X.data)
    safe = np.where(xmag > 0, xmag, 1.0)
    cos_x = np.where(xmag > 0, X.data.real / safe, 1.0)
    sin_x = np.where(xmag > 0, X.data.imag / safe, 0.0)
    out_r = s_mag * (cos_m * cos_x - sin_m * sin_x)
    out_i = s_mag * (sin_m * cos_x + cos_m * sin_x)
    return X.with_data(out_r + 1j * out_i)


@dataclass(frozen=True)
class MaskStats:
    """Distribution summary of a complex mask over the counted bins.

    ``total_bins`` counts only bins whose mixture energy clears the floor;
    all other fields are computed over that set.  ``scatter_sample`` is an
    ``(n, 2)`` array of (re, im) pairs, at most :data:`MAX_SCATTER_POINTS`.
    """

    total_bins: int
    bins_over_unit: int
    fraction_over_unit: float
    angle_histogram: np.ndarray
    magnitude_percentiles: dict[int, float]
    scatter_sample: np.ndarray


def mask_stats(
    M: np.ndarray,
    X: ComplexSpectrogram,
    energy_floor_db: float | None = -60.0,
    max_scatter: int = MAX_SCATTER_POINTS,
    seed: int = 0,
) -> MaskStats:
    """Summarize the distribution of a complex mask.

    Only bins where ``|X|`` exceeds the peak magnitude scaled down by
    ``energy_floor_db`` are counted, because silent-bin division produces
    unbounded mask values that would swamp the statistics.  Pass
    ``energy_floor_db=None`` to count every bin.  An empty counted set
    yields ``fraction_over_unit = 0`` and empty percentiles.

    The scatter sample is drawn without replacement with a seeded
    generator, so identical inputs give identical samples.
    """
    M = np.asarray(M, dtype=np.complex128)
    _check_shapes(M, X.data, "mask_stats")
    xmag = np.abs(X.data)
    if energy_floor_db is None:
        counted = np.ones(M.shape, dtype=bool)
    else:
        counted = xmag > xmag.max() * 10.0 ** (energy_floor_db / 20.0)
    values = M[counted]
    total = int(values.size)
    if total == 0:
        return MaskStats(0, 0, 0.0, np.zeros(ANGLE_BUCKETS, dtype=np.int64), {}, np.empty((0, 2)))

    mags = np.abs(values)
    over = int(np.count_nonzero(mags > 1.0))
    angles = np.angle(values)
    bucket = np.floor((angles + np.pi) / (2.0 * np.pi / ANGLE_BUCKETS)).astype(np.int64)
    np.clip(bucket, 0, ANGLE_BUCKETS - 1, out=bucket)
    histogram = np.bincount(bucket, minlength=ANGLE_BUCKETS).astype(np.int64)
    percentiles = {p: float(np.percentile(mags, p)) for p in (50, 90, 99)}

    if total > max_scatter:
        rng = np.random.default_rng(seed)
        idx = rng.choice(total, size=max_scatter, replace=False)
        values = values[idx]
    scatter = np.column_stack([values.real, values.imag])
    return MaskStats(total, over, over / total, histogram, percentiles, scatter)


def write_scatter_csv(out: io.TextIOBase, samples_by_source: dict[str, np.ndarray]) -> None:
    """Write sampled mask points as ``re,im,source`` rows."""
    out.write("re,im,source\n")
    for source, sample in samples_by_source.items():
        for re, im in np.asarray(sample):
            out.write(f"{float(re)!r},{float(im)!r},{source}\n")


def render_scatter_svg(
    samples_by_source: dict[str, np.ndarray],
    size: int = 480,
    plot_radius: float = 2.5,
    comment: str | None = None,
) -> str:
    """Render mask scatter plots with a unit-circle overlay as an SVG document.

    One panel per source, points clipped to ``plot_radius`` mask units; the
    red circle marks |M| = 1.
    """
    n = max(len(samples_by_source), 1)
    half = size / 2.0
    scale = half / plot_radius
    # a leading comment (provenance) must stay the first line, so no XML
    # declaration is emitted
    parts = []
    if comment is not None:
        parts.append(f"<!-- {comment} -->")
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size * n}" height="{size + 24}" '
        f'viewBox="0 0 {size * n} {size + 24}">'
    )
    for panel, (source, sample) in enumerate(samples_by_source.items()):
        ox = panel * size + half
        oy = half
        parts.append(f'<g><text x="{ox}" y="{size + 16}" text-anchor="middle" font-size="13">{source}</text>')
        parts.append(
            f'<rect x="{panel * size}" y="0" width="{size}" height="{size}" fill="white" stroke="#ccc"/>'
        )
        for re, im in np.asarray(sample):
            r = math.hypot(re, im)
            if r > plot_radius:
                re, im = re * plot_radius / r, im * plot_radius / r
            parts.append(
                f'<circle cx="{ox + re * scale:.2f}" cy="{oy - im * scale:.2f}" r="1" '
                f'fill="#1f77b4" fill-opacity="0.35"/>'
            )
        parts.append(
            f'<circle cx="{ox}" cy="{oy}" r="{scale:.2f}" fill="none" stroke="red" stroke-width="1.5"/>'
        )
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts)
