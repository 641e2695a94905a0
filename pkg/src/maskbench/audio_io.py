"""WAV file I/O, stem ingestion, segmentation, and mixture synthesis.

Supported WAV flavors: RIFF/WAVE with 16- or 24-bit PCM or 32-bit float
samples, 1-2 channels.  PCM values map to [-1, 1) by ``2^(bits-1)``
scaling; float data round-trips losslessly.  Stem directories follow the
``<song>/<source>.wav`` convention with one file per source.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from maskbench.dsp import Waveform

#: Source that must never receive mix-audio augmentation.
AUGMENT_EXCLUDED_SOURCES = frozenset({"bass"})

#: map source_name -> Waveform; all stems share sample rate and length.
StemSet = dict[str, Waveform]


class WavFormatError(ValueError):
    """Raised for malformed, truncated, or unsupported WAV files."""


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise WavFormatError(message)


def read_wav(path: str | Path) -> Waveform:
    """Read a RIFF/WAVE file into a channel-major float64 waveform.

    Raises:
        WavFormatError: malformed header, unsupported codec, or a data
            chunk shorter than its declared size.
    """
    raw = Path(path).read_bytes()
    _expect(len(raw) >= 12, f"{path}: file too short for a RIFF header")
    _expect(raw[:4] == b"RIFF" and raw[8:12] == b"WAVE", f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            _expect(len(body) >= 16, f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            _expect(len(body) == chunk_size, f"{path}: data chunk truncated ({len(body)} of {chunk_size} bytes)")
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    _expect(fmt is not None, f"{path}: missing fmt chunk")
    _expect(data is not None, f"{path}: missing data chunk")
    audio_format, channels, sample_rate, _, block_align, bits = fmt
    _expect(channels in (1, 2), f"{path}: unsupported channel count {channels}")
    _expect(sample_rate > 0, f"{path}: invalid sample rate {sample_rate}")

    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2").astype(np.float64)
        samples /= 2**15
    elif audio_format == 1 and bits == 24:
        usable = len(data) - len(data) % 3
        as_bytes = np.frombuffer(data[:usable], dtype=np.uint8).reshape(-1, 3)
        values = (
            as_bytes[:, 0].astype(np.int32)
            | (as_bytes[:, 1].astype(np.int32) << 8)
            | (as_bytes[:, 2].astype(np.int32) << 16)
        )
        values = np.where(values >= 1 << 23, values - (1 << 24), values)
        samples = values.astype(np.float64) / 2**23
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported codec (format tag {audio_format}, {bits}-bit); "
            "expected 16/24-bit PCM or 32-bit float"
        )

    frames = samples.size // channels
    interleaved = samples[: frames * channels].reshape(frames, channels)
    return Waveform(interleaved.T.copy(), sample_rate)


def write_wav(path: str | Path, wave: Waveform, bit_depth: int = 32) -> None:
    """Write a waveform as WAV; ``bit_depth`` 16/24 is PCM, 32 is float.

    PCM samples are scaled by ``2^(bits-1)``, rounded, and clipped to the
    representable integer range; 32-bit float data is stored verbatim.
    """
    if bit_depth not in (16, 24, 32):
        raise ValueError(f"bit_depth must be 16, 24, or 32, got {bit_depth}")
    channels, frames = wave.data.shape
    if channels not in (1, 2):
        raise ValueError(f"unsupported channel count {channels}")
    interleaved = wave.data.T  # (frames, channels)

    if bit_depth == 32:
        payload = interleaved.astype("<f4").tobytes()
        fmt_tag = 3
    else:
        full_scale = 1 << (bit_depth - 1)
        values = np.clip(np.rint(interleaved * full_scale), -full_scale, full_scale - 1).astype(np.int32)
        if bit_depth == 16:
            payload = values.astype("<i2").tobytes()
        else:
            flat = values.ravel()
            triple = np.empty((flat.size, 3), dtype=np.uint8)
            triple[:, 0] = flat & 0xFF
            triple[:, 1] = (flat >> 8) & 0xFF
            triple[:, 2] = (flat >> 16) & 0xFF
            payload = triple.tobytes()
        fmt_tag = 1

    block_align = channels * bit_depth // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", fmt_tag, channels, wave.sample_rate, wave.sample_rate * block_align, block_align, bit_depth
    )
    chunks = [(b"fmt ", fmt_chunk)]
    if fmt_tag != 1:
        chunks.append((b"fact", struct.pack("<I", frames)))
    chunks.append((b"data", payload))

    body = bytearray()
    for chunk_id, chunk in chunks:
        body += chunk_id + struct.pack("<I", len(chunk)) + chunk
        if len(chunk) & 1:
            body += b"\x00"
    with open(path, "wb") as out:
        out.write(b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body)


@dataclass(frozen=True)
class Segment:
    """A fixed-length training excerpt of one source."""

    source_name: str
    wave: Waveform
    origin: tuple[str, int]  # (label, offset in samples)


def segment(
    wave: Waveform,
    seconds: float = 3.0,
    hop_seconds: float | None = None,
    source_name: str = "",
    origin_label: str = "",
) -> list[Segment]:
    """Cut a waveform into fixed-length segments at a regular hop.

    The trailing remainder shorter than one segment is dropped.

    Raises:
        ValueError: if the signal is shorter than one segment.
    """
    if hop_seconds is None:
        hop_seconds = seconds
    length = int(round(seconds * wave.sample_rate))
    hop = int(round(hop_seconds * wave.sample_rate))
    if length <= 0 or hop <= 0:
        raise ValueError("segment and hop lengths must be positive")
    if wave.samples_per_channel < length:
        raise ValueError(
            f"signal of {wave.samples_per_channel} samples is shorter than one "
            f"{length}-sample segment"
        )
    out = []
    for start in range(0, wave.samples_per_channel - length + 1, hop):
        piece = Waveform(wave.data[:, start : start + length].copy(), wave.sample_rate)
        out.append(Segment(source_name, piece, (origin_label, start)))
    return out


def mix_audio_augment(a: Segment, b: Segment) -> Segment:
    """Sum two same-source segments into a new segment of that source.

    The sum of two excerpts of a source still belongs to that source, so
    the result is a valid training segment.  No renormalization is applied
    (clipping is permitted in training data).  Bass is rejected because
    bass lines are usually monophonic and summing two of them is not.
    """
    if a.source_name != b.source_name:
        raise ValueError(f"cannot mix different sources: {a.source_name!r} vs {b.source_name!r}")
    if a.source_name in AUGMENT_EXCLUDED_SOURCES:
        raise ValueError(f"mix-audio augmentation is not applied to {a.source_name!r}")
    if a.wave.data.shape != b.wave.data.shape or a.wave.sample_rate != b.wave.sample_rate:
        raise ValueError("segments must share shape and sample rate")
    summed = Waveform(a.wave.data + b.wave.data, a.wave.sample_rate)
    return Segment(a.source_name, summed, (f"{a.origin[0]}+{b.origin[0]}", a.origin[1]))


def make_mixture(segments: dict[str, Segment]) -> tuple[Segment, StemSet]:
    """Sum one segment per source into a mixture.

    Returns the mixture segment and the (post-augmentation) target stems,
    so ``mixture == sum(targets)`` holds bit-exactly.
    """
    if len(segments) < 2:
        raise ValueError(f"need at least 2 sources to form a mixture, got {len(segments)}")
    items = list(segments.items())
    first = items[0][1].wave
    for name, seg in items[1:]:
        if seg.wave.data.shape != first.data.shape or seg.wave.sample_rate != first.sample_rate:
            raise ValueError(f"segment {name!r} does not match the shape/rate of {items[0][0]!r}")
    total = Waveform(sum(seg.wave.data for _, seg in items), first.sample_rate)
    mixture = Segment("mixture", total, ("+".join(name for name, _ in items), 0))
    targets: StemSet = {name: seg.wave for name, seg in items}
    return mixture, targets


def load_stem_set(song_dir: str | Path) -> StemSet:
    """Load every ``<source>.wav`` in a song directory as a stem set.

    Raises:
        FileNotFoundError: directory missing or holding no WAV files.
        ValueError: stems disagree on sample rate or length.
    """
    song_dir = Path(song_dir)
    if not song_dir.is_dir():
        raise FileNotFoundError(f"stem directory not found: {song_dir}")
    paths = sorted(song_dir.glob("*.wav"))
    if not paths:
        raise FileNotFoundError(f"no stem files (<source>.wav) found in {song_dir}")
    stems: StemSet = {}
    for path in paths:
        stems[path.stem] = read_wav(path)
    reference = next(iter(stems.values()))
    for name, wave in stems.items():
        if wave.sample_rate != reference.sample_rate:
            raise ValueError(f"stem {name!r} sample rate {wave.sample_rate} differs from {reference.sample_rate}")
        if wave.data.shape != reference.data.shape:
            raise ValueError(f"stem {name!r} shape {wave.data.shape} differs from {reference.data.shape}")
    return stems
