"""Audio containers, WAV file I/O, fixed-duration segment grids and
ground-truth segment labeling.

The WAV reader is deliberately small: RIFF with a ``fmt `` and ``data``
chunk, 16-bit PCM or 32-bit IEEE float, mono or multichannel (averaged
to mono on load). Everything else raises.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

# segment label values, kept numeric so label arrays stay plain int8
POSITIVE = 1
NEGATIVE = 0
IGNORED = -1

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Malformed or truncated RIFF structure."""


class UnsupportedCodecError(WavFormatError):
    """Valid RIFF, but an encoding this library does not read."""


@dataclass(frozen=True)
class AudioSignal:
    """A mono waveform with its sample rate.

    Samples are float64 in nominal [-1, 1] and read-only after
    construction; the instance takes ownership of the array.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional, got shape %r" % (arr.shape,))
        if arr.size == 0:
            raise ValueError("signal must contain at least one sample")
        if not np.isfinite(arr).all():
            raise ValueError("samples must be finite")
        if not isinstance(self.sample_rate, (int, np.integer)) or self.sample_rate <= 0:
            raise ValueError("sample_rate must be a positive integer")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def num_samples(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.samples.size / self.sample_rate


def _read_chunks(raw: bytes):
    if len(raw) < 12:
        raise WavFormatError("file too short for a RIFF header")
    if raw[0:4] != b"RIFF":
        raise WavFormatError("not a RIFF file")
    if raw[8:12] != b"WAVE":
        raise WavFormatError("RIFF file is not WAVE")
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError("chunk %r truncated" % cid.decode("latin1"))
        yield cid, body
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def load_wav(path) -> AudioSignal:
    """Read a 16-bit PCM or 32-bit float WAV file as a mono AudioSignal.

    Multichannel input is averaged across channels. 16-bit samples are
    scaled by 1/32768.
    """
    raw = open(path, "rb").read()
    fmt = None
    data = None
    for cid, body in _read_chunks(raw):
        if cid == b"fmt " and fmt is None:
            if len(body) < 16:
                raise WavFormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise WavFormatError("extensible fmt chunk too short")
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data" and data is None:
            data = body
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if data is None:
        raise WavFormatError("missing data chunk")

    tag, channels, rate, _, _, bits = fmt
    if channels < 1:
        raise WavFormatError("fmt chunk declares zero channels")
    if tag == WAVE_FORMAT_PCM:
        if bits != 16:
            raise UnsupportedCodecError("only 16-bit PCM is supported, got %d-bit" % bits)
        samples = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        samples = samples.astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedCodecError("only 32-bit float is supported, got %d-bit" % bits)
        samples = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4")
        samples = samples.astype(np.float64)
    else:
        raise UnsupportedCodecError("unsupported format tag 0x%04x" % tag)

    if channels > 1:
        usable = len(samples) - len(samples) % channels
        samples = samples[:usable].reshape(-1, channels).mean(axis=1)
    if samples.size == 0:
        raise WavFormatError("data chunk holds no samples")
    return AudioSignal(samples, int(rate))


def save_wav(path, signal: AudioSignal, encoding: str = "float32") -> None:
    """Write a mono WAV file, either ``float32`` (lossless for
    float32-valued samples) or ``pcm16`` (quantized, error <= 1/32768)."""
    if encoding == "float32":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = signal.samples.astype("<f4").tobytes()
    elif encoding == "pcm16":
        tag, bits = WAVE_FORMAT_PCM, 16
        q = np.clip(np.round(signal.samples * 32768.0), -32768, 32767)
        payload = q.astype("<i2").tobytes()
    else:
        raise ValueError("encoding must be 'float32' or 'pcm16', got %r" % encoding)
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, signal.sample_rate, signal.sample_rate * block, block, bits)
    body = b"WAVE"
    body += b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


@dataclass(frozen=True)
class SegmentGrid:
    """Contiguous fixed-duration segments covering a signal.

    The final segment may be shorter than ``segment_duration`` but is a
    real segment like any other.
    """

    segment_duration: float
    starts: np.ndarray
    ends: np.ndarray

    def __post_init__(self):
        self.starts.setflags(write=False)
        self.ends.setflags(write=False)

    @property
    def num_segments(self) -> int:
        return self.starts.size

    def sample_bounds(self, sample_rate: int) -> list[tuple[int, int]]:
        """Segment boundaries as [start, end) sample indices."""
        lo = np.rint(self.starts * sample_rate).astype(np.int64)
        hi = np.rint(self.ends * sample_rate).astype(np.int64)
        return list(zip(lo.tolist(), hi.tolist()))


def make_grid(signal: AudioSignal, segment_duration: float = 0.1) -> SegmentGrid:
    """Split a signal into ceil(duration / segment_duration) segments."""
    if not segment_duration > 0:
        raise ValueError("segment_duration must be positive")
    duration = signal.duration
    # 1e-9 s slack so float dust in the division cannot add a segment
    count = max(1, math.ceil(duration / segment_duration - 1e-9))
    starts = np.arange(count) * segment_duration
    ends = np.minimum(starts + segment_duration, duration)
    return SegmentGrid(segment_duration, starts, ends)


@dataclass(frozen=True)
class Event:
    """One annotated interval, [start, end) in seconds."""

    start: float
    end: float
    label: str

    def __post_init__(self):
        if not (0.0 <= self.start < self.end):
            raise ValueError("event needs 0 <= start < end, got [%r, %r)" % (self.start, self.end))


@dataclass(frozen=True)
class EventAnnotation:
    """All annotated events of one signal."""

    events: tuple[Event, ...]

    def with_label(self, label: str) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.label == label)


@dataclass(frozen=True)
class SegmentLabels:
    """Per-segment ground truth: POSITIVE, NEGATIVE or IGNORED.

    ``never_positive`` counts segments too short to ever clear the
    overlap threshold, which only the trailing partial segment can be.
    """

    labels: np.ndarray
    never_positive: int = 0

    def __post_init__(self):
        self.labels.setflags(write=False)

    @property
    def num_positive(self) -> int:
        return int(np.sum(self.labels == POSITIVE))

    @property
    def num_negative(self) -> int:
        return int(np.sum(self.labels == NEGATIVE))

    @property
    def num_ignored(self) -> int:
        return int(np.sum(self.labels == IGNORED))


def label_segments(
    grid: SegmentGrid,
    annotation: EventAnnotation,
    target_label: str,
    overlap_threshold: float = 0.09,
) -> SegmentLabels:
    """Label each segment against the target-label events.

    A segment is positive when its total overlap with target events
    (summed over events) strictly exceeds ``overlap_threshold`` seconds,
    negative when the overlap is zero, and ignored in between.
    """
    overlap = np.zeros(grid.num_segments)
    for event in annotation.with_label(target_label):
        part = np.minimum(grid.ends, event.end) - np.maximum(grid.starts, event.start)
        overlap += np.clip(part, 0.0, None)
    labels = np.full(grid.num_segments, IGNORED, dtype=np.int8)
    labels[overlap > overlap_threshold] = POSITIVE
    labels[overlap <= 1e-12] = NEGATIVE  # tolerance for float dust at touching edges
    hopeless = int(np.sum((grid.ends - grid.starts) <= overlap_threshold + 1e-12))
    return SegmentLabels(labels, never_positive=hopeless)


def save_annotations(path, table: dict[str, EventAnnotation]) -> None:
    """Write annotations as ``{"files": [{"path", "events": [...]}, ...]}``."""
    files = []
    for name in sorted(table):
        events = [
            {"start": e.start, "end": e.end, "label": e.label} for e in table[name].events
        ]
        files.append({"path": name, "events": events})
    with open(path, "w") as fh:
        json.dump({"files": files}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_annotations(path) -> dict[str, EventAnnotation]:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not isinstance(doc.get("files"), list):
        raise ValueError("annotation file needs a top-level 'files' list")
    table = {}
    for entry in doc["files"]:
        if not isinstance(entry, dict) or "path" not in entry or "events" not in entry:
            raise ValueError("each annotation entry needs 'path' and 'events'")
        events = tuple(
            Event(float(e["start"]), float(e["end"]), str(e["label"])) for e in entry["events"]
        )
        table[str(entry["path"])] = EventAnnotation(events)
    return table
