"""Synthetic benchmark corpora.

Slotted drum-hit sequences with exact kick annotations, plus marker
injection for spurious-correlation audits. All synthesis is seeded per
sequence and quantized to float32 values so corpora round-trip through
WAV files bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from pathlib import Path

import numpy as np

from .rng import RandomSource
from .signal import (
    AudioSignal,
    Event,
    EventAnnotation,
    load_annotations,
    load_wav,
    save_annotations,
    save_wav,
)

HIT_KINDS = ("kick", "snare", "tom", "cymbal")
_FILL_KINDS = ("snare", "tom", "cymbal")

# amplitude decay constant per hit kind, seconds
_HIT_DECAY = {"kick": 0.16, "snare": 0.05, "tom": 0.12, "cymbal": 0.25}


def _quantize(samples: np.ndarray) -> np.ndarray:
    return samples.astype(np.float32).astype(np.float64)


def _band_limited_noise(gen, num_samples, sample_rate, low_hz, high_hz):
    white = gen.normal(size=num_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(num_samples, 1.0 / sample_rate)
    spectrum[(freqs < low_hz) | (freqs > high_hz)] = 0.0
    return np.fft.irfft(spectrum, num_samples)


def synth_hit(kind: str, sample_rate: int, duration: float, rng: RandomSource) -> AudioSignal:
    """One percussive hit, peak-normalized to 0.8.

    Tonal kinds carry a 5% frequency jitter; every kind decays
    exponentially so the onset holds most of the energy.
    """
    if kind not in HIT_KINDS:
        raise ValueError("unknown hit kind %r, expected one of %r" % (kind, HIT_KINDS))
    num_samples = int(round(duration * sample_rate))
    if duration <= 0 or num_samples < 1:
        raise ValueError("duration too short: %r s" % (duration,))
    gen = rng.generator
    t = np.arange(num_samples) / sample_rate
    envelope = np.exp(-t / _HIT_DECAY[kind])
    if kind == "kick":
        freq = 60.0 * (1.0 + 0.05 * gen.uniform(-1.0, 1.0))
        wave = np.sin(2.0 * np.pi * freq * t)
    elif kind == "tom":
        freq = 150.0 * (1.0 + 0.05 * gen.uniform(-1.0, 1.0))
        wave = np.sin(2.0 * np.pi * freq * t)
    elif kind == "snare":
        wave = _band_limited_noise(gen, num_samples, sample_rate, 200.0, 2000.0)
    else:
        wave = _band_limited_noise(gen, num_samples, sample_rate, 5000.0, sample_rate / 2.0)
    x = wave * envelope
    # taper both ends so onset and truncation clicks stay out of
    # far-away frequency bands
    ramp_n = min(int(round(0.01 * sample_rate)), num_samples // 4)
    if ramp_n >= 1:
        ramp = np.sin(0.5 * np.pi * np.arange(ramp_n) / ramp_n) ** 2
        x[:ramp_n] *= ramp
        x[num_samples - ramp_n :] *= ramp[::-1]
    if kind == "tom":
        # scrub the decay skirt from below the fundamental so toms
        # cannot bleed into low-frequency energy detectors
        spectrum = np.fft.rfft(x)
        spectrum[np.fft.rfftfreq(num_samples, 1.0 / sample_rate) < 125.0] = 0.0
        x = np.fft.irfft(spectrum, num_samples)
    x *= 0.8 / np.abs(x).max()
    return AudioSignal(_quantize(x), sample_rate)


def _default_quotas() -> dict[int, int]:
    return {count: 1000 for count in range(6)}


@dataclasses.dataclass(frozen=True)
class DrumsConfig:
    """Corpus recipe: per-kick-count sequence quotas and slot layout."""

    quotas: dict = dataclasses.field(default_factory=_default_quotas)
    hits_per_sequence: int = 10
    sample_rate: int = 16000
    hit_duration: float = 0.35
    slot_duration: float = 0.4

    def __post_init__(self):
        if not isinstance(self.quotas, dict) or not self.quotas:
            raise ValueError("quotas must be a non-empty {kick count: sequences} dict")
        normalized = {}
        for count, quota in self.quotas.items():
            count, quota = int(count), int(quota)
            if count < 0 or quota < 0:
                raise ValueError("quota entries must be non-negative")
            if count > self.hits_per_sequence:
                raise ValueError(
                    "kick count %d exceeds hits_per_sequence %d" % (count, self.hits_per_sequence)
                )
            normalized[count] = quota
        if sum(normalized.values()) < 1:
            raise ValueError("quotas must request at least one sequence")
        object.__setattr__(self, "quotas", normalized)
        if self.hits_per_sequence < 1 or self.sample_rate < 1:
            raise ValueError("hits_per_sequence and sample_rate must be positive")
        if self.hit_duration <= 0 or self.hit_duration > self.slot_duration:
            raise ValueError("need 0 < hit_duration <= slot_duration")

    @property
    def num_sequences(self) -> int:
        return sum(self.quotas.values())


@dataclasses.dataclass(frozen=True)
class CorpusItem:
    """One corpus member: signal, event annotation, class label."""

    name: str
    signal: AudioSignal
    annotation: EventAnnotation
    label: str


def gen_drums(config: DrumsConfig, rng: RandomSource) -> list[CorpusItem]:
    """Generate the drum corpus: every sequence is ``hits_per_sequence``
    hits on a fixed slot grid, kick slots drawn without replacement,
    other slots filled uniformly; annotations mark exact kick intervals
    and the label is the kick count."""
    counts = []
    for count in sorted(config.quotas):
        counts.extend([count] * config.quotas[count])
    slot_samples = int(round(config.slot_duration * config.sample_rate))
    hit_samples = int(round(config.hit_duration * config.sample_rate))
    items = []
    for index, count in enumerate(counts):
        child = rng.child("sequence", index)
        gen = child.generator
        kick_slots = set(
            int(s) for s in gen.choice(config.hits_per_sequence, size=count, replace=False)
        )
        samples = np.zeros(config.hits_per_sequence * slot_samples)
        events = []
        for slot in range(config.hits_per_sequence):
            if slot in kick_slots:
                kind = "kick"
            else:
                kind = _FILL_KINDS[int(gen.integers(0, len(_FILL_KINDS)))]
            hit = synth_hit(kind, config.sample_rate, config.hit_duration, child.child("hit", slot))
            start = slot * slot_samples
            samples[start : start + hit_samples] = hit.samples
            if kind == "kick":
                t0 = slot * config.slot_duration
                events.append(Event(t0, t0 + config.hit_duration, "kick"))
        items.append(
            CorpusItem(
                name="seq%05d" % index,
                signal=AudioSignal(samples, config.sample_rate),
                annotation=EventAnnotation(tuple(events)),
                label=str(count),
            )
        )
    return items


def write_corpus(dir_path, items, manifest: dict) -> None:
    """Lay a corpus out on disk: one float32 WAV per item plus
    annotations.json, labels.tsv, and manifest.json."""
    path = Path(dir_path)
    path.mkdir(parents=True, exist_ok=True)
    annotation_table = {}
    label_lines = []
    for item in items:
        wav_name = item.name + ".wav"
        save_wav(path / wav_name, item.signal, "float32")
        annotation_table[wav_name] = item.annotation
        label_lines.append("%s\t%s" % (wav_name, item.label))
    save_annotations(path / "annotations.json", annotation_table)
    (path / "labels.tsv").write_text("\n".join(label_lines) + "\n")
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_corpus(dir_path) -> tuple[list[CorpusItem], dict]:
    """Read a corpus directory back; labels.tsv drives the item order."""
    path = Path(dir_path)
    labels_path = path / "labels.tsv"
    if not labels_path.is_file():
        raise FileNotFoundError("no labels.tsv in %s" % path)
    annotations = {}
    if (path / "annotations.json").is_file():
        annotations = load_annotations(path / "annotations.json")
    manifest = {}
    if (path / "manifest.json").is_file():
        manifest = json.loads((path / "manifest.json").read_text())
    items = []
    for line in labels_path.read_text().splitlines():
        if not line.strip():
            continue
        wav_name, label = line.split("\t")
        signal = load_wav(path / wav_name)
        name = wav_name[:-4] if wav_name.endswith(".wav") else wav_name
        items.append(
            CorpusItem(name, signal, annotations.get(wav_name, EventAnnotation(())), label)
        )
    return items, manifest


@dataclasses.dataclass(frozen=True)
class MarkerInjectionConfig:
    """How to corrupt one class with an audible marker."""

    target_class: str
    pool_size: int = 40
    peak: float = 0.9
    silence_threshold: float = 0.01
    frame_duration: float = 0.01
    band: tuple = (800.0, 1800.0)
    burst_duration: float = 0.12
    gap_duration: float = 0.06
    pad_duration: float = 0.02

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if not 0.0 < self.peak <= 1.0:
            raise ValueError("peak must be in (0, 1]")
        if self.silence_threshold <= 0 or self.frame_duration <= 0:
            raise ValueError("silence trim parameters must be positive")
        if self.burst_duration <= 0 or self.gap_duration < 0 or self.pad_duration < 0:
            raise ValueError("marker durations must be non-negative (bursts positive)")


def trim_silence(samples: np.ndarray, sample_rate: int, frame_duration: float,
                 relative_threshold: float) -> np.ndarray:
    """Drop leading and trailing frames whose peak falls below
    ``relative_threshold`` times the overall peak."""
    peak = np.abs(samples).max()
    if peak <= 0:
        return samples
    frame = max(1, int(round(frame_duration * sample_rate)))
    floor = relative_threshold * peak
    active = [
        i
        for i in range(0, len(samples), frame)
        if np.abs(samples[i : i + frame]).max() >= floor
    ]
    if not active:
        return samples
    lo = active[0]
    hi = min(len(samples), active[-1] + frame)
    return samples[lo:hi]


def make_marker_pool(config: MarkerInjectionConfig, sample_rate: int,
                     rng: RandomSource) -> list[AudioSignal]:
    """Build the marker pool: each marker is two band-noise bursts
    around a short gap, silence-trimmed and peak-normalized."""
    burst_n = int(round(config.burst_duration * sample_rate))
    gap_n = int(round(config.gap_duration * sample_rate))
    pad_n = int(round(config.pad_duration * sample_rate))
    low_hz, high_hz = config.band
    markers = []
    for index in range(config.pool_size):
        gen = rng.child("marker", index).generator
        burst_a = _band_limited_noise(gen, burst_n, sample_rate, low_hz, high_hz)
        burst_b = _band_limited_noise(gen, burst_n, sample_rate, low_hz, high_hz)
        x = np.concatenate(
            [np.zeros(pad_n), burst_a, np.zeros(gap_n), burst_b, np.zeros(pad_n)]
        )
        x = trim_silence(x, sample_rate, config.frame_duration, config.silence_threshold)
        x = x * (config.peak / np.abs(x).max())
        markers.append(AudioSignal(_quantize(x), sample_rate))
    return markers


def inject_marker(signal: AudioSignal, pool, config: MarkerInjectionConfig,
                  rng: RandomSource) -> tuple[AudioSignal, Event]:
    """Add one pool marker at a uniform random offset; returns the
    corrupted signal and the exact marker interval."""
    gen = rng.generator
    marker = pool[int(gen.integers(0, len(pool)))]
    if marker.sample_rate != signal.sample_rate:
        raise ValueError("marker and host sample rates differ")
    length = marker.num_samples
    if length > signal.num_samples:
        raise ValueError("marker (%d samples) longer than host (%d)" % (length, signal.num_samples))
    offset = int(gen.integers(0, signal.num_samples - length + 1))
    out = signal.samples.copy()
    out[offset : offset + length] += marker.samples
    np.clip(out, -1.0, 1.0, out)
    rate = signal.sample_rate
    event = Event(offset / rate, (offset + length) / rate, "marker")
    return AudioSignal(_quantize(out), rate), event


def make_clever_hans_corpus(items, config: MarkerInjectionConfig,
                            rng: RandomSource) -> tuple[list[CorpusItem], dict[str, EventAnnotation]]:
    """Corrupt every signal of the target class with one marker; all
    other signals pass through untouched. The audit table records the
    injected interval per signal (empty where nothing was injected)."""
    items = list(items)
    audit = {item.name: EventAnnotation(()) for item in items}
    if not any(item.label == config.target_class for item in items):
        warnings.warn(
            "target class %r not present; corpus returned unchanged" % config.target_class
        )
        return items, audit
    pools = {}
    out = []
    for item in items:
        if item.label != config.target_class:
            out.append(item)
            continue
        rate = item.signal.sample_rate
        if rate not in pools:
            pools[rate] = make_marker_pool(config, rate, rng.child("pool", rate))
        corrupted, event = inject_marker(
            item.signal, pools[rate], config, rng.child("inject", item.name)
        )
        out.append(CorpusItem(item.name, corrupted, item.annotation, item.label))
        audit[item.name] = EventAnnotation((event,))
    return out, audit
