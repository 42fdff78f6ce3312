"""Synthetic corpus generator tests.

Spectral claims are checked against direct FFT magnitude sums, energy
front-loading against cumulative sums, and corpus layout against raw
file reads.
"""

import json
import warnings

import numpy as np
import pytest

from wavelens.models import EnergyCounterConfig, EnergyCounterModel
from wavelens.rng import RandomSource
from wavelens.signal import AudioSignal, load_annotations, load_wav
from wavelens.synth import (
    HIT_KINDS,
    CorpusItem,
    DrumsConfig,
    MarkerInjectionConfig,
    gen_drums,
    inject_marker,
    load_corpus,
    make_clever_hans_corpus,
    make_marker_pool,
    synth_hit,
    write_corpus,
)


def band_energy_share(samples, rate, lo, hi):
    spectrum = np.abs(np.fft.rfft(samples)) ** 2
    freqs = np.fft.rfftfreq(len(samples), 1.0 / rate)
    total = spectrum.sum()
    in_band = spectrum[(freqs >= lo) & (freqs <= hi)].sum()
    return in_band / total


def peak_frequency(samples, rate):
    spectrum = np.abs(np.fft.rfft(samples))
    freqs = np.fft.rfftfreq(len(samples), 1.0 / rate)
    return freqs[int(np.argmax(spectrum))]


class TestSynthHit:
    def test_sample_count(self):
        hit = synth_hit("kick", 16000, 0.35, RandomSource(0))
        assert hit.num_samples == 5600
        assert hit.sample_rate == 16000

    @pytest.mark.parametrize("kind", HIT_KINDS)
    def test_peak_normalized(self, kind):
        hit = synth_hit(kind, 16000, 0.35, RandomSource(1))
        assert abs(np.abs(hit.samples).max() - 0.8) < 1e-6

    def test_kick_spectral_peak(self):
        hit = synth_hit("kick", 16000, 0.35, RandomSource(2))
        assert 40.0 <= peak_frequency(hit.samples, 16000) <= 90.0

    def test_tom_spectral_peak(self):
        hit = synth_hit("tom", 16000, 0.35, RandomSource(3))
        assert 130.0 <= peak_frequency(hit.samples, 16000) <= 170.0

    def test_snare_band_limited(self):
        hit = synth_hit("snare", 16000, 0.35, RandomSource(4))
        assert band_energy_share(hit.samples, 16000, 150.0, 2500.0) > 0.9

    def test_cymbal_high_band(self):
        hit = synth_hit("cymbal", 16000, 0.35, RandomSource(5))
        assert band_energy_share(hit.samples, 16000, 4500.0, 8000.0) > 0.9

    @pytest.mark.parametrize("kind", ("kick", "snare", "tom"))
    def test_energy_front_loaded(self, kind):
        hit = synth_hit(kind, 16000, 0.35, RandomSource(6))
        energy = hit.samples**2
        quarter = len(energy) // 4
        assert energy[:quarter].sum() >= 0.6 * energy.sum()

    def test_deterministic_and_jittered(self):
        a = synth_hit("kick", 16000, 0.35, RandomSource(7))
        b = synth_hit("kick", 16000, 0.35, RandomSource(7))
        c = synth_hit("kick", 16000, 0.35, RandomSource(8))
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_float32_valued(self):
        hit = synth_hit("snare", 16000, 0.35, RandomSource(9))
        assert np.array_equal(hit.samples, hit.samples.astype(np.float32).astype(np.float64))

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            synth_hit("clap", 16000, 0.35, RandomSource(0))
        with pytest.raises(ValueError):
            synth_hit("kick", 16000, 0.0, RandomSource(0))


class TestDrumsConfig:
    def test_defaults(self):
        cfg = DrumsConfig()
        assert cfg.quotas == {0: 1000, 1: 1000, 2: 1000, 3: 1000, 4: 1000, 5: 1000}
        assert cfg.num_sequences == 6000
        assert cfg.hits_per_sequence == 10
        assert cfg.sample_rate == 16000
        assert cfg.hit_duration == 0.35
        assert cfg.slot_duration == 0.4

    def test_validation(self):
        with pytest.raises(ValueError):
            DrumsConfig(quotas={0: -1})
        with pytest.raises(ValueError):
            DrumsConfig(quotas={})
        with pytest.raises(ValueError):
            DrumsConfig(quotas={11: 5}, hits_per_sequence=10)
        with pytest.raises(ValueError):
            DrumsConfig(hit_duration=0.5, slot_duration=0.4)


def small_config(quota=1):
    return DrumsConfig(quotas={c: quota for c in range(6)})


class TestGenDrums:
    def test_quota_bookkeeping(self):
        items = gen_drums(small_config(), RandomSource(0))
        assert len(items) == 6
        labels = sorted(item.label for item in items)
        assert labels == ["0", "1", "2", "3", "4", "5"]
        for item in items:
            assert len(item.annotation.events) == int(item.label)

    def test_zero_count_sequence(self):
        items = gen_drums(DrumsConfig(quotas={0: 1}), RandomSource(1))
        item = items[0]
        assert item.annotation.events == ()
        model = EnergyCounterModel()
        assert model.predict(item.signal) == "0"

    def test_event_geometry(self):
        items = gen_drums(small_config(), RandomSource(2))
        for item in items:
            starts = []
            for ev in item.annotation.events:
                assert ev.label == "kick"
                slot = ev.start / 0.4
                assert abs(slot - round(slot)) < 1e-9
                assert ev.end - ev.start == pytest.approx(0.35, abs=1e-9)
                starts.append(ev.start)
            assert starts == sorted(starts)
            assert item.signal.num_samples == 64000

    def test_slots_filled_and_gaps_quiet(self):
        items = gen_drums(DrumsConfig(quotas={5: 1}), RandomSource(3))
        x = items[0].signal.samples
        for slot in range(10):
            body = x[slot * 6400 : slot * 6400 + 5600]
            gap = x[slot * 6400 + 5600 : (slot + 1) * 6400]
            assert np.abs(body).max() > 0.7  # normalized hit present
            assert np.abs(gap).max() < 0.2  # decay tail only

    def test_kick_intervals_front_loaded(self):
        items = gen_drums(small_config(), RandomSource(4))
        rate = 16000
        for item in items:
            for ev in item.annotation.events:
                lo = int(round(ev.start * rate))
                hi = int(round(ev.end * rate))
                seg = item.signal.samples[lo:hi] ** 2
                assert seg[: len(seg) // 4].sum() >= 0.6 * seg.sum()

    def test_deterministic(self):
        a = gen_drums(small_config(), RandomSource(5))
        b = gen_drums(small_config(), RandomSource(5))
        for x, y in zip(a, b):
            assert x.name == y.name
            assert x.label == y.label
            assert np.array_equal(x.signal.samples, y.signal.samples)
            assert x.annotation == y.annotation

    def test_custom_quota_histogram(self):
        items = gen_drums(DrumsConfig(quotas={0: 2, 3: 3}), RandomSource(6))
        labels = sorted(item.label for item in items)
        assert labels == ["0", "0", "3", "3", "3"]

    def test_counter_model_accuracy(self):
        # desk-scale calibration: the onset counter should recover the
        # true kick count almost always
        items = gen_drums(DrumsConfig(quotas={c: 34 for c in range(6)}), RandomSource(7))
        model = EnergyCounterModel()
        hits = sum(1 for item in items if model.predict(item.signal) == item.label)
        assert hits / len(items) >= 0.95


class TestCorpusIO:
    def test_roundtrip(self, tmp_path):
        items = gen_drums(small_config(), RandomSource(8))
        write_corpus(tmp_path / "corpus", items, {"seed": 8, "kind": "drums"})
        back, manifest = load_corpus(tmp_path / "corpus")
        assert manifest["seed"] == 8
        assert len(back) == len(items)
        for x, y in zip(items, back):
            assert x.name == y.name
            assert x.label == y.label
            assert x.annotation == y.annotation
            assert np.array_equal(x.signal.samples, y.signal.samples)

    def test_layout(self, tmp_path):
        items = gen_drums(DrumsConfig(quotas={2: 2}), RandomSource(9))
        out = tmp_path / "corpus"
        write_corpus(out, items, {"seed": 9})
        wavs = sorted(p.name for p in out.glob("*.wav"))
        assert len(wavs) == 2
        assert (out / "annotations.json").exists()
        assert (out / "labels.tsv").exists()
        assert (out / "manifest.json").exists()
        lines = (out / "labels.tsv").read_text().strip().split("\n")
        assert len(lines) == 2
        for line in lines:
            path, label = line.split("\t")
            assert path in wavs
            assert label == "2"
        table = load_annotations(out / "annotations.json")
        assert set(table) == set(wavs)

    def test_byte_identical_generation(self, tmp_path):
        for run in ("a", "b"):
            items = gen_drums(small_config(), RandomSource(10))
            write_corpus(tmp_path / run, items, {"seed": 10})
        for path_a in sorted((tmp_path / "a").iterdir()):
            path_b = tmp_path / "b" / path_a.name
            assert path_a.read_bytes() == path_b.read_bytes()

    def test_missing_labels_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "empty")


class TestMarkers:
    def config(self, target="a"):
        return MarkerInjectionConfig(target_class=target)

    def test_pool_shape(self):
        pool = make_marker_pool(self.config(), 16000, RandomSource(0))
        assert len(pool) == 40
        for marker in pool:
            assert abs(np.abs(marker.samples).max() - 0.9) < 1e-6
            # two 0.12 s bursts around a 0.06 s gap, padding trimmed
            assert marker.num_samples == 4800

    def test_pool_band_and_gap(self):
        pool = make_marker_pool(self.config(), 16000, RandomSource(1))
        marker = pool[0]
        assert band_energy_share(marker.samples, 16000, 700.0, 1900.0) > 0.85
        gap = marker.samples[1920:2880]
        assert np.abs(gap).max() == 0.0

    def test_pool_markers_differ(self):
        pool = make_marker_pool(self.config(), 16000, RandomSource(2))
        assert not np.array_equal(pool[0].samples, pool[1].samples)

    def test_inject_into_silence_is_identity(self):
        pool = make_marker_pool(self.config(), 16000, RandomSource(3))
        host = AudioSignal(np.zeros(16000), 16000)
        out, interval = inject_marker(host, pool, self.config(), RandomSource(4))
        lo = int(round(interval.start * 16000))
        hi = int(round(interval.end * 16000))
        assert hi - lo == 4800
        assert interval.label == "marker"
        placed = out.samples[lo:hi]
        match = [m for m in pool if np.array_equal(placed, m.samples.astype(np.float32).astype(np.float64))]
        assert match, "placed samples must equal one pool marker exactly"
        rest = np.concatenate([out.samples[:lo], out.samples[hi:]])
        assert np.abs(rest).max() == 0.0

    def test_inject_deterministic_offsets_vary(self):
        pool = make_marker_pool(self.config(), 16000, RandomSource(5))
        host = AudioSignal(np.zeros(32000), 16000)
        a = inject_marker(host, pool, self.config(), RandomSource(6))
        b = inject_marker(host, pool, self.config(), RandomSource(6))
        assert np.array_equal(a[0].samples, b[0].samples)
        assert a[1] == b[1]
        offsets = {
            inject_marker(host, pool, self.config(), RandomSource(seed))[1].start
            for seed in range(10)
        }
        assert len(offsets) > 3

    def test_inject_clips_output(self):
        pool = make_marker_pool(self.config(), 16000, RandomSource(7))
        host = AudioSignal(np.full(16000, 0.95), 16000)
        out, _ = inject_marker(host, pool, self.config(), RandomSource(8))
        assert np.abs(out.samples).max() <= 1.0

    def test_marker_longer_than_host_rejected(self):
        pool = make_marker_pool(self.config(), 16000, RandomSource(9))
        host = AudioSignal(np.zeros(3200), 16000)
        with pytest.raises(ValueError):
            inject_marker(host, pool, self.config(), RandomSource(10))

    def clever_hans_items(self):
        gen = np.random.default_rng(11)
        items = []
        for i in range(3):
            sig = AudioSignal(gen.normal(0, 0.02, 16000), 16000)
            items.append(CorpusItem(f"a{i}", sig, annotation_of(), "a"))
        for i in range(2):
            sig = AudioSignal(gen.normal(0, 0.02, 16000), 16000)
            items.append(CorpusItem(f"b{i}", sig, annotation_of(), "b"))
        return items

    def test_clever_hans_corruption(self):
        items = self.clever_hans_items()
        out, audit = make_clever_hans_corpus(items, self.config("a"), RandomSource(12))
        assert [o.name for o in out] == [i.name for i in items]
        for before, after in zip(items, out):
            assert after.annotation == before.annotation
            assert after.label == before.label
            if before.label == "a":
                assert not np.array_equal(after.signal.samples, before.signal.samples)
                assert len(audit[after.name].events) == 1
                assert audit[after.name].events[0].label == "marker"
            else:
                assert np.array_equal(after.signal.samples, before.signal.samples)
                assert audit[after.name].events == ()

    def test_clever_hans_band_statistics_differ(self):
        items = self.clever_hans_items()
        out, _ = make_clever_hans_corpus(items, self.config("a"), RandomSource(13))
        def band(sig):
            return band_energy_share(sig.samples, 16000, 800.0, 1800.0)
        corrupted = np.mean([band(o.signal) for o in out if o.label == "a"])
        clean = np.mean([band(o.signal) for o in out if o.label == "b"])
        assert corrupted > 2 * clean

    def test_absent_target_warns_and_passes_through(self):
        items = self.clever_hans_items()
        with pytest.warns(UserWarning):
            out, audit = make_clever_hans_corpus(items, self.config("zzz"), RandomSource(14))
        assert all(np.array_equal(a.signal.samples, b.signal.samples) for a, b in zip(items, out))
        assert all(len(ann.events) == 0 for ann in audit.values())


def annotation_of(events=()):
    from wavelens.signal import EventAnnotation

    return EventAnnotation(tuple(events))
