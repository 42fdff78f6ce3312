"""End-to-end checks of the public pipeline at its documented tolerances.

Each test prints one [PASS]/[FAIL] line before asserting, so a full run
reads as a checklist. The drum benchmark is expensive and shared: it is
built once per module and reused by the chance-level, truncation, and
deletion-curve tests.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from wavelens.cli import main
from wavelens.evaluation import BenchmarkEntry, auc, run_benchmark
from wavelens.masking import PerturbationSpec, generate_mask
from wavelens.models import (
    EnergyCounterConfig,
    EnergyCounterModel,
    ScoredMaskDataset,
    TemplateDetectorModel,
)
from wavelens.rng import RandomSource
from wavelens.signal import IGNORED, NEGATIVE, POSITIVE, AudioSignal, EventAnnotation
from wavelens.surrogate import WEIGHT_CAP, fit_kernel_shap, fit_linear, shap_kernel_weight
from wavelens.synth import (
    CorpusItem,
    DrumsConfig,
    MarkerInjectionConfig,
    gen_drums,
    inject_marker,
    make_clever_hans_corpus,
    make_marker_pool,
)


def _verdict(name: str, ok: bool, detail: str = "") -> bool:
    line = "[%s] %s" % ("PASS" if ok else "FAIL", name)
    if detail:
        line += " (%s)" % detail
    print(line, flush=True)
    return ok


def test_mask_zero_count_band():
    # 10k draws per (segments, proportion, widening) cell; the zero count
    # must sit in [ceil(M*p), min(M, ceil(M*p) + d - 1)], collapsing to
    # equality at d=1. The floor is computed in exact rational arithmetic
    # so float rounding of M*p cannot leak into the expectation.
    start = time.monotonic()
    ok = True
    for m in (20, 50, 100):
        for p in (0.2, 0.3, 0.4):
            floor = math.ceil(Fraction(str(p)) * m)
            for d in (1, 3, 5):
                spec = PerturbationSpec(p, d, "zeros")
                rng = RandomSource(509).child("law", m, str(p), d)
                batch = np.stack([generate_mask(m, spec, rng) for _ in range(10_000)])
                zeros = (batch == 0).sum(axis=1)
                ok &= bool((zeros >= floor).all())
                ok &= bool((zeros <= min(m, floor + d - 1)).all())
                if d == 1:
                    ok &= bool((zeros == floor).all())
    elapsed = time.monotonic() - start
    ok &= elapsed < 10.0
    assert _verdict("mask zero-count band, 270k draws", ok, "%.1f s" % elapsed)


def _exact_weighted_normal_solve(masks, weights, scores):
    # brute-force oracle: form X'WX b = X'Wy and solve it in rational
    # arithmetic. Floats convert exactly, so the result is the true
    # minimizer even where the capped endpoint weights push the float64
    # condition number past what a direct solve can honor.
    n, m = masks.shape
    cols = m + 1
    ata = [[Fraction(0)] * cols for _ in range(cols)]
    atb = [Fraction(0)] * cols
    for i in range(n):
        w = Fraction(float(weights[i]))
        wy = w * Fraction(float(scores[i]))
        active = [j for j in range(m) if masks[i, j]] + [m]
        for a in active:
            atb[a] += wy
            row = ata[a]
            for b in active:
                row[b] += w
    aug = [ata[r] + [atb[r]] for r in range(cols)]
    for col in range(cols):
        pivot = max(range(col, cols), key=lambda r: abs(aug[r][col]))
        if aug[pivot][col] == 0:
            raise ZeroDivisionError("singular design")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        for r in range(cols):
            if r != col and aug[r][col] != 0:
                factor = aug[r][col] / aug[col][col]
                aug[r] = [x - factor * y for x, y in zip(aug[r], aug[col])]
    return np.array([float(aug[r][cols] / aug[r][r]) for r in range(cols)])


def test_planted_affine_recovery_and_kernel_weights():
    start = time.monotonic()
    rng = RandomSource(811).child("affine")
    gen = rng.generator
    m, n = 16, 500
    w_true = gen.normal(0.0, 2.0, m)
    b_true = float(gen.normal())
    masks = (gen.random((n, m)) < 0.5).astype(np.uint8)
    # pin the two extreme rows so both fits see the full coalition range
    masks[0] = 1
    masks[1] = 0
    scores = masks.astype(np.float64) @ w_true + b_true
    dataset = ScoredMaskDataset(masks, scores, float(w_true.sum() + b_true), "y")

    lr = fit_linear(dataset, ridge_lambda=0.0)
    beta = _exact_weighted_normal_solve(masks, np.ones(n), scores)
    err = max(np.abs(lr.values - beta[:m]).max(), abs(lr.diagnostics["intercept"] - beta[m]))
    err = max(err, np.abs(lr.values - w_true).max(), abs(lr.diagnostics["intercept"] - b_true))

    kernel = np.array([shap_kernel_weight(m, int(k)) for k in masks.sum(axis=1)])
    sh = fit_kernel_shap(dataset, ridge_lambda=0.0)
    beta = _exact_weighted_normal_solve(masks, kernel, scores)
    err = max(err, np.abs(sh.values - beta[:m]).max(), abs(sh.diagnostics["intercept"] - beta[m]))
    err = max(err, np.abs(sh.values - w_true).max(), abs(sh.diagnostics["intercept"] - b_true))
    ok = err <= 1e-6

    weights_ok = True
    for mm in range(1, 13):
        for k in range(mm + 1):
            got = shap_kernel_weight(mm, k)
            if k == 0 or k == mm:
                weights_ok &= got == WEIGHT_CAP
            else:
                exact = Fraction(mm - 1, math.comb(mm, k) * k * (mm - k))
                weights_ok &= math.isclose(got, float(exact), rel_tol=1e-9, abs_tol=0.0)
    ok &= weights_ok
    elapsed = time.monotonic() - start
    ok &= elapsed < 5.0
    assert _verdict(
        "planted affine recovered by both linear fits; kernel weights exact",
        ok,
        "max err %.2e, %.1f s" % (err, elapsed),
    )


def test_auc_equals_pair_counting():
    start = time.monotonic()
    gen = RandomSource(627).child("pairs").generator
    ok = True
    trials = 0
    while trials < 1000:
        m = int(gen.integers(2, 31))
        labels = gen.choice([POSITIVE, NEGATIVE, IGNORED], size=m, p=[0.4, 0.4, 0.2])
        if (labels == POSITIVE).sum() == 0 or (labels == NEGATIVE).sum() == 0:
            continue
        # half the trials draw from a five-point support to force ties
        values = gen.integers(0, 5, m).astype(np.float64) * 0.5
        if trials % 2:
            values = values + gen.normal(0.0, 1.0, m)
        got = auc(values, labels)
        pos = values[labels == POSITIVE]
        neg = values[labels == NEGATIVE]
        above = float((pos[:, None] > neg[None, :]).sum())
        tied = float((pos[:, None] == neg[None, :]).sum())
        want = (above + 0.5 * tied) / (pos.size * neg.size)
        ok &= got == want
        trials += 1
    elapsed = time.monotonic() - start
    ok &= elapsed < 5.0
    assert _verdict("rank AUC equals exhaustive pair counting, 1000 instances", ok, "%.1f s" % elapsed)


@pytest.fixture(scope="module")
def drum_report():
    items = gen_drums(DrumsConfig(quotas={c: 10 for c in range(1, 6)}), RandomSource(2026).child("corpus"))
    entries = [BenchmarkEntry(i.name, i.signal, i.annotation, i.label) for i in items]
    start = time.monotonic()
    report = run_benchmark(
        EnergyCounterModel(),
        entries,
        RandomSource(2026).child("bench"),
        event_label="kick",
        num_masks=3000,
        bootstrap_rounds=1000,
        require_correct_prediction=True,
    )
    return report, time.monotonic() - start


def _truncated_auc(stats, prefix):
    for p, a in stats["truncation"]:
        if abs(p - prefix) < 1e-9:
            return a
    return None


def test_drum_benchmark_beats_chance_with_strong_forest(drum_report):
    report, elapsed = drum_report
    systems = report["systems"]
    best_forest = max(systems["rf:zeros"]["auc"], systems["rf:noise"]["auc"])
    ok = best_forest >= 0.90
    floor = min(s["ci_low"] for s in systems.values())
    for stats in systems.values():
        ok &= stats["auc"] is not None and stats["auc"] > 0.5
        ok &= stats["ci_low"] is not None and stats["ci_low"] > 0.5
    ok &= len(systems) == 6
    ok &= elapsed < 900.0
    assert _verdict(
        "drum benchmark: all six systems beat chance, forest >= 0.90",
        ok,
        "best rf %.3f, min ci_low %.3f, %.0f s" % (best_forest, floor, elapsed),
    )


def test_keyword_marker_localized():
    # thirty noise beds, each with one exact template occurrence; the
    # detector is driven only through posteriors, yet the best system
    # must place its importance mass on the occurrence.
    rate = 16000
    rng = RandomSource(424).child("kws")
    config = MarkerInjectionConfig(target_class="present", pool_size=1)
    pool = make_marker_pool(config, rate, rng.child("pool"))
    model = TemplateDetectorModel(pool[0])
    entries = []
    for i in range(30):
        bed = rng.child("bed", i).generator.normal(0.0, 0.02, 2 * rate)
        marked, event = inject_marker(AudioSignal(bed, rate), pool, config, rng.child("inject", i))
        entries.append(BenchmarkEntry("utt%02d" % i, marked, EventAnnotation((event,)), "present"))
    start = time.monotonic()
    report = run_benchmark(
        model,
        entries,
        RandomSource(424).child("bench"),
        event_label="marker",
        num_masks=1000,
    )
    elapsed = time.monotonic() - start
    best = report["ranking"][0]
    got = report["systems"][best]["auc"]
    ok = got is not None and got >= 0.95
    assert _verdict(
        "keyword occurrence localized: best system AUC >= 0.95",
        ok,
        "%s %.3f, %.0f s" % (best, got, elapsed),
    )


def test_event_prefix_truncation_keeps_ranking(drum_report):
    report, _ = drum_report
    systems = report["systems"]
    best = report["ranking"][0]
    at_prefix = _truncated_auc(systems[best], 0.25)
    ok = at_prefix is not None and at_prefix >= systems[best]["auc"]
    reranked = sorted(
        systems,
        key=lambda s: (_truncated_auc(systems[s], 0.25) is None, -(_truncated_auc(systems[s], 0.25) or 0.0), s),
    )
    ok &= reranked == list(report["ranking"])
    assert _verdict(
        "0.25 s event prefixes keep the six-system ranking",
        ok,
        "best %s %.3f -> %.3f" % (best, systems[best]["auc"], at_prefix or float("nan")),
    )


def test_shortcut_audit_scores_injected_markers():
    # two classes of plain noise beds, one class corrupted with markers:
    # the forest explanation must expose the shortcut by concentrating on
    # the injected interval recorded in the audit table.
    rate = 16000
    rng = RandomSource(1303).child("hans")
    beds = []
    for label in ("a", "b"):
        for i in range(12):
            samples = rng.child("bed", label, i).generator.normal(0.0, 0.02, rate)
            beds.append(CorpusItem("%s%02d" % (label, i), AudioSignal(samples, rate), EventAnnotation(()), label))
    corrupted, audit = make_clever_hans_corpus(beds, MarkerInjectionConfig(target_class="a"), rng.child("corrupt"))
    model = EnergyCounterModel(EnergyCounterConfig(band=(800.0, 1800.0)))
    entries = [BenchmarkEntry(item.name, item.signal, audit[item.name], item.label) for item in corrupted]
    report = run_benchmark(
        model,
        entries,
        RandomSource(1303).child("bench"),
        event_label="marker",
        fills=("zeros",),
        surrogate_kinds=("rf",),
        num_masks=1500,
        require_correct_prediction=False,
    )
    got = report["systems"]["rf:zeros"]["auc"]
    scorable = sum(1 for row in report["systems"]["rf:zeros"]["per_signal"] if row["auc"] is not None)
    ok = got is not None and got >= 0.90 and scorable == 12
    assert _verdict(
        "shortcut audit: forest importance lands on injected markers",
        ok,
        "rf:zeros %.3f over %d corrupted beds" % (got or float("nan"), scorable),
    )


def test_deletion_curves_complete(drum_report):
    report, _ = drum_report
    ok = True
    for stats in report["systems"].values():
        table = {int(x): v for x, v in stats["faithfulness"]}
        ok &= sorted(table) == [1, 5, 10, 20, 50]
        ok &= all(v is not None and math.isfinite(v) for v in table.values())
    ok &= len(report["systems"]) == 6
    assert _verdict("deletion score drops finite for all six systems at 1/5/10/20/50%", ok)


def test_bench_rerun_byte_identical(tmp_path):
    corpus = tmp_path / "corpus"
    code = main(["gen", "drums", "--out", str(corpus), "--seed", "5", "--num", "3", "--quota", "2"])
    ok = code == 0
    blobs = []
    for run in ("first", "second"):
        out = tmp_path / run
        code = main(
            [
                "bench",
                "--in", str(corpus),
                "--model", "builtin:energy-counter",
                "--out", str(out),
                "--seed", "11",
                "--n", "200",
                "--bootstrap", "100",
            ]
        )
        ok &= code == 0
        blobs.append((out / "report.json").read_bytes())
    ok &= blobs[0] == blobs[1]
    assert _verdict("bench command reruns byte-identical", ok, "%d bytes" % len(blobs[0]))
