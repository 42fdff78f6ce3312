"""Benchmark harness: AUC against event annotations, bootstrap
confidence intervals, faithfulness drops, truncation sweeps, and the
six-system (surrogate x fill) comparison."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .masking import PerturbationSpec, apply_mask
from .models import collect_scores, detect_class, log_odds
from .rng import RandomSource
from .signal import (
    IGNORED,
    POSITIVE,
    Event,
    EventAnnotation,
    SegmentLabels,
    label_segments,
    make_grid,
)
from .surrogate import (
    ImportanceCurve,
    SurrogateConfig,
    collect_explanation_dataset,
    fit_surrogate,
)

DEFAULT_TRUNCATION_PREFIXES = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 1.0)
DEFAULT_FF_PERCENTAGES = (1, 5, 10, 20, 50)


class EvaluationError(RuntimeError):
    """Raised when a corpus yields nothing to evaluate."""


def _label_array(labels) -> np.ndarray:
    if isinstance(labels, SegmentLabels):
        return np.asarray(labels.labels)
    return np.asarray(labels)


def auc(importances, labels, *, magnitude: bool = False) -> float | None:
    """Rank-statistic AUC of importances against segment labels, with
    midrank tie handling; ignored segments are excluded. Returns None
    when either class is absent."""
    values = np.asarray(importances, dtype=np.float64)
    lab = _label_array(labels)
    if values.shape != lab.shape:
        raise ValueError("importances and labels must have equal length")
    if magnitude:
        values = np.abs(values)
    keep = lab != IGNORED
    values, lab = values[keep], lab[keep]
    pos = lab == POSITIVE
    n_pos = int(pos.sum())
    n_neg = values.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None

    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def bootstrap_mean_ci(values, rng: RandomSource, num_rounds: int = 1000) -> tuple[float, float]:
    """Percentile bootstrap 95% CI of the mean: resample the values with
    replacement ``num_rounds`` times in one draw."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("need at least one value")
    idx = rng.generator.integers(0, vals.size, size=(num_rounds, vals.size))
    means = vals[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(lo), float(hi)


def rank_fraction_filter(scores, fraction: float = 0.5) -> np.ndarray:
    """Boolean mask selecting the entries whose score lands in the top
    ``fraction`` of the ranking (ties keep the earlier entry)."""
    vals = np.asarray(scores, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("scores must be non-empty")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    count = max(1, math.ceil(vals.size * fraction - 1e-9))
    order = np.argsort(-vals, kind="stable")
    keep = np.zeros(vals.size, dtype=bool)
    keep[order[:count]] = True
    return keep


@dataclasses.dataclass(frozen=True)
class EvaluationReport:
    """Corpus-level AUC summary."""

    per_signal: tuple
    average_auc: float
    ci_low: float
    ci_high: float
    num_scorable: int
    config: dict | None = None

    def to_json_dict(self) -> dict:
        return {
            "per_signal": [dict(row) for row in self.per_signal],
            "average_auc": self.average_auc,
            "ci95": [self.ci_low, self.ci_high],
            "num_scorable": self.num_scorable,
            "config": self.config,
        }


def _curve_values(curve_or_values) -> np.ndarray:
    if isinstance(curve_or_values, ImportanceCurve):
        return curve_or_values.values
    return np.asarray(curve_or_values, dtype=np.float64)


def evaluate_corpus(
    entries,
    rng: RandomSource,
    bootstrap_rounds: int = 1000,
    *,
    magnitude: bool = False,
    config: dict | None = None,
) -> EvaluationReport:
    """Average per-signal AUC with a percentile-bootstrap CI.

    ``entries`` holds (signal id, curve or values, labels) triples.
    Signals whose labels lack a class are listed with a skip reason and
    excluded from the average and the bootstrap.
    """
    rows = []
    scores = []
    for sid, values, labels in entries:
        a = auc(_curve_values(values), labels, magnitude=magnitude)
        if a is None:
            active = _label_array(labels)
            active = active[active != IGNORED]
            if (active == POSITIVE).sum() == 0:
                reason = "no positive segments"
            else:
                reason = "no negative segments"
            rows.append({"id": str(sid), "auc": None, "skip": reason})
        else:
            rows.append({"id": str(sid), "auc": float(a), "skip": None})
            scores.append(float(a))
    if not scores:
        raise EvaluationError("no scorable signals in corpus")
    lo, hi = bootstrap_mean_ci(scores, rng, bootstrap_rounds)
    return EvaluationReport(
        per_signal=tuple(rows),
        average_auc=float(np.mean(scores)),
        ci_low=lo,
        ci_high=hi,
        num_scorable=len(scores),
        config=config,
    )


@dataclasses.dataclass(frozen=True)
class FaithfulnessResult:
    """Log-odds drop after masking the top X% of segments."""

    X: float
    score_drop: float


def _top_segment_mask(values: np.ndarray, x_percent, magnitude: bool):
    vals = np.abs(values) if magnitude else values
    m = vals.size
    count = min(m, math.ceil(m * x_percent / 100.0 - 1e-9))
    order = np.argsort(-vals, kind="stable")  # ties: earlier segment first
    bits = np.ones(m, dtype=np.uint8)
    bits[order[:count]] = 0
    return bits, count


def _check_percentage(x_percent) -> None:
    if not 0 < x_percent <= 100:
        raise ValueError("percentage must be in (0, 100], got %r" % (x_percent,))


def faithfulness(
    model,
    signal,
    grid,
    curve: ImportanceCurve,
    x_percent,
    fill: str,
    rng: RandomSource,
    *,
    noise_std_reference: float | None = None,
    magnitude: bool = False,
) -> FaithfulnessResult:
    """Mask the ceil(M * X / 100) most important segments and report the
    log-odds drop for the curve's target class."""
    _check_percentage(x_percent)
    base_post = model.evaluate(signal)
    target = curve.target_class
    if target not in base_post:
        raise ValueError("model does not report class %r" % target)
    base = log_odds(base_post[target])
    bits, count = _top_segment_mask(curve.values, x_percent, magnitude)
    spec = PerturbationSpec(count / curve.num_segments, 1, fill, noise_std_reference)
    perturbed = apply_mask(signal, grid, bits, spec, rng)
    drop = base - log_odds(model.evaluate(perturbed)[target])
    return FaithfulnessResult(X=x_percent, score_drop=float(drop))


def faithfulness_table(
    model,
    signal,
    grid,
    curve: ImportanceCurve,
    fill: str,
    rng: RandomSource,
    percentages=DEFAULT_FF_PERCENTAGES,
    *,
    noise_std_reference: float | None = None,
    magnitude: bool = False,
) -> list[FaithfulnessResult]:
    """Faithfulness at several percentages, sharing one base evaluation."""
    base_post = model.evaluate(signal)
    target = curve.target_class
    if target not in base_post:
        raise ValueError("model does not report class %r" % target)
    base = log_odds(base_post[target])
    rows = []
    for x_percent in percentages:
        _check_percentage(x_percent)
        bits, count = _top_segment_mask(curve.values, x_percent, magnitude)
        spec = PerturbationSpec(count / curve.num_segments, 1, fill, noise_std_reference)
        perturbed = apply_mask(signal, grid, bits, spec, rng.child(str(x_percent)))
        drop = base - log_odds(model.evaluate(perturbed)[target])
        rows.append(FaithfulnessResult(X=x_percent, score_drop=float(drop)))
    return rows


def truncate_events(annotation: EventAnnotation, keep_prefix_seconds: float) -> EventAnnotation:
    """Shorten every event to at most its first ``keep_prefix_seconds``."""
    if keep_prefix_seconds <= 0:
        raise ValueError("prefix must be positive")
    events = tuple(
        Event(e.start, e.start + min(e.end - e.start, keep_prefix_seconds), e.label)
        for e in annotation.events
    )
    return EventAnnotation(events)


def truncation_sweep(
    curves,
    annotations,
    keep_prefix_seconds=DEFAULT_TRUNCATION_PREFIXES,
    *,
    grids,
    event_label: str,
    overlap_threshold: float = 0.09,
    magnitude: bool = False,
) -> list[tuple[float, float | None]]:
    """Average AUC after truncating every ground-truth event to each
    prefix; signals whose labels lose a class are skipped per prefix."""
    curves = list(curves)
    annotations = list(annotations)
    grids = list(grids)
    if not (len(curves) == len(annotations) == len(grids)):
        raise ValueError("curves, annotations, and grids must align")
    out = []
    for prefix in keep_prefix_seconds:
        vals = []
        for curve, ann, grid in zip(curves, annotations, grids):
            labels = label_segments(
                grid, truncate_events(ann, prefix), event_label, overlap_threshold
            )
            a = auc(_curve_values(curve), labels, magnitude=magnitude)
            if a is not None:
                vals.append(a)
        out.append((float(prefix), float(np.mean(vals)) if vals else None))
    return out


@dataclasses.dataclass(frozen=True)
class BenchmarkEntry:
    """One corpus item: a signal, its event annotation, and (optionally)
    its reference class label."""

    name: str
    signal: object
    annotation: EventAnnotation
    label: str | None = None


def run_benchmark(
    model,
    entries,
    rng: RandomSource,
    *,
    event_label: str,
    fills=("zeros", "noise"),
    surrogate_kinds=("lr", "shap", "rf"),
    num_masks: int = 3000,
    p_values=(0.2, 0.3, 0.4),
    d_values=(1, 3, 5),
    segment_duration: float = 0.1,
    overlap_threshold: float = 0.09,
    ff_percentages=DEFAULT_FF_PERCENTAGES,
    bootstrap_rounds: int = 1000,
    require_correct_prediction: bool = False,
    magnitude: bool = False,
    noise_std_reference: float | None = None,
    surrogate_configs: dict | None = None,
    truncation_prefixes=DEFAULT_TRUNCATION_PREFIXES,
) -> dict:
    """Evaluate every (surrogate x fill) system on one corpus.

    The scored mask dataset is collected once per (signal, fill) and
    shared by all surrogates. The report is a JSON-ready dict: config
    echo, per-signal usage, per-system AUC/CI/faithfulness/truncation,
    and the ranking by average AUC.
    """
    entries = list(entries)
    if not entries:
        raise EvaluationError("empty corpus")
    configs = {}
    for kind in surrogate_kinds:
        if surrogate_configs and kind in surrogate_configs:
            configs[kind] = surrogate_configs[kind]
        else:
            configs[kind] = SurrogateConfig(kind=kind)

    signal_rows = []
    used = []
    for entry in entries:
        if require_correct_prediction:
            if entry.label is None:
                raise ValueError("require_correct_prediction needs a label for %r" % entry.name)
            predicted = detect_class(model.evaluate(entry.signal))
            row = {"name": entry.name, "label": entry.label, "predicted": predicted}
            if predicted != entry.label:
                row.update(used=False, skip="predicted %r, labeled %r" % (predicted, entry.label))
                signal_rows.append(row)
                continue
            row.update(used=True, skip=None)
        else:
            row = {"name": entry.name, "label": entry.label, "predicted": None,
                   "used": True, "skip": None}
        signal_rows.append(row)
        used.append(entry)
    if not used:
        raise EvaluationError("no usable signals after the prediction filter")

    system_names = ["%s:%s" % (kind, fill) for fill in fills for kind in surrogate_kinds]
    data = {
        name: {"aucs": [], "per_signal": [], "ff": {x: [] for x in ff_percentages}, "curves": []}
        for name in system_names
    }
    any_scorable = False
    for entry in used:
        grid = make_grid(entry.signal, segment_duration)
        labels = label_segments(grid, entry.annotation, event_label, overlap_threshold)
        for fill in fills:
            # the rng children deliberately do not include the fill: fill
            # variants are compared on identical mask sets and identical
            # surrogate seeds, so their AUC gap reflects the fill alone
            dataset = collect_explanation_dataset(
                model, entry.signal, grid, rng.child("data", entry.name),
                fill=fill, p_values=p_values, d_values=d_values, num_masks=num_masks,
                noise_std_reference=noise_std_reference,
            )
            for kind in surrogate_kinds:
                system = "%s:%s" % (kind, fill)
                curve = fit_surrogate(dataset, configs[kind], rng.child("fit", entry.name, kind))
                a = auc(curve.values, labels, magnitude=magnitude)
                bucket = data[system]
                bucket["per_signal"].append({"name": entry.name, "auc": None if a is None else float(a)})
                if a is not None:
                    bucket["aucs"].append(float(a))
                    any_scorable = True
                for res in faithfulness_table(
                    model, entry.signal, grid, curve, fill, rng.child("ff", entry.name, system),
                    percentages=ff_percentages,
                    noise_std_reference=noise_std_reference, magnitude=magnitude,
                ):
                    bucket["ff"][res.X].append(res.score_drop)
                bucket["curves"].append((curve, entry.annotation, grid))
    if not any_scorable:
        raise EvaluationError("no scorable signals in corpus")

    systems = {}
    for name in system_names:
        bucket = data[name]
        if bucket["aucs"]:
            avg = float(np.mean(bucket["aucs"]))
            lo, hi = bootstrap_mean_ci(bucket["aucs"], rng.child("bootstrap", name), bootstrap_rounds)
        else:
            avg = lo = hi = None
        sweep = truncation_sweep(
            [c for c, _, _ in bucket["curves"]],
            [ann for _, ann, _ in bucket["curves"]],
            truncation_prefixes,
            grids=[g for _, _, g in bucket["curves"]],
            event_label=event_label,
            overlap_threshold=overlap_threshold,
            magnitude=magnitude,
        )
        systems[name] = {
            "auc": avg,
            "ci_low": lo,
            "ci_high": hi,
            "per_signal": bucket["per_signal"],
            "faithfulness": [
                [x, float(np.mean(bucket["ff"][x])) if bucket["ff"][x] else None]
                for x in ff_percentages
            ],
            "truncation": [[p, v] for p, v in sweep],
        }
    ranking = sorted(
        system_names,
        key=lambda s: (systems[s]["auc"] is None, -(systems[s]["auc"] or 0.0), s),
    )

    model_classes = list(model.classes) if hasattr(model, "classes") else None
    report = {
        "config": {
            "seed": rng.seed,
            "event_label": event_label,
            "fills": list(fills),
            "surrogates": list(surrogate_kinds),
            "num_masks": int(num_masks),
            "p_values": [float(p) for p in p_values],
            "d_values": [int(d) for d in d_values],
            "segment_duration": float(segment_duration),
            "overlap_threshold": float(overlap_threshold),
            "ff_percentages": [float(x) for x in ff_percentages],
            "bootstrap_rounds": int(bootstrap_rounds),
            "require_correct_prediction": bool(require_correct_prediction),
            "magnitude": bool(magnitude),
            "noise_std_reference": noise_std_reference,
            "truncation_prefixes": [float(p) for p in truncation_prefixes],
            "num_signals": len(entries),
            "num_used": len(used),
            "model_classes": model_classes,
        },
        "signals": signal_rows,
        "systems": systems,
        "ranking": ranking,
    }
    return report


def write_report_json(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt(value) -> str:
    return "nan" if value is None else "%.6f" % value


def write_auc_table(path, report: dict) -> None:
    lines = ["system\tauc\tci_low\tci_high"]
    for name in report["ranking"]:
        row = report["systems"][name]
        lines.append("%s\t%s\t%s\t%s" % (name, _fmt(row["auc"]), _fmt(row["ci_low"]), _fmt(row["ci_high"])))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_truncation_table(path, report: dict) -> None:
    lines = ["system\tprefix_s\tauc"]
    for name in report["ranking"]:
        for prefix, value in report["systems"][name]["truncation"]:
            lines.append("%s\t%s\t%s" % (name, "%g" % prefix, _fmt(value)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_faithfulness_table(path, report: dict) -> None:
    lines = ["system\tpercent\tscore_drop"]
    for name in report["ranking"]:
        for x, drop in report["systems"][name]["faithfulness"]:
            lines.append("%s\t%s\t%s" % (name, "%g" % x, _fmt(drop)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
