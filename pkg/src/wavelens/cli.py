"""Command-line surface.

Subcommands: ``gen drums``, ``gen clever-hans``, ``explain``, ``eval``,
``bench``, ``ff``. Every run is reproducible from its flags: all
randomness derives from --seed through named stream children, so
results do not depend on --jobs. Outputs always land in files under
--out. Exit codes: 0 success, 2 usage or config error, 3 model or
bridge failure, 4 evaluation impossible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bridge import BridgeError, model_from_spec
from .evaluation import (
    BenchmarkEntry,
    EvaluationError,
    evaluate_corpus,
    faithfulness_table,
    run_benchmark,
    write_auc_table,
    write_faithfulness_table,
    write_report_json,
    write_truncation_table,
)
from .models import CollectionError
from .rng import RandomSource
from .signal import label_segments, load_wav, make_grid, save_annotations
from .surrogate import FitError, SurrogateConfig, explain, save_curve
from .synth import (
    DrumsConfig,
    MarkerInjectionConfig,
    gen_drums,
    load_corpus,
    make_clever_hans_corpus,
    write_corpus,
)


def _float_list(text: str) -> list[float]:
    return [float(token) for token in text.split(",") if token]


def _int_list(text: str) -> list[int]:
    return [int(token) for token in text.split(",") if token]


def _fmt(value) -> str:
    return "nan" if value is None else "%.6f" % value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavelens",
        description="Time-localized explanations for black-box audio classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic corpora")
    gen_sub = gen.add_subparsers(dest="generator", required=True)

    drums = gen_sub.add_parser("drums", help="slotted drum sequences with kick annotations")
    drums.add_argument("--out", required=True, help="corpus output directory")
    drums.add_argument("--seed", type=int, default=0)
    drums.add_argument("--num", type=int, default=6, help="kick-count classes 0..num-1")
    drums.add_argument("--quota", type=int, default=1000, help="sequences per class")
    drums.add_argument("--sample-rate", type=int, default=16000)

    hans = gen_sub.add_parser("clever-hans", help="corrupt one class with injected markers")
    hans.add_argument("--in", dest="input", required=True, help="source corpus directory")
    hans.add_argument("--out", required=True)
    hans.add_argument("--target", required=True, help="class label to corrupt")
    hans.add_argument("--seed", type=int, default=0)
    hans.add_argument("--pool-size", type=int, default=40)

    def add_model(p):
        p.add_argument(
            "--model",
            required=True,
            help="builtin:energy-counter | builtin:template:<wav> | "
            "bridge:cmd:<argv> | bridge:tcp:<addr>",
        )

    def add_perturbation(p):
        p.add_argument("--p", type=_float_list, default=[0.2, 0.3, 0.4],
                       help="comma-separated masking proportions")
        p.add_argument("--d", type=_int_list, default=[1, 3, 5],
                       help="comma-separated widening offsets")
        p.add_argument("--n", type=int, default=3000, help="perturbations per signal")
        p.add_argument("--segment-duration", type=float, default=0.1)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=None,
                       help="max concurrent signals (default: CPU count)")
        p.add_argument("--out", required=True, help="output directory")

    explain_p = sub.add_parser("explain", help="one importance curve per input WAV")
    explain_p.add_argument("--in", dest="inputs", nargs="+", required=True)
    add_model(explain_p)
    add_perturbation(explain_p)
    add_common(explain_p)
    explain_p.add_argument("--surrogate", choices=("lr", "shap", "rf"), default="rf")
    explain_p.add_argument("--fill", choices=("zeros", "noise"), default="zeros")

    eval_p = sub.add_parser("eval", help="localization AUC of one system on a corpus")
    eval_p.add_argument("--in", dest="input", required=True, help="corpus directory")
    add_model(eval_p)
    add_perturbation(eval_p)
    add_common(eval_p)
    eval_p.add_argument("--surrogate", choices=("lr", "shap", "rf"), default="rf")
    eval_p.add_argument("--fill", choices=("zeros", "noise"), default="zeros")
    eval_p.add_argument("--event-label", default="kick")
    eval_p.add_argument("--overlap-threshold", type=float, default=0.09)
    eval_p.add_argument("--bootstrap", type=int, default=1000)
    eval_p.add_argument("--rank-magnitude", action="store_true",
                        help="rank segments by |importance|")

    bench_p = sub.add_parser("bench", help="full 6-system benchmark matrix")
    bench_p.add_argument("--in", dest="input", required=True, help="corpus directory")
    add_model(bench_p)
    add_perturbation(bench_p)
    add_common(bench_p)
    bench_p.add_argument("--event-label", default="kick")
    bench_p.add_argument("--overlap-threshold", type=float, default=0.09)
    bench_p.add_argument("--bootstrap", type=int, default=1000)
    bench_p.add_argument("--require-correct", action="store_true",
                         help="skip signals the model misclassifies")
    bench_p.add_argument("--rank-magnitude", action="store_true")

    ff_p = sub.add_parser("ff", help="faithfulness table per signal")
    ff_p.add_argument("--in", dest="input", required=True, help="corpus directory")
    add_model(ff_p)
    add_perturbation(ff_p)
    add_common(ff_p)
    ff_p.add_argument("--surrogate", choices=("lr", "shap", "rf"), default="rf")
    ff_p.add_argument("--fill", choices=("zeros", "noise"), default="zeros")

    return parser


def _run_jobs(fn, tasks, jobs):
    tasks = list(tasks)
    workers = jobs if jobs and jobs > 0 else (os.cpu_count() or 1)
    workers = min(workers, max(1, len(tasks)))
    if workers <= 1:
        return [fn(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _load_corpus_checked(path):
    items, manifest = load_corpus(path)
    if not items:
        raise ValueError("corpus at %s is empty" % path)
    return items, manifest


def _cmd_gen(args) -> int:
    if args.generator == "drums":
        config = DrumsConfig(
            quotas={count: args.quota for count in range(args.num)},
            sample_rate=args.sample_rate,
        )
        items = gen_drums(config, RandomSource(args.seed).child("gen-drums"))
        manifest = {
            "kind": "drums",
            "seed": args.seed,
            "num_counts": args.num,
            "quota": args.quota,
            "sample_rate": args.sample_rate,
            "hits_per_sequence": config.hits_per_sequence,
            "hit_duration": config.hit_duration,
            "slot_duration": config.slot_duration,
        }
        write_corpus(args.out, items, manifest)
        print("wrote %d sequences to %s" % (len(items), args.out))
        return 0
    items, source_manifest = _load_corpus_checked(args.input)
    config = MarkerInjectionConfig(target_class=args.target, pool_size=args.pool_size)
    new_items, audit = make_clever_hans_corpus(
        items, config, RandomSource(args.seed).child("clever-hans")
    )
    manifest = {
        "kind": "clever-hans",
        "seed": args.seed,
        "target_class": args.target,
        "pool_size": args.pool_size,
        "source": source_manifest,
    }
    write_corpus(args.out, new_items, manifest)
    save_annotations(
        Path(args.out) / "audit.json",
        {name + ".wav": annotation for name, annotation in audit.items()},
    )
    corrupted = sum(1 for annotation in audit.values() if annotation.events)
    print("wrote %d signals (%d corrupted) to %s" % (len(new_items), corrupted, args.out))
    return 0


def _cmd_explain(args) -> int:
    model = model_from_spec(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    surrogate_config = SurrogateConfig(kind=args.surrogate)
    rng = RandomSource(args.seed)

    def one(path_text):
        path = Path(path_text)
        signal = load_wav(path)
        curve = explain(
            model,
            signal,
            rng.child("explain", path.stem),
            surrogate_config=surrogate_config,
            fill=args.fill,
            p_values=tuple(args.p),
            d_values=tuple(args.d),
            num_masks=args.n,
            segment_duration=args.segment_duration,
        )
        save_curve(out / (path.stem + ".curve.json"), curve)
        return path.stem

    names = _run_jobs(one, args.inputs, args.jobs)
    print("wrote %d curve(s) to %s" % (len(names), out))
    return 0


def _cmd_eval(args) -> int:
    model = model_from_spec(args.model)
    items, _ = _load_corpus_checked(args.input)
    rng = RandomSource(args.seed)
    surrogate_config = SurrogateConfig(kind=args.surrogate)
    config_echo = {
        "command": "eval",
        "model": args.model,
        "surrogate": args.surrogate,
        "fill": args.fill,
        "p_values": [float(p) for p in args.p],
        "d_values": [int(d) for d in args.d],
        "num_masks": int(args.n),
        "segment_duration": float(args.segment_duration),
        "event_label": args.event_label,
        "overlap_threshold": float(args.overlap_threshold),
        "bootstrap_rounds": int(args.bootstrap),
        "magnitude": bool(args.rank_magnitude),
        "seed": int(args.seed),
    }

    def one(item):
        grid = make_grid(item.signal, args.segment_duration)
        curve = explain(
            model,
            item.signal,
            rng.child("explain", item.name),
            surrogate_config=surrogate_config,
            fill=args.fill,
            p_values=tuple(args.p),
            d_values=tuple(args.d),
            num_masks=args.n,
            segment_duration=args.segment_duration,
        )
        labels = label_segments(grid, item.annotation, args.event_label, args.overlap_threshold)
        return item.name, curve, labels

    entries = _run_jobs(one, items, args.jobs)
    report = evaluate_corpus(
        entries,
        rng.child("bootstrap"),
        args.bootstrap,
        magnitude=args.rank_magnitude,
        config=config_echo,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    lines = ["signal\tauc"]
    for row in report.per_signal:
        lines.append("%s\t%s" % (row["id"], _fmt(row["auc"])))
    (out / "per_signal.tsv").write_text("\n".join(lines) + "\n")
    print(
        "average AUC %.4f [%0.4f, %0.4f] over %d signal(s); report in %s"
        % (report.average_auc, report.ci_low, report.ci_high, report.num_scorable, out)
    )
    return 0


def _cmd_bench(args) -> int:
    model = model_from_spec(args.model)
    items, _ = _load_corpus_checked(args.input)
    entries = [
        BenchmarkEntry(item.name, item.signal, item.annotation, item.label) for item in items
    ]
    report = run_benchmark(
        model,
        entries,
        RandomSource(args.seed).child("bench"),
        event_label=args.event_label,
        num_masks=args.n,
        p_values=tuple(args.p),
        d_values=tuple(args.d),
        segment_duration=args.segment_duration,
        overlap_threshold=args.overlap_threshold,
        bootstrap_rounds=args.bootstrap,
        require_correct_prediction=args.require_correct,
        magnitude=args.rank_magnitude,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(out / "report.json", report)
    write_auc_table(out / "auc.tsv", report)
    write_truncation_table(out / "truncation.tsv", report)
    write_faithfulness_table(out / "faithfulness.tsv", report)
    best = report["ranking"][0]
    print(
        "best system %s (AUC %s); full report in %s"
        % (best, _fmt(report["systems"][best]["auc"]), out)
    )
    return 0


def _cmd_ff(args) -> int:
    model = model_from_spec(args.model)
    items, _ = _load_corpus_checked(args.input)
    rng = RandomSource(args.seed)
    surrogate_config = SurrogateConfig(kind=args.surrogate)

    def one(item):
        grid = make_grid(item.signal, args.segment_duration)
        curve = explain(
            model,
            item.signal,
            rng.child("explain", item.name),
            surrogate_config=surrogate_config,
            fill=args.fill,
            p_values=tuple(args.p),
            d_values=tuple(args.d),
            num_masks=args.n,
            segment_duration=args.segment_duration,
        )
        rows = faithfulness_table(model, item.signal, grid, curve, args.fill, rng.child("ff", item.name))
        return item.name, rows

    results = _run_jobs(one, items, args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["signal\tpercent\tscore_drop"]
    table = {}
    for name, rows in results:
        table[name] = [
            {"x_percent": float(row.X), "score_drop": float(row.score_drop)} for row in rows
        ]
        for row in rows:
            lines.append("%s\t%g\t%s" % (name, row.X, _fmt(row.score_drop)))
    (out / "faithfulness.tsv").write_text("\n".join(lines) + "\n")
    with open(out / "faithfulness.json", "w") as fh:
        json.dump(table, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print("wrote faithfulness for %d signal(s) to %s" % (len(results), out))
    return 0


def _dispatch(args) -> int:
    if args.command == "gen":
        return _cmd_gen(args)
    if args.command == "explain":
        return _cmd_explain(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "bench":
        return _cmd_bench(args)
    if args.command == "ff":
        return _cmd_ff(args)
    raise ValueError("unknown command %r" % args.command)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except (BridgeError, CollectionError) as exc:
        print("model error: %s" % exc, file=sys.stderr)
        return 3
    except (EvaluationError, FitError) as exc:
        print("evaluation impossible: %s" % exc, file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
