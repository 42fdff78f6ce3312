"""Time-localized explanations for black-box audio classifiers.

The pipeline: segment a waveform on a fixed grid, score masked
perturbations through the model, fit an interpretable surrogate to the
scores, and read per-segment importances off the surrogate. A benchmark
harness measures how well those importances localize annotated events.
"""

from .bridge import BridgeError, BridgeModel, CmdTransport, TcpTransport, model_from_spec
from .evaluation import (
    DEFAULT_FF_PERCENTAGES,
    DEFAULT_TRUNCATION_PREFIXES,
    BenchmarkEntry,
    EvaluationError,
    EvaluationReport,
    FaithfulnessResult,
    auc,
    bootstrap_mean_ci,
    evaluate_corpus,
    faithfulness,
    faithfulness_table,
    rank_fraction_filter,
    run_benchmark,
    truncate_events,
    truncation_sweep,
    write_auc_table,
    write_faithfulness_table,
    write_report_json,
    write_truncation_table,
)
from .masking import (
    PerturbationSpec,
    apply_mask,
    build_mask_batch,
    generate_mask,
    read_mask_jsonl,
    write_mask_jsonl,
)
from .models import (
    BlackBoxModel,
    CollectionError,
    EnergyCounterConfig,
    EnergyCounterModel,
    ScoredMaskDataset,
    TemplateDetectorModel,
    collect_scores,
    detect_class,
    log_odds,
    validate_posteriors,
)
from .rng import RandomSource
from .signal import (
    IGNORED,
    NEGATIVE,
    POSITIVE,
    AudioSignal,
    Event,
    EventAnnotation,
    SegmentGrid,
    SegmentLabels,
    label_segments,
    load_annotations,
    load_wav,
    make_grid,
    save_annotations,
    save_wav,
)
from .surrogate import (
    FitError,
    ImportanceCurve,
    SurrogateConfig,
    collect_explanation_dataset,
    explain,
    fit_kernel_shap,
    fit_linear,
    fit_random_forest,
    fit_surrogate,
    load_curve,
    save_curve,
    shap_kernel_weight,
)
from .synth import (
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

__version__ = "0.1.0"

__all__ = [
    "AudioSignal",
    "BenchmarkEntry",
    "BlackBoxModel",
    "BridgeError",
    "BridgeModel",
    "CmdTransport",
    "CollectionError",
    "CorpusItem",
    "DEFAULT_FF_PERCENTAGES",
    "DEFAULT_TRUNCATION_PREFIXES",
    "DrumsConfig",
    "EnergyCounterConfig",
    "EnergyCounterModel",
    "EvaluationError",
    "EvaluationReport",
    "Event",
    "EventAnnotation",
    "FaithfulnessResult",
    "FitError",
    "HIT_KINDS",
    "IGNORED",
    "ImportanceCurve",
    "MarkerInjectionConfig",
    "NEGATIVE",
    "POSITIVE",
    "PerturbationSpec",
    "RandomSource",
    "ScoredMaskDataset",
    "SegmentGrid",
    "SegmentLabels",
    "SurrogateConfig",
    "TcpTransport",
    "TemplateDetectorModel",
    "apply_mask",
    "auc",
    "bootstrap_mean_ci",
    "build_mask_batch",
    "collect_explanation_dataset",
    "collect_scores",
    "detect_class",
    "evaluate_corpus",
    "explain",
    "faithfulness",
    "faithfulness_table",
    "fit_kernel_shap",
    "fit_linear",
    "fit_random_forest",
    "fit_surrogate",
    "gen_drums",
    "generate_mask",
    "inject_marker",
    "label_segments",
    "load_annotations",
    "load_corpus",
    "load_curve",
    "load_wav",
    "log_odds",
    "make_clever_hans_corpus",
    "make_grid",
    "make_marker_pool",
    "model_from_spec",
    "rank_fraction_filter",
    "read_mask_jsonl",
    "run_benchmark",
    "save_annotations",
    "save_curve",
    "save_wav",
    "shap_kernel_weight",
    "synth_hit",
    "truncate_events",
    "truncation_sweep",
    "validate_posteriors",
    "write_auc_table",
    "write_corpus",
    "write_faithfulness_table",
    "write_mask_jsonl",
    "write_report_json",
    "write_truncation_table",
]
