"""Surrogate explainers fitted to masked-perturbation score datasets.

Three interchangeable fitters produce a per-segment importance curve:
a ridge linear fit, the same fit under Shapley kernel weights, and a
regression forest whose split gains become importances.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from . import forest
from .masking import PerturbationSpec, build_mask_batch
from .models import ScoredMaskDataset, collect_scores
from .rng import RandomSource
from .signal import AudioSignal, make_grid

SURROGATE_KINDS = ("lr", "shap", "rf")

WEIGHT_CAP = 1e6


class FitError(ValueError):
    """Raised when a dataset cannot support a surrogate fit."""


@dataclasses.dataclass(frozen=True)
class SurrogateConfig:
    """Choice of surrogate family plus its knobs.

    Forest knobs are ignored by the linear fits and vice versa.
    ``features_per_split=None`` means ceil(M / 3).
    """

    kind: str = "lr"
    ridge_lambda: float = 1e-8
    num_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None
    bootstrap: bool = True

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise ValueError("kind must be one of %r, got %r" % (SURROGATE_KINDS, self.kind))
        if not (math.isfinite(self.ridge_lambda) and self.ridge_lambda >= 0):
            raise ValueError("ridge_lambda must be finite and >= 0")
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1 or None")


@dataclasses.dataclass(frozen=True)
class ImportanceCurve:
    """Per-segment importance values for one target class."""

    values: np.ndarray
    target_class: str
    surrogate: str
    diagnostics: dict
    segment_duration: float | None = None
    fill: str | None = None
    seed: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0 or not np.isfinite(values).all():
            raise ValueError("curve values must be a finite 1-D array")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def num_segments(self) -> int:
        return self.values.size


def shap_kernel_weight(num_segments: int, num_kept: int) -> float:
    """Shapley kernel weight for a mask keeping ``num_kept`` of
    ``num_segments`` segments; the infinite-weight endpoints are capped."""
    m, k = int(num_segments), int(num_kept)
    if m < 1 or k < 0 or k > m:
        raise ValueError("need 0 <= num_kept <= num_segments")
    if k == 0 or k == m:
        return WEIGHT_CAP
    try:
        return (m - 1) / (math.comb(m, k) * k * (m - k))
    except OverflowError:
        return 0.0


def _check_dataset(dataset: ScoredMaskDataset) -> None:
    if dataset.num_masks < 2:
        raise FitError("need at least 2 scored masks, got %d" % dataset.num_masks)
    if (dataset.masks == dataset.masks[0]).all():
        raise FitError("all masks identical; nothing to fit")


def _weighted_least_squares(dataset, weights, ridge_lambda, kind):
    """Ridge fit via lstsq on the weight-scaled, ridge-augmented design.

    The intercept column carries no ridge row, so shifting all scores
    moves only the intercept.
    """
    X = dataset.masks.astype(np.float64)
    y = dataset.scores
    n, m = X.shape
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or not np.isfinite(w).all() or (w <= 0).any():
            raise ValueError("weights must be %d positive finite values" % n)
    sw = np.sqrt(w)
    design = np.column_stack([X, np.ones(n)]) * sw[:, None]
    rhs = y * sw
    if ridge_lambda > 0:
        ridge_rows = np.zeros((m, m + 1))
        ridge_rows[:, :m] = math.sqrt(ridge_lambda) * np.eye(m)
        design = np.vstack([design, ridge_rows])
        rhs = np.concatenate([rhs, np.zeros(m)])
    beta, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    values, intercept = beta[:m], float(beta[m])

    preds = X @ values + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - preds) ** 2))
    r2 = 0.0 if ss_tot <= 0.0 else 1.0 - ss_res / ss_tot
    diagnostics = {
        "intercept": intercept,
        "training_r2": r2,
        "score_range": [float(y.min()), float(y.max())],
        "ridge_lambda": float(ridge_lambda),
        "degenerate": bool(y.max() == y.min()),
    }
    return ImportanceCurve(values, dataset.target_class, kind, diagnostics)


def fit_linear(dataset: ScoredMaskDataset, weights=None, ridge_lambda: float = 1e-8) -> ImportanceCurve:
    """Weighted ridge regression of scores on mask bits; coefficients
    are the importances."""
    _check_dataset(dataset)
    return _weighted_least_squares(dataset, weights, ridge_lambda, "lr")


def fit_kernel_shap(dataset: ScoredMaskDataset, ridge_lambda: float = 1e-8) -> ImportanceCurve:
    """Same regression but each row weighted by the Shapley kernel for
    its kept-segment count."""
    _check_dataset(dataset)
    kept = dataset.masks.sum(axis=1)
    weights = np.array([shap_kernel_weight(dataset.num_segments, int(k)) for k in kept])
    if (weights <= 0).any():
        raise FitError("kernel weights underflowed; segment count too large")
    return _weighted_least_squares(dataset, weights, ridge_lambda, "shap")


def fit_random_forest(
    dataset: ScoredMaskDataset, config: SurrogateConfig, rng: RandomSource
) -> ImportanceCurve:
    """Regression forest; importance of a segment is its share of the
    total split gain over all trees (zeros and a degenerate flag when no
    split clears the gain floor)."""
    _check_dataset(dataset)
    m = dataset.num_segments
    m_try = config.features_per_split
    if m_try is None:
        m_try = math.ceil(m / 3)
    m_try = min(m_try, m)
    gains, r2, _ = forest.fit_forest(
        dataset.masks,
        dataset.scores,
        num_trees=config.num_trees,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        features_per_split=m_try,
        bootstrap=config.bootstrap,
        generator=rng.generator,
    )
    total = float(gains.sum())
    if total > 0.0:
        values = gains / total
        degenerate = False
    else:
        values = np.zeros(m)
        degenerate = True
    y = dataset.scores
    diagnostics = {
        "training_r2": float(r2),
        "score_range": [float(y.min()), float(y.max())],
        "num_trees": int(config.num_trees),
        "degenerate": degenerate,
    }
    return ImportanceCurve(values, dataset.target_class, "rf", diagnostics)


def fit_surrogate(
    dataset: ScoredMaskDataset, config: SurrogateConfig, rng: RandomSource | None = None
) -> ImportanceCurve:
    if config.kind == "lr":
        return fit_linear(dataset, ridge_lambda=config.ridge_lambda)
    if config.kind == "shap":
        return fit_kernel_shap(dataset, ridge_lambda=config.ridge_lambda)
    if rng is None:
        raise ValueError("forest surrogate needs a RandomSource")
    return fit_random_forest(dataset, config, rng)


def collect_explanation_dataset(
    model,
    signal: AudioSignal,
    grid,
    rng: RandomSource,
    *,
    fill: str = "zeros",
    p_values=(0.2, 0.3, 0.4),
    d_values=(1, 3, 5),
    num_masks: int = 3000,
    target_class: str | None = None,
    noise_std_reference: float | None = None,
) -> ScoredMaskDataset:
    """Draw masks over the (p, d) lattice and score them against the
    model. One all-ones mask is always appended so the dataset anchors
    the unperturbed score."""
    pairs = [(p, d) for p in p_values for d in d_values]
    batch = build_mask_batch(
        grid.num_segments, pairs, fill, num_masks, rng.child("masks"),
        noise_std_reference=noise_std_reference,
    )
    anchor_spec = PerturbationSpec(pairs[0][0], pairs[0][1], fill, noise_std_reference)
    batch.append((np.ones(grid.num_segments, dtype=np.uint8), anchor_spec))
    return collect_scores(
        model, signal, grid, batch, rng.child("scores"), target_class=target_class
    )


def explain(
    model,
    signal: AudioSignal,
    rng: RandomSource,
    *,
    surrogate_config: SurrogateConfig = SurrogateConfig(),
    fill: str = "zeros",
    p_values=(0.2, 0.3, 0.4),
    d_values=(1, 3, 5),
    num_masks: int = 3000,
    segment_duration: float = 0.1,
    target_class: str | None = None,
    noise_std_reference: float | None = None,
) -> ImportanceCurve:
    """Full pipeline: grid the signal, collect a scored mask dataset,
    fit the chosen surrogate."""
    grid = make_grid(signal, segment_duration)
    dataset = collect_explanation_dataset(
        model, signal, grid, rng,
        fill=fill, p_values=p_values, d_values=d_values, num_masks=num_masks,
        target_class=target_class, noise_std_reference=noise_std_reference,
    )
    curve = fit_surrogate(dataset, surrogate_config, rng.child("fit"))
    diagnostics = dict(curve.diagnostics)
    diagnostics["num_masks"] = dataset.num_masks
    diagnostics["base_score"] = float(dataset.base_score)
    return dataclasses.replace(
        curve,
        segment_duration=grid.segment_duration,
        fill=fill,
        seed=rng.seed,
        diagnostics=diagnostics,
    )


def curve_to_json_dict(curve: ImportanceCurve) -> dict:
    return {
        "segment_duration": curve.segment_duration,
        "values": [float(v) for v in curve.values],
        "target_class": curve.target_class,
        "surrogate": curve.surrogate,
        "fill": curve.fill,
        "seed": curve.seed,
        "diagnostics": curve.diagnostics,
    }


def curve_from_json_dict(doc: dict) -> ImportanceCurve:
    return ImportanceCurve(
        values=np.array(doc["values"], dtype=np.float64),
        target_class=str(doc["target_class"]),
        surrogate=str(doc["surrogate"]),
        diagnostics=dict(doc.get("diagnostics", {})),
        segment_duration=doc.get("segment_duration"),
        fill=doc.get("fill"),
        seed=doc.get("seed"),
    )


def save_curve(path, curve: ImportanceCurve) -> None:
    with open(path, "w") as fh:
        json.dump(curve_to_json_dict(curve), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_curve(path) -> ImportanceCurve:
    with open(path) as fh:
        return curve_from_json_dict(json.load(fh))
