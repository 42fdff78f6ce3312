"""Black-box model interface, log-odds scoring, batch score collection,
and the two built-in deterministic reference models.

Models ingest audio as float32 (inputs are quantized on entry), so a
signal that crosses a process boundary as float32 evaluates identically
to the same signal evaluated in process.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np

from .masking import PerturbationSpec, apply_mask
from .rng import RandomSource
from .signal import AudioSignal, SegmentGrid

LOG_ODDS_EPS = 1e-6


class BlackBoxModel(abc.ABC):
    """Anything that maps a signal to class posteriors.

    ``classes`` lists the class identifiers; ``evaluate`` returns a
    posterior per class. Posteriors need not sum to one (multi-label
    models emit independent scores) but must lie in [0, 1].
    """

    classes: tuple[str, ...] = ()

    @abc.abstractmethod
    def evaluate(self, signal: AudioSignal) -> dict[str, float]:
        raise NotImplementedError

    def predict(self, signal: AudioSignal) -> str:
        """Class with the highest posterior on this signal."""
        return detect_class(self.evaluate(signal))


class CollectionError(RuntimeError):
    """A model failed while scoring one perturbation of a batch."""

    def __init__(self, index: int, cause: Exception):
        super().__init__("model evaluation failed at batch index %d: %s" % (index, cause))
        self.index = index


def log_odds(posterior: float, eps: float = LOG_ODDS_EPS) -> float:
    """ln(p / (1 - p)) with p clamped to [eps, 1 - eps]."""
    p = min(max(float(posterior), eps), 1.0 - eps)
    return math.log(p / (1.0 - p))


def detect_class(posteriors: dict[str, float]) -> str:
    """Highest-posterior class; ties go to the lexicographically
    smallest identifier, and any strictly increasing transform of the
    posteriors leaves the result unchanged."""
    if not posteriors:
        raise ValueError("posterior dictionary is empty")
    return min(posteriors, key=lambda c: (-posteriors[c], c))


def validate_posteriors(posteriors, classes: tuple[str, ...] | None = None) -> None:
    if not isinstance(posteriors, dict) or not posteriors:
        raise ValueError("posteriors must be a non-empty dict")
    for key, value in posteriors.items():
        if not isinstance(key, str):
            raise ValueError("class identifiers must be strings, got %r" % (key,))
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError("posterior for %r is not a number" % key)
        if not (0.0 <= float(value) <= 1.0) or not math.isfinite(float(value)):
            raise ValueError("posterior for %r out of [0, 1]: %r" % (key, value))
    if classes is not None and set(posteriors) != set(classes):
        raise ValueError("posterior classes %r do not match %r" % (sorted(posteriors), sorted(classes)))


@dataclass(frozen=True)
class ScoredMaskDataset:
    """Masks and the log-odds score each one produced, plus the score of
    the unperturbed signal, all for one target class."""

    masks: np.ndarray
    scores: np.ndarray
    base_score: float
    target_class: str

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=np.uint8)
        scores = np.asarray(self.scores, dtype=np.float64)
        if masks.ndim != 2 or scores.ndim != 1 or masks.shape[0] != scores.size:
            raise ValueError(
                "need masks (N, M) with N scores, got %r and %r" % (masks.shape, scores.shape)
            )
        if not np.isfinite(scores).all() or not math.isfinite(self.base_score):
            raise ValueError("scores must be finite")
        masks.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "scores", scores)

    @property
    def num_masks(self) -> int:
        return self.masks.shape[0]

    @property
    def num_segments(self) -> int:
        return self.masks.shape[1]


def collect_scores(
    model: BlackBoxModel,
    signal: AudioSignal,
    grid: SegmentGrid,
    batch,
    rng: RandomSource,
    target_class: str | None = None,
) -> ScoredMaskDataset:
    """Score every mask in the batch: exactly one model evaluation for
    the unperturbed signal plus one per mask, in batch order.

    The target class defaults to the model's argmax on the unperturbed
    signal. Each row perturbs with its own derived stream (``rng.child(i)``)
    so results do not depend on evaluation order.
    """
    base_post = model.evaluate(signal)
    validate_posteriors(base_post)
    if target_class is None:
        target_class = detect_class(base_post)
    elif target_class not in base_post:
        raise ValueError("target class %r not among model classes %r" % (target_class, sorted(base_post)))
    base_score = log_odds(base_post[target_class])

    masks = np.empty((len(batch), grid.num_segments), dtype=np.uint8)
    scores = np.empty(len(batch))
    for i, (mask, spec) in enumerate(batch):
        perturbed = apply_mask(signal, grid, mask, spec, rng.child(i))
        try:
            post = model.evaluate(perturbed)
        except Exception as exc:
            raise CollectionError(i, exc) from exc
        if target_class not in post:
            raise CollectionError(i, ValueError("model dropped class %r" % target_class))
        masks[i] = mask
        scores[i] = log_odds(post[target_class])
    return ScoredMaskDataset(masks, scores, base_score, target_class)


# ---------------------------------------------------------------------------
# built-in: low-band onset counter

@dataclass(frozen=True)
class EnergyCounterConfig:
    band: tuple[float, float] = (40.0, 120.0)
    frame_duration: float = 0.01
    # high enough that gaussian fill noise cannot trip a frame, low enough
    # that a tapered hit stays one contiguous active run
    threshold: float = 0.02
    # hysteresis floor: an active run persists until energy drops below
    # this, so phase ripple near the onset threshold cannot split a run
    release_threshold: float = 0.01
    # one headroom class above the largest corpus count, so perturbations
    # that add an onset to a maximal sequence stay distinguishable
    max_count: int = 6
    epsilon: float = 0.01


def band_frame_energies(samples, sample_rate, band, frame_duration):
    """Mean-square energy per frame after a hard band-pass."""
    spec = np.fft.rfft(samples)
    freqs = np.fft.rfftfreq(samples.size, 1.0 / sample_rate)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    filtered = np.fft.irfft(spec, samples.size)
    frame = max(1, int(round(frame_duration * sample_rate)))
    count = filtered.size // frame
    if count == 0:
        return np.zeros(0)
    return np.mean(filtered[: count * frame].reshape(count, frame) ** 2, axis=1)


def count_onsets(energies, threshold, release_threshold=None) -> int:
    """Schmitt-trigger onset count: a run begins when energy rises above
    ``threshold`` and lasts until it falls below ``release_threshold``
    (equal to ``threshold`` when omitted). Frames between the two levels
    extend a run but never start one."""
    if release_threshold is None:
        release_threshold = threshold
    moves = np.where(energies > threshold, 1, np.where(energies < release_threshold, -1, 0))
    moves = moves[moves != 0]
    if moves.size == 0:
        return 0
    rises = int(np.count_nonzero((moves[1:] == 1) & (moves[:-1] == -1)))
    return rises + int(moves[0] == 1)


class EnergyCounterModel(BlackBoxModel):
    """Counts low-band energy onsets and emits a softened one-hot
    posterior over the counts 0..max_count."""

    def __init__(self, config: EnergyCounterConfig = EnergyCounterConfig()):
        self.config = config
        self.classes = tuple(str(i) for i in range(config.max_count + 1))

    def evaluate(self, signal: AudioSignal) -> dict[str, float]:
        x = signal.samples.astype(np.float32).astype(np.float64)
        energies = band_frame_energies(x, signal.sample_rate, self.config.band, self.config.frame_duration)
        count = min(
            count_onsets(energies, self.config.threshold, self.config.release_threshold),
            self.config.max_count,
        )
        eps = self.config.epsilon
        post = {c: eps for c in self.classes}
        post[str(count)] = 1.0 - self.config.max_count * eps
        return post


# ---------------------------------------------------------------------------
# built-in: template correlation detector

class TemplateDetectorModel(BlackBoxModel):
    """Binary detector: posterior = sigmoid(gain * max_ncc - bias) where
    max_ncc is the best normalized cross-correlation of the template
    against any aligned window of the signal."""

    classes = ("present", "absent")

    def __init__(self, template: AudioSignal, gain: float = 12.0, bias: float = 6.0):
        self.template = template.samples.astype(np.float32).astype(np.float64)
        self.template_rate = template.sample_rate
        self.gain = gain
        self.bias = bias
        norm = float(np.sqrt(np.sum(self.template**2)))
        if norm <= 0:
            raise ValueError("template is silent")
        self._template_norm = norm

    def evaluate(self, signal: AudioSignal) -> dict[str, float]:
        if signal.sample_rate != self.template_rate:
            raise ValueError(
                "signal rate %d != template rate %d" % (signal.sample_rate, self.template_rate)
            )
        x = signal.samples.astype(np.float32).astype(np.float64)
        t = self.template
        if t.size > x.size:
            raise ValueError("template longer than signal")
        nfft = 1 << (x.size + t.size - 1).bit_length()
        # linear cross-correlation via zero-padded FFT
        num = np.fft.irfft(np.fft.rfft(x, nfft) * np.conj(np.fft.rfft(t, nfft)), nfft)
        num = num[: x.size - t.size + 1]
        csum = np.concatenate(([0.0], np.cumsum(x * x)))
        window = csum[t.size :] - csum[: -t.size]
        denom = np.sqrt(np.clip(window, 0.0, None)) * self._template_norm
        ncc = np.where(denom > 1e-12, num / np.maximum(denom, 1e-12), 0.0)
        best = float(np.max(ncc))
        present = 1.0 / (1.0 + math.exp(-(self.gain * best - self.bias)))
        return {"present": present, "absent": 1.0 - present}
