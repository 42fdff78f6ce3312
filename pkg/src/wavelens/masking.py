"""Binary segment masks and their application to signals.

A mask holds one bit per grid segment, 1 = keep, 0 = replace. Masks are
built by repeatedly picking a fresh start position and zeroing a block
of ``d`` consecutive segments until at least ``ceil(M * p)`` segments
are masked, so the final zero count lands in
``[ceil(M*p), min(M, ceil(M*p) + d - 1)]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .rng import RandomSource
from .signal import AudioSignal, SegmentGrid

FILLS = ("zeros", "noise")


@dataclass(frozen=True)
class PerturbationSpec:
    """How masks are drawn (p, d) and how masked samples are filled.

    ``noise_std_reference`` is the corpus-level average sample standard
    deviation; when absent, noise filling falls back to the standard
    deviation of the signal being perturbed.
    """

    p: float
    d: int
    fill: str = "zeros"
    noise_std_reference: float | None = None

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError("p must be in (0, 1], got %r" % (self.p,))
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValueError("d must be an integer >= 1, got %r" % (self.d,))
        if self.fill not in FILLS:
            raise ValueError("fill must be one of %r, got %r" % (FILLS, self.fill))
        if self.noise_std_reference is not None and self.noise_std_reference < 0:
            raise ValueError("noise_std_reference must be >= 0")


def target_zero_count(num_segments: int, p: float) -> int:
    """ceil(M * p), robust to float dust in the product, at least 1."""
    return max(1, math.ceil(num_segments * p - 1e-9))


def _mask_from_start_order(num_segments, target, d, order):
    """Build one mask consuming starts from ``order`` until the zero
    count reaches ``target``. Returns (bits, number of starts used)."""
    bits = np.ones(num_segments, dtype=np.uint8)
    zeros = 0
    used = 0
    while zeros < target:
        assert used < num_segments, "start positions exhausted before reaching target"
        s = int(order[used])
        used += 1
        e = min(s + d, num_segments)
        zeros += int(bits[s:e].sum())  # only fresh positions count
        bits[s:e] = 0
    return bits, used


def generate_mask(num_segments: int, spec: PerturbationSpec, rng: RandomSource) -> np.ndarray:
    """Draw one mask. Start positions are sampled uniformly without
    reuse, which is realized as consuming a prefix of a random
    permutation of all positions."""
    if num_segments < 1:
        raise ValueError("num_segments must be >= 1")
    order = rng.generator.permutation(num_segments)
    bits, _ = _mask_from_start_order(num_segments, target_zero_count(num_segments, spec.p), spec.d, order)
    return bits


def apply_mask(
    signal: AudioSignal,
    grid: SegmentGrid,
    mask: np.ndarray,
    spec: PerturbationSpec,
    rng: RandomSource,
) -> AudioSignal:
    """Replace the samples of masked segments; keep the rest bit-identical.

    ``zeros`` fill writes silence. ``noise`` fill writes Gaussian noise
    with the original signal's sample mean and a standard deviation of
    ``u * noise_std_reference`` where ``u ~ Uniform[0.1, 1.0]`` is drawn
    once per perturbed signal. Noise is not clipped to [-1, 1].
    """
    mask = np.asarray(mask)
    if mask.shape != (grid.num_segments,):
        raise ValueError(
            "mask length %d does not match grid with %d segments" % (mask.size, grid.num_segments)
        )
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask bits must be 0 or 1")

    out = signal.samples.copy()
    bounds = grid.sample_bounds(signal.sample_rate)
    if spec.fill == "noise":
        gen = rng.generator
        u = gen.uniform(0.1, 1.0)
        ref = spec.noise_std_reference
        if ref is None:
            ref = float(np.std(signal.samples))
        mean = float(np.mean(signal.samples))
        scale = u * ref
        for i in np.flatnonzero(mask == 0):
            lo, hi = bounds[i]
            out[lo:hi] = gen.normal(mean, scale, hi - lo)
    else:
        for i in np.flatnonzero(mask == 0):
            lo, hi = bounds[i]
            out[lo:hi] = 0.0
    return AudioSignal(out, signal.sample_rate)


def build_mask_batch(
    num_segments: int,
    pd_pairs,
    fill: str,
    num_masks: int,
    rng: RandomSource,
    noise_std_reference: float | None = None,
) -> list[tuple[np.ndarray, PerturbationSpec]]:
    """Draw ``num_masks`` masks spread over the (p, d) combinations as
    evenly as possible (counts differ by at most one, earlier
    combinations get the remainder)."""
    pd_pairs = list(pd_pairs)
    if not pd_pairs:
        raise ValueError("need at least one (p, d) combination")
    if num_masks < 1:
        raise ValueError("num_masks must be >= 1")
    base, rem = divmod(num_masks, len(pd_pairs))
    batch = []
    for idx, (p, d) in enumerate(pd_pairs):
        spec = PerturbationSpec(p, d, fill, noise_std_reference)
        count = base + (1 if idx < rem else 0)
        for _ in range(count):
            batch.append((generate_mask(num_segments, spec, rng), spec))
    return batch


def write_mask_jsonl(path, batch, seed: int) -> None:
    """One mask per line: {"mask": "0101...", "p", "d", "fill", "seed"}."""
    with open(path, "w") as fh:
        for mask, spec in batch:
            row = {
                "mask": "".join("1" if b else "0" for b in mask),
                "p": spec.p,
                "d": spec.d,
                "fill": spec.fill,
                "seed": seed,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_mask_jsonl(path) -> list[tuple[np.ndarray, PerturbationSpec, int]]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            bits = np.array([1 if c == "1" else 0 for c in doc["mask"]], dtype=np.uint8)
            spec = PerturbationSpec(float(doc["p"]), int(doc["d"]), str(doc["fill"]))
            rows.append((bits, spec, int(doc["seed"])))
    return rows
