"""Training-crop streaming over loaded scene clouds.

Re-implements the generator's crop semantics on the consumer side: a k-NN
region around a random anchor (mae mode) or two overlapping regions
(contrastive mode). Equivalence with the generator is at the invariant
level (exact nearest-by-distance point sets, size, overlap floor), not
bit-level random streams.
"""

from __future__ import annotations

import logging
from typing import Iterable, Iterator

import numpy as np

from .manifest import DatasetRecord, LoadedSample, load_sample

log = logging.getLogger(__name__)

DEFAULT_CROP_POINTS = 20000
DEFAULT_OVERLAP_MIN = 0.1
DEFAULT_ANCHOR_RADIUS = 1.0


def _knn(positions: np.ndarray, anchor: int, n: int) -> np.ndarray:
    delta = positions - positions[anchor]
    d2 = np.einsum("ij,ij->i", delta, delta)
    order = np.lexsort((np.arange(len(d2)), d2))
    return order[:n]


def _take(sample: LoadedSample, idx: np.ndarray) -> LoadedSample:
    return LoadedSample(
        sample.record,
        sample.positions[idx],
        None if sample.colors is None else sample.colors[idx],
        None if sample.object_ids is None else sample.object_ids[idx],
    )


def iter_crops(
    records: Iterable[DatasetRecord],
    seed: int,
    mode: str = "mae",
    n_points: int = DEFAULT_CROP_POINTS,
    overlap_min: float = DEFAULT_OVERLAP_MIN,
    anchor_radius: float = DEFAULT_ANCHOR_RADIUS,
    verify: bool = True,
    max_pair_retries: int = 20,
) -> Iterator:
    """Yield crops (mae mode) or crop pairs (contrastive mode).

    Records whose clouds are smaller than n_points are skipped with a
    warning. Deterministic for a fixed seed and record order.
    """
    if mode not in ("mae", "contrastive"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    for record in records:
        sample = load_sample(record, verify=verify)
        if len(sample) < n_points:
            log.warning(
                "record %d: cloud of %d points is smaller than crop size %d; skipped",
                record.index, len(sample), n_points,
            )
            continue
        positions = sample.positions
        anchor_a = int(rng.integers(len(sample)))
        idx_a = _knn(positions, anchor_a, n_points)
        if mode == "mae":
            yield _take(sample, idx_a)
            continue

        set_a = set(idx_a.tolist())
        delta = positions - positions[anchor_a]
        d2 = np.einsum("ij,ij->i", delta, delta)
        nearby = np.flatnonzero(d2 <= anchor_radius**2)
        emitted = False
        for _ in range(max_pair_retries):
            anchor_b = int(nearby[rng.integers(len(nearby))])
            idx_b = _knn(positions, anchor_b, n_points)
            overlap = len(set_a.intersection(idx_b.tolist())) / n_points
            if overlap >= overlap_min:
                yield _take(sample, idx_a), _take(sample, idx_b)
                emitted = True
                break
        if not emitted:
            log.warning(
                "record %d: no crop pair reached overlap %.2f; skipped",
                record.index, overlap_min,
            )
