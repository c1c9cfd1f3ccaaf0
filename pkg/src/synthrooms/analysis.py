"""Object-set diversity statistics.

Pairwise Chamfer distances over object pairs quantify how densely a
randomized object family fills shape space: as the set grows, the minimum
pairwise distance shrinks, which is the practical limit on useful set
sizes. Because the true minimum over all pairs is quadratic in the set
size, the minimum is estimated over candidate pairs preselected by a cheap
shape descriptor ("nearest" mode); plain uniform pair sampling is also
available for the bulk statistics.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud, SurfaceMesh, normalize_unit_sphere, sample_surface

REPORT_POINTS = 1024
RADIAL_BINS = 16


@dataclass
class DiversityReport:
    n_pairs: int
    chamfer_min: float
    chamfer_mean: float
    chamfer_p10: float
    chamfer_p50: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_pairs": self.n_pairs,
                "chamfer_min": self.chamfer_min,
                "chamfer_mean": self.chamfer_mean,
                "chamfer_p10": self.chamfer_p10,
                "chamfer_p50": self.chamfer_p50,
            },
            sort_keys=True,
            indent=2,
        )


def _positions(obj) -> np.ndarray:
    if isinstance(obj, PointCloud):
        return obj.positions
    if isinstance(obj, SurfaceMesh):
        return obj.vertices
    return np.asarray(obj, dtype=np.float64)


def chamfer(a, b) -> float:
    """Symmetric mean nearest-neighbor distance between two clouds:
    0.5 * (mean_a min_b ||a-b|| + mean_b min_a ||b-a||)."""
    pa = _positions(a)
    pb = _positions(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("chamfer distance requires non-empty clouds")
    d_ab, _ = cKDTree(pb).query(pa, k=1)
    d_ba, _ = cKDTree(pa).query(pb, k=1)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def _content_rng(obj) -> np.random.Generator:
    """Random stream keyed by the object's geometry, so identical objects
    always reduce to identical point samples."""
    h = hashlib.sha256()
    if isinstance(obj, SurfaceMesh):
        h.update(obj.vertices.tobytes())
        h.update(obj.triangles.tobytes())
    else:
        h.update(_positions(obj).tobytes())
    return np.random.default_rng(int.from_bytes(h.digest()[:8], "little"))


def object_points(obj, rng: np.random.Generator | None = None,
                  n_points: int = REPORT_POINTS) -> np.ndarray:
    """Normalize an object and reduce it to n_points surface samples.

    Without an explicit rng the stream is derived from the object content.
    """
    normalized = normalize_unit_sphere(obj)
    if rng is None:
        rng = _content_rng(obj)
    if isinstance(normalized, SurfaceMesh):
        return sample_surface(normalized, n_points, rng).positions
    m = len(normalized)
    if m == n_points:
        return normalized.positions
    pick = rng.choice(m, size=n_points, replace=m < n_points)
    return normalized.positions[pick]


def shape_descriptor(points: np.ndarray) -> np.ndarray:
    """Cheap rotation-insensitive summary of a normalized point sample:
    radial-distance quantiles plus sorted covariance eigenvalues. Used only
    to preselect candidate close pairs for the exact Chamfer evaluation."""
    radii = np.linalg.norm(points, axis=1)
    qs = np.quantile(radii, np.linspace(0.0, 1.0, RADIAL_BINS))
    eigs = np.sort(np.linalg.eigvalsh(np.cov(points.T)))
    return np.concatenate([qs, eigs])


def sample_distinct_pairs(
    n_objects: int, n_pairs: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Sample distinct unordered index pairs (i < j) without repetition."""
    max_pairs = n_objects * (n_objects - 1) // 2
    if n_pairs > max_pairs:
        raise ValueError(f"requested {n_pairs} pairs from only {max_pairs} available")
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    while len(pairs) < n_pairs:
        i = int(rng.integers(n_objects))
        j = int(rng.integers(n_objects))
        if i == j:
            continue
        pair = (i, j) if i < j else (j, i)
        if pair in seen:
            continue
        seen.add(pair)
        pairs.append(pair)
    return pairs


def nearest_candidate_pairs(descriptors: np.ndarray, n_pairs: int) -> list[tuple[int, int]]:
    """The n_pairs closest distinct pairs under the descriptor metric.

    Deterministic: neighbor lists come from a KD-tree, ties resolve by
    index order.
    """
    n = descriptors.shape[0]
    max_pairs = n * (n - 1) // 2
    if n_pairs > max_pairs:
        raise ValueError(f"requested {n_pairs} pairs from only {max_pairs} available")
    tree = cKDTree(descriptors)
    k = 2
    while True:
        k = min(k, n)
        dist, idx = tree.query(descriptors, k=k)
        pairs: dict[tuple[int, int], float] = {}
        for i in range(n):
            for col in range(1, k):
                j = int(idx[i, col])
                pair = (i, j) if i < j else (j, i)
                d = float(dist[i, col])
                if pair not in pairs or d < pairs[pair]:
                    pairs[pair] = d
        if len(pairs) >= n_pairs or k >= n:
            ordered = sorted(pairs.items(), key=lambda kv: (kv[1], kv[0]))
            return [p for p, _ in ordered[:n_pairs]]
        k = min(2 * k, n)


def diversity_report(
    objects,
    n_pairs: int,
    rng: np.random.Generator,
    n_points: int = REPORT_POINTS,
    pair_mode: str = "nearest",
) -> DiversityReport:
    """Chamfer statistics over object pairs.

    `objects` is indexable (meshes or point clouds). Each participating
    object is normalized and reduced to n_points content-seeded samples
    once. With pair_mode="nearest" (default) the pairs are the candidate
    closest pairs under the shape descriptor, which makes chamfer_min an
    estimate of the set's true minimum pair distance; "random" draws
    uniform distinct pairs instead.
    """
    n_objects = len(objects)
    if n_objects < 2:
        raise ValueError("diversity report needs at least 2 objects")

    cache: dict[int, np.ndarray] = {}

    def points(i: int) -> np.ndarray:
        if i not in cache:
            cache[i] = object_points(objects[i], None, n_points)
        return cache[i]

    if pair_mode == "nearest":
        descriptors = np.stack([shape_descriptor(points(i)) for i in range(n_objects)])
        pairs = nearest_candidate_pairs(descriptors, n_pairs)
    elif pair_mode == "random":
        pairs = sample_distinct_pairs(n_objects, n_pairs, rng)
    else:
        raise ValueError(f"unknown pair_mode {pair_mode!r}")

    distances = np.array([chamfer(points(i), points(j)) for i, j in pairs])
    return DiversityReport(
        n_pairs=n_pairs,
        chamfer_min=float(distances.min()),
        chamfer_mean=float(distances.mean()),
        chamfer_p10=float(np.percentile(distances, 10)),
        chamfer_p50=float(np.percentile(distances, 50)),
    )
