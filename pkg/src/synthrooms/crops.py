"""Training-ready crops of generated scenes.

Two extraction protocols: a single k-nearest-neighbor region around a
random anchor (for masked-autoencoder inputs) and two overlapping regions
(for contrastive pairs). Depth frames are cropped as rectangular pixel
windows and lifted to world-frame clouds. Pseudo-color and a standard
geometric augmentation stack complete the pre-training pre-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud
from .raycast import DepthFrame, depth_to_points


class CropError(RuntimeError):
    """A crop could not be produced under the configured constraints."""


@dataclass(frozen=True)
class CropConfig:
    knn_count: int = 20000
    depth_ratio_range: tuple[float, float] = (0.6, 0.8)
    pair_overlap_min: float = 0.1
    pair_anchor_radius: float = 1.0
    color_constant: float = 0.5
    color_dropout_p: float = 0.5
    jitter_sigma: float = 0.05

    def __post_init__(self) -> None:
        lo, hi = self.depth_ratio_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("depth_ratio_range must satisfy 0 < lo <= hi <= 1")
        if not (0.0 <= self.pair_overlap_min <= 1.0):
            raise ValueError("pair_overlap_min must be in [0, 1]")
        if not (0.0 <= self.color_dropout_p <= 1.0):
            raise ValueError("color_dropout_p must be in [0, 1]")
        if self.knn_count < 1:
            raise ValueError("knn_count must be positive")


def _knn_indices(positions: np.ndarray, anchor_index: int, n: int) -> np.ndarray:
    """Indices of the n points nearest to the anchor point, ties broken by
    point index."""
    delta = positions - positions[anchor_index]
    d2 = np.einsum("ij,ij->i", delta, delta)
    order = np.lexsort((np.arange(len(d2)), d2))
    return order[:n]


def crop_knn(
    pc: PointCloud, rng: np.random.Generator, n: int, anchor_index: int | None = None
) -> PointCloud:
    """The n points nearest to a uniformly random anchor point.

    `anchor_index` overrides the random anchor (used by tests and by the
    pair cropper)."""
    if len(pc) < n:
        raise CropError(f"cloud has {len(pc)} points, fewer than {n}")
    anchor = int(rng.integers(len(pc))) if anchor_index is None else anchor_index
    return pc.take(_knn_indices(pc.positions, anchor, n))


def crop_depth_rect(
    frame: DepthFrame,
    rng: np.random.Generator,
    ratio_range: tuple[float, float] = (0.6, 0.8),
    max_retries: int = 100,
) -> PointCloud:
    """Lift a random rectangular window of a depth frame to a world cloud.

    The side ratio is drawn independently per axis from `ratio_range` and
    the window position uniformly; windows containing no valid pixel are
    resampled.
    """
    intr = frame.intrinsics
    for _ in range(max_retries):
        rw = float(rng.uniform(*ratio_range))
        rh = float(rng.uniform(*ratio_range))
        w = max(1, int(round(rw * intr.width)))
        h = max(1, int(round(rh * intr.height)))
        u0 = int(rng.integers(0, intr.width - w + 1))
        v0 = int(rng.integers(0, intr.height - h + 1))
        cloud = depth_to_points(frame, window=(u0, v0, w, h))
        if len(cloud) > 0:
            return cloud
    raise CropError(f"no valid pixels in any window after {max_retries} attempts")


def crop_pair_contrastive(
    pc: PointCloud,
    rng: np.random.Generator,
    cfg: CropConfig | None = None,
    max_retries: int = 20,
) -> tuple[PointCloud, PointCloud]:
    """Two overlapping k-NN crops forming a positive pair.

    The second anchor is drawn among points within `pair_anchor_radius` of
    the first; the pair is accepted when the shared-point fraction of a
    crop reaches `pair_overlap_min`.
    """
    if cfg is None:
        cfg = CropConfig()
    n = cfg.knn_count
    if len(pc) < n:
        raise CropError(f"cloud has {len(pc)} points, fewer than {n}")
    positions = pc.positions
    anchor_a = int(rng.integers(len(pc)))
    idx_a = _knn_indices(positions, anchor_a, n)
    set_a = set(idx_a.tolist())

    delta = positions - positions[anchor_a]
    d2 = np.einsum("ij,ij->i", delta, delta)
    nearby = np.flatnonzero(d2 <= cfg.pair_anchor_radius**2)
    for _ in range(max_retries):
        anchor_b = int(nearby[rng.integers(len(nearby))])
        idx_b = _knn_indices(positions, anchor_b, n)
        shared = len(set_a.intersection(idx_b.tolist()))
        if shared / n >= cfg.pair_overlap_min:
            return pc.take(idx_a), pc.take(idx_b)
    raise CropError(f"pair overlap below {cfg.pair_overlap_min} after {max_retries} attempts")


def pseudo_color(
    pc: PointCloud, rng: np.random.Generator, cfg: CropConfig | None = None
) -> PointCloud:
    """Constant color channels plus jitter and whole-crop dropout.

    All channels start at `color_constant`, per-point Gaussian jitter with
    sigma `jitter_sigma` is added and clipped to [0, 1]; then, with
    probability `color_dropout_p`, every color in the crop is set to 0.
    """
    if cfg is None:
        cfg = CropConfig()
    n = len(pc)
    colors = np.full((n, 3), cfg.color_constant, dtype=np.float64)
    if cfg.jitter_sigma > 0.0:
        colors += rng.normal(0.0, cfg.jitter_sigma, size=(n, 3))
        colors = np.clip(colors, 0.0, 1.0)
    else:
        colors = np.clip(colors, 0.0, 1.0)
    if rng.random() < cfg.color_dropout_p:
        colors[:] = 0.0
    return PointCloud(pc.positions.copy(), colors,
                      None if pc.object_ids is None else pc.object_ids.copy())


def standard_augment(
    pc: PointCloud,
    rng: np.random.Generator,
    translation: float = 0.5,
    z_rotation: bool = True,
    scale_range: tuple[float, float] = (0.9, 1.1),
    jitter_sigma: float = 0.01,
    jitter_clip: float = 0.05,
    flip_p: float = 0.5,
) -> PointCloud:
    """Standard crop augmentation: random translation, rotation about the
    Z axis, uniform scaling, clipped per-point jitter, and left-right flip,
    each applied independently in that order."""
    pts = pc.positions.copy()
    if translation > 0.0:
        pts = pts + rng.uniform(-translation, translation, size=3)
    if z_rotation:
        angle = rng.uniform(0.0, 2.0 * math.pi)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        pts = pts @ rot.T
    lo, hi = scale_range
    if lo != 1.0 or hi != 1.0:
        pts = pts * rng.uniform(lo, hi)
    if jitter_sigma > 0.0:
        noise = rng.normal(0.0, jitter_sigma, size=pts.shape)
        pts = pts + np.clip(noise, -jitter_clip, jitter_clip)
    if flip_p > 0.0 and rng.random() < flip_p:
        pts = pts * np.array([-1.0, 1.0, 1.0])
    return PointCloud(pts,
                      None if pc.colors is None else pc.colors.copy(),
                      None if pc.object_ids is None else pc.object_ids.copy())
