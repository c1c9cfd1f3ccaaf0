"""Fractal point-cloud objects from random 3D iterated function systems.

Systems are sampled as 2-8 affine maps with entries uniform on [-1, 1] and
selection weights proportional to |det| of the linear part (floored at 0.01).
The chaos game traces the attractor; collapsed or divergent attractors are
rejected and resampled by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .geometry import DegenerateGeometryError, PointCloud, normalize_unit_sphere

N_MAPS_RANGE = (2, 8)
DET_WEIGHT_FLOOR = 0.01
DEFAULT_N_POINTS = 3000
DEFAULT_BURN_IN = 100
# Calibrated so that rejection sampling stays productive: with uniform
# [-1, 1] maps, most attractors are thin, and a stricter gate starves the
# generator (measured: threshold 0.05 accepts ~1-4% of systems, 0.015 with
# 2-4 maps accepts ~14%).
DEFAULT_MIN_AXIS_VARIANCE = 0.015
DEFAULT_N_MAPS_CHOICES = (2, 4)
DIVERGENCE_NORM = 1.0e6


class DivergentSystemError(RuntimeError):
    """The chaos game produced a non-finite or runaway iterate."""


@dataclass
class IfsSystem:
    linear: np.ndarray  # (k, 3, 3)
    offset: np.ndarray  # (k, 3)
    weights: np.ndarray  # (k,), positive, sums to 1

    def __post_init__(self) -> None:
        self.linear = np.ascontiguousarray(self.linear, dtype=np.float64)
        self.offset = np.ascontiguousarray(self.offset, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        k = self.linear.shape[0]
        if self.linear.shape != (k, 3, 3) or self.offset.shape != (k, 3):
            raise ValueError("linear must be (k, 3, 3) and offset (k, 3)")
        if self.weights.shape != (k,):
            raise ValueError("weights must be (k,)")

    @property
    def n_maps(self) -> int:
        return self.linear.shape[0]

    def validate(self) -> None:
        """Check the invariants expected of a sampled system."""
        if not (N_MAPS_RANGE[0] <= self.n_maps <= N_MAPS_RANGE[1]):
            raise ValueError(f"map count {self.n_maps} outside {N_MAPS_RANGE}")
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be positive")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def sample_ifs(rng: np.random.Generator, n_maps: int) -> IfsSystem:
    """Sample a random system with determinant-weighted map probabilities."""
    if not (N_MAPS_RANGE[0] <= n_maps <= N_MAPS_RANGE[1]):
        raise ValueError(f"n_maps must be in {N_MAPS_RANGE}")
    linear = rng.uniform(-1.0, 1.0, size=(n_maps, 3, 3))
    offset = rng.uniform(-1.0, 1.0, size=(n_maps, 3))
    w = np.abs(np.linalg.det(linear))
    w = np.maximum(w, DET_WEIGHT_FLOOR)
    return IfsSystem(linear, offset, w / w.sum())


@njit(cache=True)
def _iterate(linear, offset, picks, burn_in, start, out):
    # Returns -1 on success, else the step index where iteration blew up.
    x, y, z = start[0], start[1], start[2]
    for t in range(picks.shape[0]):
        i = picks[t]
        nx = linear[i, 0, 0] * x + linear[i, 0, 1] * y + linear[i, 0, 2] * z + offset[i, 0]
        ny = linear[i, 1, 0] * x + linear[i, 1, 1] * y + linear[i, 1, 2] * z + offset[i, 1]
        nz = linear[i, 2, 0] * x + linear[i, 2, 1] * y + linear[i, 2, 2] * z + offset[i, 2]
        x, y, z = nx, ny, nz
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            return t
        if x * x + y * y + z * z > DIVERGENCE_NORM * DIVERGENCE_NORM:
            return t
        if t >= burn_in:
            out[t - burn_in, 0] = x
            out[t - burn_in, 1] = y
            out[t - burn_in, 2] = z
    return -1


def chaos_game(
    system: IfsSystem,
    n_points: int,
    burn_in: int = DEFAULT_BURN_IN,
    rng: np.random.Generator | None = None,
    start: Sequence[float] | None = None,
) -> PointCloud:
    """Iterate the system from `start` (default: origin) and keep the
    n_points iterates that follow the burn-in.

    Raises DivergentSystemError when an iterate leaves the 1e6 ball or goes
    non-finite; uniform [-1, 1] maps are not guaranteed contractive, so the
    caller is expected to resample.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if rng is None:
        rng = np.random.default_rng(0)
    total = burn_in + n_points
    cum = np.cumsum(system.weights)
    picks = np.searchsorted(cum, rng.random(total), side="right")
    picks = np.minimum(picks, system.n_maps - 1).astype(np.int64)
    start_arr = np.zeros(3) if start is None else np.asarray(start, dtype=np.float64)
    out = np.empty((n_points, 3), dtype=np.float64)
    bad = _iterate(system.linear, system.offset, picks, burn_in, start_arr, out)
    if bad >= 0:
        raise DivergentSystemError(f"iterate diverged at step {bad}")
    return PointCloud(out)


def accept_system(
    cloud: PointCloud, min_axis_variance: float = DEFAULT_MIN_AXIS_VARIANCE
) -> bool:
    """True when the unit-sphere-normalized cloud is spatially extended on
    every axis; collapsed and near-linear attractors fail."""
    if len(cloud) == 0:
        raise ValueError("cloud must be non-empty")
    try:
        normalized = normalize_unit_sphere(cloud)
    except DegenerateGeometryError:
        return False
    variance = normalized.positions.var(axis=0)
    return bool(np.all(variance > min_axis_variance))


def generate_accepted_system(
    rng: np.random.Generator,
    points_seed: int,
    n_points: int = DEFAULT_N_POINTS,
    burn_in: int = DEFAULT_BURN_IN,
    min_axis_variance: float = DEFAULT_MIN_AXIS_VARIANCE,
    n_maps_choices: tuple[int, int] = DEFAULT_N_MAPS_CHOICES,
    max_attempts: int = 500,
) -> tuple[IfsSystem, PointCloud, int]:
    """Resample systems until one passes the acceptance gate.

    The point stream is keyed by `points_seed` (restarted per attempt) so an
    accepted system's cloud can be regenerated later from the archived system
    plus that seed alone. Returns (system, raw cloud, attempts used).
    """
    for attempt in range(1, max_attempts + 1):
        n_maps = int(rng.integers(n_maps_choices[0], n_maps_choices[1] + 1))
        system = sample_ifs(rng, n_maps)
        try:
            cloud = chaos_game(
                system, n_points, burn_in, np.random.default_rng(points_seed)
            )
        except DivergentSystemError:
            continue
        if accept_system(cloud, min_axis_variance):
            return system, cloud, attempt
    raise RuntimeError(f"no acceptable system after {max_attempts} attempts")


def save_systems(path, systems: Iterable[IfsSystem]) -> None:
    """Archive systems as text: one map per line (9 linear row-major values,
    3 offset values, then the weight); blank line between systems."""
    with open(path, "w", encoding="ascii") as f:
        first = True
        for s in systems:
            if not first:
                f.write("\n")
            first = False
            for i in range(s.n_maps):
                row = list(s.linear[i].reshape(9)) + list(s.offset[i]) + [s.weights[i]]
                f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_systems(path) -> list[IfsSystem]:
    systems: list[IfsSystem] = []
    block: list[list[float]] = []

    def flush() -> None:
        if not block:
            return
        k = len(block)
        linear = np.array([row[:9] for row in block]).reshape(k, 3, 3)
        offset = np.array([row[9:12] for row in block])
        weights = np.array([row[12] for row in block])
        systems.append(IfsSystem(linear, offset, weights))
        block.clear()

    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if line.startswith("#"):
                continue
            if not line:
                flush()
                continue
            fields = line.split()
            if len(fields) != 13:
                raise ValueError(f"{path}:{line_no}: expected 13 numbers, got {len(fields)}")
            block.append([float(v) for v in fields])
    flush()
    return systems
