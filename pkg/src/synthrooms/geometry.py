"""Core geometry containers: triangle meshes and point clouds.

All positions are float64. Meshes are indexed triangle lists with an
integer object tag; point clouds carry optional per-point colors in
[0, 1] and per-point object ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DegenerateGeometryError(ValueError):
    """Raised when an operation receives geometry with no spatial extent."""


@dataclass
class SurfaceMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) integer indices into vertices
    object_id: int = 0

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be (T, 3)")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-triangle corner positions as three (T, 3) arrays."""
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise DegenerateGeometryError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def copy(self) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices.copy(), self.triangles.copy(), self.object_id)


@dataclass
class PointCloud:
    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray | None = None  # (N, 3) float64 in [0, 1]
    object_ids: np.ndarray | None = None  # (N,) int32

    def __post_init__(self) -> None:
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (N, 3)")
        n = len(self)
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.float64)
            if self.colors.shape != (n, 3):
                raise ValueError("colors must be (N, 3)")
        if self.object_ids is not None:
            self.object_ids = np.ascontiguousarray(self.object_ids, dtype=np.int32)
            if self.object_ids.shape != (n,):
                raise ValueError("object_ids must be (N,)")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            raise DegenerateGeometryError("empty cloud has no bounding box")
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def take(self, indices: np.ndarray) -> "PointCloud":
        """Subset (or re-order) the cloud, keeping whatever attributes exist."""
        return PointCloud(
            self.positions[indices],
            None if self.colors is None else self.colors[indices],
            None if self.object_ids is None else self.object_ids[indices],
        )

    def copy(self) -> "PointCloud":
        return self.take(slice(None))


def concat_clouds(clouds: Sequence[PointCloud]) -> PointCloud:
    """Concatenate clouds; attributes are kept only if every part has them."""
    if not clouds:
        return PointCloud(np.empty((0, 3)))
    positions = np.concatenate([c.positions for c in clouds])
    colors = None
    if all(c.colors is not None for c in clouds):
        colors = np.concatenate([c.colors for c in clouds])
    ids = None
    if all(c.object_ids is not None for c in clouds):
        ids = np.concatenate([c.object_ids for c in clouds])
    return PointCloud(positions, colors, ids)


def _positions_of(obj: SurfaceMesh | PointCloud) -> np.ndarray:
    return obj.vertices if isinstance(obj, SurfaceMesh) else obj.positions


def _with_positions(obj, positions: np.ndarray):
    if isinstance(obj, SurfaceMesh):
        return SurfaceMesh(positions, obj.triangles.copy(), obj.object_id)
    return PointCloud(
        positions,
        None if obj.colors is None else obj.colors.copy(),
        None if obj.object_ids is None else obj.object_ids.copy(),
    )


def normalize_unit_sphere(obj: SurfaceMesh | PointCloud):
    """Center on the AABB midpoint and scale so the max point norm is 1.

    The AABB center (rather than the centroid) keeps the result independent
    of tessellation density. Zero-extent input is rejected.
    """
    pts = _positions_of(obj)
    if pts.shape[0] == 0:
        raise DegenerateGeometryError("cannot normalize empty geometry")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    center = 0.5 * (lo + hi)
    shifted = pts - center
    radius = float(np.linalg.norm(shifted, axis=1).max())
    if radius <= 0.0:
        raise DegenerateGeometryError("geometry has zero extent")
    return _with_positions(obj, shifted / radius)


def sample_surface(mesh: SurfaceMesh, n: int, rng: np.random.Generator) -> PointCloud:
    """Draw n points uniformly over the mesh surface.

    Triangles are chosen with probability proportional to area; the position
    inside a triangle uses the square-root barycentric construction, which is
    uniform over the triangle.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if not total > 0.0:
        raise DegenerateGeometryError("mesh has zero surface area")
    cum = np.cumsum(areas)
    picks = np.searchsorted(cum, rng.random(n) * total, side="right")
    picks = np.minimum(picks, len(areas) - 1)

    a, b, c = mesh.corners()
    a, b, c = a[picks], b[picks], c[picks]
    su = np.sqrt(rng.random(n))[:, None]
    v = rng.random(n)[:, None]
    points = (1.0 - su) * a + su * (1.0 - v) * b + su * v * c
    ids = np.full(n, mesh.object_id, dtype=np.int32)
    return PointCloud(points, object_ids=ids)
