"""Randomized indoor scene assembly.

Objects (normalized into the unit sphere) are augmented, sorted by their
horizontal footprint, and dropped into a random rectangular room. Placement
uses a heightmap: an object rests on the floor or on top of whatever is
already under its footprint, and a position is resampled while the stacked
top would exceed the height limit. The assembled scene is exported both as
meshes (for ray-casting) and as a fixed-size voxel-downsampled point cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .geometry import (
    PointCloud,
    SurfaceMesh,
    concat_clouds,
    sample_surface,
)

FLOOR_ID = -2
WALL_ID = -3

SCALE_RANGE = (0.7, 1.5)
AREA_FACTOR_RANGE = (3.0, 6.0)
ASPECT_RANGE = (0.5, 2.0)
WALL_HEIGHT_RANGE = (2.5, 3.0)
MIN_OBJECTS = 12
MAX_OBJECTS = 16
MAX_STACK_HEIGHT = 2.0
HEIGHTMAP_CELL = 0.05
POSITION_RETRIES = 50
DEFAULT_VOXEL = 0.04
POINTS_PER_OBJECT = 3000
PLANE_SPACING = 0.03
SCENE_POINTS = 40000


class SceneRejectedError(RuntimeError):
    """Scene cannot be completed under the placement rules; the caller
    should regenerate it with a derived seed."""


@dataclass
class ObjectPlacement:
    object_ref: int  # index into the object set
    scale: float
    flip: bool
    z_rotation: float
    zy_swap: bool
    position: np.ndarray  # (3,) translation applied after augmentation

    def to_record(self) -> dict:
        return {
            "object_ref": int(self.object_ref),
            "scale": float(self.scale),
            "flip": bool(self.flip),
            "z_rotation": float(self.z_rotation),
            "zy_swap": bool(self.zy_swap),
            "position": [float(v) for v in self.position],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ObjectPlacement":
        return cls(
            rec["object_ref"],
            rec["scale"],
            rec["flip"],
            rec["z_rotation"],
            rec["zy_swap"],
            np.asarray(rec["position"], dtype=np.float64),
        )


@dataclass
class SceneSpec:
    room_width: float
    room_length: float
    wall_height: float
    placements: list[ObjectPlacement]
    seed: int

    def to_record(self) -> dict:
        return {
            "room_width": float(self.room_width),
            "room_length": float(self.room_length),
            "wall_height": float(self.wall_height),
            "seed": int(self.seed),
            "placements": [p.to_record() for p in self.placements],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SceneSpec":
        return cls(
            rec["room_width"],
            rec["room_length"],
            rec["wall_height"],
            [ObjectPlacement.from_record(p) for p in rec["placements"]],
            rec["seed"],
        )


@dataclass
class SceneGeometry:
    """A fully placed scene: per-object geometry plus floor and walls."""

    spec: SceneSpec
    objects: list  # placed SurfaceMesh or PointCloud, object_id = placement index
    floor: SurfaceMesh
    walls: list[SurfaceMesh]

    def meshes(self) -> list[SurfaceMesh]:
        """All meshes of the scene (requires mesh-based objects)."""
        for obj in self.objects:
            if not isinstance(obj, SurfaceMesh):
                raise TypeError("scene objects are point clouds; no mesh view available")
        return [*self.objects, self.floor, *self.walls]


def apply_transform(obj, scale: float, flip: bool, z_rotation: float, zy_swap: bool,
                    translation: np.ndarray | None = None):
    """Apply, in order: uniform scale, left-right flip (x -> -x), rotation
    about the Z axis, optional Z<->Y swap, optional translation."""
    pts = (obj.vertices if isinstance(obj, SurfaceMesh) else obj.positions) * scale
    if flip:
        pts = pts * np.array([-1.0, 1.0, 1.0])
    c, s = math.cos(z_rotation), math.sin(z_rotation)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = pts @ rot.T
    if zy_swap:
        pts = pts[:, [0, 2, 1]]
    if translation is not None:
        pts = pts + translation
    if isinstance(obj, SurfaceMesh):
        return SurfaceMesh(pts, obj.triangles.copy(), obj.object_id)
    return PointCloud(
        pts,
        None if obj.colors is None else obj.colors.copy(),
        None if obj.object_ids is None else obj.object_ids.copy(),
    )


def sample_augment(rng: np.random.Generator, is_harmonic: bool) -> tuple[float, bool, float, bool]:
    """Draw augmentation parameters: scale U[0.7, 1.5], flip p=0.5,
    Z-rotation U[0, 2pi); harmonic objects additionally get a Z<->Y swap
    with p=0.5 to break their near-symmetry about the vertical axis."""
    scale = float(rng.uniform(*SCALE_RANGE))
    flip = bool(rng.random() < 0.5)
    z_rotation = float(rng.uniform(0.0, 2.0 * math.pi))
    zy_swap = bool(rng.random() < 0.5) if is_harmonic else False
    return scale, flip, z_rotation, zy_swap


def augment_object(obj, rng: np.random.Generator, is_harmonic: bool):
    """Randomly augment a unit-sphere-normalized object."""
    scale, flip, z_rotation, zy_swap = sample_augment(rng, is_harmonic)
    return apply_transform(obj, scale, flip, z_rotation, zy_swap)


class Heightmap:
    """Running maximum surface height over a 2D grid of the room floor."""

    def __init__(self, width: float, length: float, cell: float = HEIGHTMAP_CELL):
        self.cell = float(cell)
        self.nx = max(1, int(math.ceil(width / cell)))
        self.ny = max(1, int(math.ceil(length / cell)))
        self.height = np.zeros((self.nx, self.ny), dtype=np.float64)

    def _cells(self, x0: float, x1: float, y0: float, y1: float):
        i0 = max(0, int(math.floor(x0 / self.cell)))
        j0 = max(0, int(math.floor(y0 / self.cell)))
        i1 = min(self.nx, max(i0 + 1, int(math.ceil(x1 / self.cell))))
        j1 = min(self.ny, max(j0 + 1, int(math.ceil(y1 / self.cell))))
        return i0, i1, j0, j1

    def support(self, x0: float, x1: float, y0: float, y1: float) -> float:
        i0, i1, j0, j1 = self._cells(x0, x1, y0, y1)
        return float(self.height[i0:i1, j0:j1].max(initial=0.0))

    def add(self, x0: float, x1: float, y0: float, y1: float, top: float) -> None:
        i0, i1, j0, j1 = self._cells(x0, x1, y0, y1)
        region = self.height[i0:i1, j0:j1]
        np.maximum(region, top, out=region)


def _room_meshes(width: float, length: float, wall_height: float):
    def quad(p0, p1, p2, p3, object_id):
        verts = np.array([p0, p1, p2, p3], dtype=np.float64)
        tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
        return SurfaceMesh(verts, tris, object_id)

    w, l, h = width, length, wall_height
    floor = quad((0, 0, 0), (w, 0, 0), (w, l, 0), (0, l, 0), FLOOR_ID)
    walls = [
        quad((0, 0, 0), (w, 0, 0), (w, 0, h), (0, 0, h), WALL_ID),
        quad((0, l, 0), (w, l, 0), (w, l, h), (0, l, h), WALL_ID),
        quad((0, 0, 0), (0, l, 0), (0, l, h), (0, 0, h), WALL_ID),
        quad((w, 0, 0), (w, l, 0), (w, l, h), (w, 0, h), WALL_ID),
    ]
    return floor, walls


def assemble_scene(
    object_set,
    rng: np.random.Generator,
    seed: int = 0,
    is_harmonic: bool | None = None,
    min_objects: int = MIN_OBJECTS,
    max_objects: int = MAX_OBJECTS,
    max_stack_height: float = MAX_STACK_HEIGHT,
    area_factor_range: tuple[float, float] = AREA_FACTOR_RANGE,
    aspect_range: tuple[float, float] = ASPECT_RANGE,
    wall_height_range: tuple[float, float] = WALL_HEIGHT_RANGE,
    heightmap_cell: float = HEIGHTMAP_CELL,
    position_retries: int = POSITION_RETRIES,
) -> SceneGeometry:
    """Assemble one scene from a set of unit-sphere-normalized objects.

    Picks 12-16 objects, augments each, sorts them by decreasing XY-AABB
    footprint, sizes the room from the footprint sum, and places them one by
    one on the heightmap. A position whose stacked top would exceed the
    height limit is resampled; after `position_retries` failures the object
    is dropped at floor level instead (so an intrinsically over-tall object
    still gets placed, just never stacked).
    """
    n_available = len(object_set)
    if n_available < max_objects:
        raise ValueError(f"object set has {n_available} objects; need at least {max_objects}")
    if is_harmonic is None:
        is_harmonic = bool(getattr(object_set, "is_harmonic", False))

    k = int(rng.integers(min_objects, max_objects + 1))
    refs = rng.choice(n_available, size=k, replace=False)

    augmented = []
    params = []
    for ref in refs:
        obj = object_set[int(ref)]
        p = sample_augment(rng, is_harmonic)
        augmented.append(apply_transform(obj, *p))
        params.append(p)

    boxes = [g.aabb() for g in augmented]
    areas = np.array([(hi[0] - lo[0]) * (hi[1] - lo[1]) for lo, hi in boxes])
    order = np.argsort(-areas, kind="stable")

    factor = rng.uniform(*area_factor_range)
    room_area = float(factor * areas.sum())
    aspect = rng.uniform(*aspect_range)
    width = math.sqrt(room_area * aspect)
    length = math.sqrt(room_area / aspect)
    wall_height = float(rng.uniform(*wall_height_range))

    heightmap = Heightmap(width, length, heightmap_cell)
    placements: list[ObjectPlacement] = []
    placed = []
    for rank, oi in enumerate(order):
        lo, hi = boxes[oi]
        ex, ey = hi[0] - lo[0], hi[1] - lo[1]
        if ex > width or ey > length:
            raise SceneRejectedError(
                f"object footprint {ex:.2f}x{ey:.2f} exceeds room {width:.2f}x{length:.2f}"
            )
        placement_z = None
        for _ in range(position_retries + 1):
            px = float(rng.uniform(-lo[0], width - hi[0]))
            py = float(rng.uniform(-lo[1], length - hi[1]))
            support = heightmap.support(px + lo[0], px + hi[0], py + lo[1], py + hi[1])
            top = support + (hi[2] - lo[2])
            if top <= max_stack_height:
                placement_z = support - lo[2]
                break
        if placement_z is None:
            # Forced fallback: one more position, resting on the floor.
            px = float(rng.uniform(-lo[0], width - hi[0]))
            py = float(rng.uniform(-lo[1], length - hi[1]))
            placement_z = -lo[2]
        translation = np.array([px, py, placement_z])
        scale, flip, z_rotation, zy_swap = params[oi]
        placements.append(
            ObjectPlacement(int(refs[oi]), scale, flip, z_rotation, zy_swap, translation)
        )
        geom = augmented[oi]
        pts = geom.vertices if isinstance(geom, SurfaceMesh) else geom.positions
        moved = pts + translation
        if isinstance(geom, SurfaceMesh):
            placed.append(SurfaceMesh(moved, geom.triangles, rank))
        else:
            placed.append(PointCloud(moved))
        heightmap.add(
            px + lo[0], px + hi[0], py + lo[1], py + hi[1], placement_z + hi[2]
        )

    spec = SceneSpec(width, length, wall_height, placements, seed)
    floor, walls = _room_meshes(width, length, wall_height)
    return SceneGeometry(spec, placed, floor, walls)


def replay_scene(spec: SceneSpec, object_set) -> SceneGeometry:
    """Rebuild placed geometry deterministically from a SceneSpec."""
    placed = []
    for rank, p in enumerate(spec.placements):
        obj = object_set[p.object_ref]
        geom = apply_transform(obj, p.scale, p.flip, p.z_rotation, p.zy_swap, p.position)
        if isinstance(geom, SurfaceMesh):
            geom.object_id = rank
        placed.append(geom)
    floor, walls = _room_meshes(spec.room_width, spec.room_length, spec.wall_height)
    return SceneGeometry(spec, placed, floor, walls)


def voxel_downsample(pc: PointCloud, voxel: float = DEFAULT_VOXEL) -> PointCloud:
    """One point per occupied voxel: the centroid of its members.

    Voxel index is floor(position / voxel) per axis. Colors are averaged;
    the object id is decided by majority vote with ties broken by the
    smallest id. Output is ordered by voxel index.
    """
    if voxel <= 0.0:
        raise ValueError("voxel size must be positive")
    n = len(pc)
    if n == 0:
        return PointCloud(np.empty((0, 3)))

    idx3 = np.floor(pc.positions / voxel).astype(np.int64)
    lo = idx3.min(axis=0)
    shifted = idx3 - lo
    dims = shifted.max(axis=0) + 1
    key = (shifted[:, 0] * dims[1] + shifted[:, 1]) * dims[2] + shifted[:, 2]

    order = np.argsort(key, kind="stable")
    sk = key[order]
    starts = np.flatnonzero(np.concatenate(([True], sk[1:] != sk[:-1])))
    counts = np.diff(np.concatenate((starts, [n])))

    sorted_pos = pc.positions[order]
    centroids = np.add.reduceat(sorted_pos, starts, axis=0) / counts[:, None]

    colors = None
    if pc.colors is not None:
        colors = np.add.reduceat(pc.colors[order], starts, axis=0) / counts[:, None]

    ids = None
    if pc.object_ids is not None:
        # Majority id per voxel: count (voxel, id) pairs, then take, per
        # voxel, the id with the largest count (smallest id on ties).
        pair_order = np.lexsort((pc.object_ids, key))
        pk = key[pair_order]
        pid = pc.object_ids[pair_order].astype(np.int64)
        pair_starts = np.flatnonzero(
            np.concatenate(([True], (pk[1:] != pk[:-1]) | (pid[1:] != pid[:-1])))
        )
        pair_counts = np.diff(np.concatenate((pair_starts, [n])))
        pair_voxel = pk[pair_starts]
        pair_id = pid[pair_starts]
        best = np.lexsort((pair_id, -pair_counts, pair_voxel))
        voxel_of_best = pair_voxel[best]
        first = np.flatnonzero(
            np.concatenate(([True], voxel_of_best[1:] != voxel_of_best[:-1]))
        )
        ids = pair_id[best[first]].astype(np.int32)

    return PointCloud(centroids, colors, ids)


def _plane_points(rng: np.random.Generator, extent_u: float, extent_v: float,
                  spacing: float) -> np.ndarray:
    """Jittered grid samples of a rectangle, one point per spacing cell."""
    nu = max(1, int(extent_u / spacing))
    nv = max(1, int(extent_v / spacing))
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    u = (iu.ravel() + rng.random(nu * nv)) * spacing
    v = (iv.ravel() + rng.random(nu * nv)) * spacing
    return np.stack([u, v], axis=1)


def sample_scene_points(
    geometry: SceneGeometry,
    rng: np.random.Generator,
    points_per_object: int = POINTS_PER_OBJECT,
    plane_spacing: float = PLANE_SPACING,
) -> PointCloud:
    """Raw surface samples of a scene: fixed-count samples per object plus
    jittered-grid samples of the floor and walls."""
    clouds = []
    for rank, obj in enumerate(geometry.objects):
        if isinstance(obj, SurfaceMesh):
            clouds.append(sample_surface(obj, points_per_object, rng))
        else:
            ids = np.full(len(obj), rank, dtype=np.int32)
            clouds.append(PointCloud(obj.positions.copy(), object_ids=ids))

    spec = geometry.spec
    w, l, h = spec.room_width, spec.room_length, spec.wall_height

    uv = _plane_points(rng, w, l, plane_spacing)
    floor_pts = np.column_stack([uv[:, 0], uv[:, 1], np.zeros(len(uv))])
    clouds.append(
        PointCloud(floor_pts, object_ids=np.full(len(uv), FLOOR_ID, dtype=np.int32))
    )

    wall_defs = [
        # (u-axis extent, fixed coordinate, axis layout)
        (w, 0.0, "y"),
        (w, l, "y"),
        (l, 0.0, "x"),
        (l, w, "x"),
    ]
    for extent, fixed, axis in wall_defs:
        uv = _plane_points(rng, extent, h, plane_spacing)
        if axis == "y":  # wall parallel to the x axis at y = fixed
            pts = np.column_stack([uv[:, 0], np.full(len(uv), fixed), uv[:, 1]])
        else:  # wall parallel to the y axis at x = fixed
            pts = np.column_stack([np.full(len(uv), fixed), uv[:, 0], uv[:, 1]])
        clouds.append(
            PointCloud(pts, object_ids=np.full(len(uv), WALL_ID, dtype=np.int32))
        )
    return concat_clouds(clouds)


def finalize_multiview(
    geometry: SceneGeometry,
    rng: np.random.Generator,
    points_per_object: int = POINTS_PER_OBJECT,
    plane_spacing: float = PLANE_SPACING,
    voxel: float = DEFAULT_VOXEL,
    n_points: int = SCENE_POINTS,
) -> PointCloud:
    """Produce the exported multi-view cloud: sample, voxel-downsample for
    uniform density, then draw exactly n_points (without replacement when
    enough voxels survive, with replacement otherwise)."""
    raw = sample_scene_points(geometry, rng, points_per_object, plane_spacing)
    down = voxel_downsample(raw, voxel)
    m = len(down)
    if m >= n_points:
        pick = rng.choice(m, size=n_points, replace=False)
    else:
        pick = rng.choice(m, size=n_points, replace=True)
    return down.take(pick)
