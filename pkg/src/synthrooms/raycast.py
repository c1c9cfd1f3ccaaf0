"""Depth-map rendering of mesh scenes via batch ray-casting.

A bounding-volume hierarchy (an implicit complete binary tree over
Morton-ordered triangles) accelerates nearest-hit queries; per-pixel
traversal runs in compiled kernels. Depth follows the depth-camera
convention: the camera-frame z coordinate of the nearest intersection,
not the ray length. Pixel (u, v) casts through
((u+0.5-cx)/fx, (v+0.5-cy)/fy, 1) in the camera frame (x right, y down,
z forward).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

# The workqueue layer is fork-safe (scene workers are forked processes) and
# avoids TBB version probing; set before numba spins up its threads.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
from numba import njit, prange
from PIL import Image

from .geometry import PointCloud, SurfaceMesh
from .scenegen import SceneGeometry, SceneRejectedError

DET_EPS = 1e-12  # rays closer to parallel than this miss the triangle
T_MIN = 1e-9  # hits must be strictly in front of the camera

DEFAULT_MIN_VIEW_OBJECTS = 7
MIN_OBJECT_PIXELS = 64
CAMERA_WALL_MARGIN = 0.3
CAMERA_HEIGHT_RANGE = (1.2, 1.8)
CAMERA_PITCH_RANGE = (math.radians(-30.0), math.radians(10.0))
VIEW_RETRIES = 100


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 577.5
    fy: float = 577.5
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass
class DepthFrame:
    depth: np.ndarray  # (H, W) float64 meters, 0 = no hit
    id_map: np.ndarray  # (H, W) int32 object id, -1 = none
    intrinsics: CameraIntrinsics
    pose: np.ndarray  # (4, 4) world-from-camera rigid transform


def _part1by2(x: np.ndarray) -> np.ndarray:
    x = x & np.uint64(0x3FF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x030000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x0300F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x030C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x09249249)
    return x


def _morton_codes(centroids: np.ndarray) -> np.ndarray:
    lo = centroids.min(axis=0)
    hi = centroids.max(axis=0)
    extent = np.maximum(hi - lo, 1e-12)
    q = np.clip((centroids - lo) / extent * 1024.0, 0.0, 1023.0).astype(np.uint64)
    return (
        (_part1by2(q[:, 2]) << np.uint64(2))
        | (_part1by2(q[:, 1]) << np.uint64(1))
        | _part1by2(q[:, 0])
    )


class TriangleIndex:
    """Spatial index over the triangles of one or more tagged meshes.

    A BVH (implicit complete binary tree over Morton-ordered triangles)
    covers the bulk of the geometry. A handful of oversized triangles
    (floor and wall quads span the whole room) would inflate every ancestor
    box and defeat pruning, so triangles wider than a fraction of the scene
    are kept in a separate list and tested linearly per ray.
    """

    def __init__(self, meshes: Sequence[SurfaceMesh], leaf_size: int = 4,
                 big_fraction: float = 0.2):
        v0s, v1s, v2s, objs, origs = [], [], [], [], []
        base = 0
        for mesh in meshes:
            a, b, c = mesh.corners()
            v0s.append(a)
            v1s.append(b)
            v2s.append(c)
            objs.append(np.full(mesh.n_triangles, mesh.object_id, dtype=np.int32))
            origs.append(base + np.arange(mesh.n_triangles, dtype=np.int64))
            base += mesh.n_triangles
        if base == 0:
            raise ValueError("need at least one triangle")
        v0 = np.concatenate(v0s)
        v1 = np.concatenate(v1s)
        v2 = np.concatenate(v2s)
        obj = np.concatenate(objs)
        orig = np.concatenate(origs)

        tri_lo = np.minimum(np.minimum(v0, v1), v2)
        tri_hi = np.maximum(np.maximum(v0, v1), v2)
        scene_extent = float((tri_hi.max(axis=0) - tri_lo.min(axis=0)).max())
        extents = (tri_hi - tri_lo).max(axis=1)
        big = extents > big_fraction * max(scene_extent, 1e-12)
        if bool(np.all(big)):  # tiny scenes: keep the tree non-empty
            big = np.zeros(base, dtype=bool)
        small = ~big

        self.big_v0 = np.ascontiguousarray(v0[big])
        self.big_v1 = np.ascontiguousarray(v1[big])
        self.big_v2 = np.ascontiguousarray(v2[big])
        self.big_object = np.ascontiguousarray(obj[big])
        self.big_orig = np.ascontiguousarray(orig[big])

        v0, v1, v2, obj, orig = v0[small], v1[small], v2[small], obj[small], orig[small]
        order = np.argsort(_morton_codes((v0 + v1 + v2) / 3.0), kind="stable")
        self.v0 = np.ascontiguousarray(v0[order])
        self.v1 = np.ascontiguousarray(v1[order])
        self.v2 = np.ascontiguousarray(v2[order])
        self.tri_object = np.ascontiguousarray(obj[order])
        self.tri_orig = np.ascontiguousarray(orig[order])

        n = self.v0.shape[0]
        self.leaf_size = int(leaf_size)
        n_leaves = max(1, (n + leaf_size - 1) // leaf_size)
        p = 1 << max(0, (n_leaves - 1).bit_length())
        self.first_leaf = p - 1
        self.n_tris = n

        tri_lo = np.minimum(np.minimum(self.v0, self.v1), self.v2)
        tri_hi = np.maximum(np.maximum(self.v0, self.v1), self.v2)
        padded = p * leaf_size
        pad_lo = np.full((padded, 3), np.inf)
        pad_hi = np.full((padded, 3), -np.inf)
        pad_lo[:n] = tri_lo
        pad_hi[:n] = tri_hi

        node_lo = np.full((2 * p - 1, 3), np.inf)
        node_hi = np.full((2 * p - 1, 3), -np.inf)
        node_lo[p - 1 :] = pad_lo.reshape(p, leaf_size, 3).min(axis=1)
        node_hi[p - 1 :] = pad_hi.reshape(p, leaf_size, 3).max(axis=1)
        size = p // 2
        while size >= 1:
            s = size - 1
            e = 2 * size - 1
            node_lo[s:e] = node_lo[2 * s + 1 : 2 * e + 1].reshape(-1, 2, 3).min(axis=1)
            node_hi[s:e] = node_hi[2 * s + 1 : 2 * e + 1].reshape(-1, 2, 3).max(axis=1)
            size //= 2
        self.node_lo = np.ascontiguousarray(node_lo)
        self.node_hi = np.ascontiguousarray(node_hi)

    def nearest_hit(self, origin, direction) -> tuple[float, int, int]:
        """Nearest intersection along one ray.

        Returns (t, object_id, triangle_index) where the triangle index
        refers to the concatenated input order; (inf, -1, -1) on a miss.
        """
        o = np.asarray(origin, dtype=np.float64)
        d = np.asarray(direction, dtype=np.float64)
        t, tri, from_big = _ray_query(
            self.node_lo, self.node_hi, self.first_leaf, self.leaf_size,
            self.n_tris, self.v0, self.v1, self.v2,
            self.big_v0, self.big_v1, self.big_v2,
            o[0], o[1], o[2], d[0], d[1], d[2],
        )
        if tri < 0:
            return math.inf, -1, -1
        if from_big:
            return float(t), int(self.big_object[tri]), int(self.big_orig[tri])
        return float(t), int(self.tri_object[tri]), int(self.tri_orig[tri])


def build_accelerator(meshes: Sequence[SurfaceMesh], leaf_size: int = 4) -> TriangleIndex:
    """Build the shared, immutable spatial index for a collection of meshes."""
    return TriangleIndex(meshes, leaf_size)


@njit(cache=True)
def _slab(lo, hi, node, ox, oy, oz, dx, dy, dz, t_best):
    # Robust branchy slab test; returns entry distance or inf when the
    # box cannot contain a hit closer than t_best.
    tmin = 0.0
    tmax = t_best
    for axis in range(3):
        if axis == 0:
            o, d, mn, mx = ox, dx, lo[node, 0], hi[node, 0]
        elif axis == 1:
            o, d, mn, mx = oy, dy, lo[node, 1], hi[node, 1]
        else:
            o, d, mn, mx = oz, dz, lo[node, 2], hi[node, 2]
        if abs(d) < 1e-300:
            if o < mn or o > mx:
                return np.inf
        else:
            inv = 1.0 / d
            t1 = (mn - o) * inv
            t2 = (mx - o) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return np.inf
    return tmin


@njit(cache=True)
def _tri_hit(v0, v1, v2, tri, ox, oy, oz, dx, dy, dz):
    # Moller-Trumbore; returns the ray parameter t or inf on a miss.
    e1x = v1[tri, 0] - v0[tri, 0]
    e1y = v1[tri, 1] - v0[tri, 1]
    e1z = v1[tri, 2] - v0[tri, 2]
    e2x = v2[tri, 0] - v0[tri, 0]
    e2y = v2[tri, 1] - v0[tri, 1]
    e2z = v2[tri, 2] - v0[tri, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < DET_EPS:
        return np.inf
    inv = 1.0 / det
    tx = ox - v0[tri, 0]
    ty = oy - v0[tri, 1]
    tz = oz - v0[tri, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= T_MIN:
        return np.inf
    return t


@njit(cache=True)
def _traverse(node_lo, node_hi, first_leaf, leaf_size, n_tris, v0, v1, v2,
              ox, oy, oz, dx, dy, dz, stack, t_bound):
    # Nearest BVH hit strictly closer than t_bound; -1 when none beats it.
    best_t = t_bound
    best_tri = -1
    if n_tris == 0:
        return best_t, best_tri
    if _slab(node_lo, node_hi, 0, ox, oy, oz, dx, dy, dz, best_t) == np.inf:
        return best_t, best_tri
    top = 0
    stack[0] = 0
    while top >= 0:
        node = stack[top]
        top -= 1
        if node >= first_leaf:
            leaf = node - first_leaf
            start = leaf * leaf_size
            stop = min(start + leaf_size, n_tris)
            for tri in range(start, stop):
                t = _tri_hit(v0, v1, v2, tri, ox, oy, oz, dx, dy, dz)
                if t < best_t:
                    best_t = t
                    best_tri = tri
        else:
            left = 2 * node + 1
            right = left + 1
            tl = _slab(node_lo, node_hi, left, ox, oy, oz, dx, dy, dz, best_t)
            tr = _slab(node_lo, node_hi, right, ox, oy, oz, dx, dy, dz, best_t)
            # Push the farther child first so the nearer one is visited next.
            if tl <= tr:
                if tr != np.inf:
                    top += 1
                    stack[top] = right
                if tl != np.inf:
                    top += 1
                    stack[top] = left
            else:
                if tl != np.inf:
                    top += 1
                    stack[top] = left
                top += 1
                stack[top] = right
    return best_t, best_tri


@njit(cache=True)
def _hit_big(big_v0, big_v1, big_v2, ox, oy, oz, dx, dy, dz):
    best_t = np.inf
    best_tri = -1
    for tri in range(big_v0.shape[0]):
        t = _tri_hit(big_v0, big_v1, big_v2, tri, ox, oy, oz, dx, dy, dz)
        if t < best_t:
            best_t = t
            best_tri = tri
    return best_t, best_tri


@njit(cache=True)
def _ray_query(node_lo, node_hi, first_leaf, leaf_size, n_tris, v0, v1, v2,
               big_v0, big_v1, big_v2, ox, oy, oz, dx, dy, dz):
    stack = np.empty(128, dtype=np.int64)
    big_t, big_tri = _hit_big(big_v0, big_v1, big_v2, ox, oy, oz, dx, dy, dz)
    t, tri = _traverse(node_lo, node_hi, first_leaf, leaf_size, n_tris,
                       v0, v1, v2, ox, oy, oz, dx, dy, dz, stack, big_t)
    if tri >= 0:
        return t, tri, False
    if big_tri >= 0:
        return big_t, big_tri, True
    return np.inf, -1, False


@njit(cache=True, parallel=True)
def _render(node_lo, node_hi, first_leaf, leaf_size, n_tris, v0, v1, v2,
            tri_object, big_v0, big_v1, big_v2, big_object,
            rot, cam, fx, fy, cx, cy, depth, ids):
    # Rows are independent and write disjoint output, so the parallel loop
    # is deterministic.
    height, width = depth.shape
    for vpix in prange(height):
        stack = np.empty(128, dtype=np.int64)
        for upix in range(width):
            dcx = (upix + 0.5 - cx) / fx
            dcy = (vpix + 0.5 - cy) / fy
            dx = rot[0, 0] * dcx + rot[0, 1] * dcy + rot[0, 2]
            dy = rot[1, 0] * dcx + rot[1, 1] * dcy + rot[1, 2]
            dz = rot[2, 0] * dcx + rot[2, 1] * dcy + rot[2, 2]
            big_t, big_tri = _hit_big(
                big_v0, big_v1, big_v2, cam[0], cam[1], cam[2], dx, dy, dz
            )
            t, tri = _traverse(
                node_lo, node_hi, first_leaf, leaf_size, n_tris, v0, v1, v2,
                cam[0], cam[1], cam[2], dx, dy, dz, stack, big_t,
            )
            if tri >= 0:
                depth[vpix, upix] = t
                ids[vpix, upix] = tri_object[tri]
            elif big_tri >= 0:
                depth[vpix, upix] = big_t
                ids[vpix, upix] = big_object[big_tri]
            else:
                depth[vpix, upix] = 0.0
                ids[vpix, upix] = -1


def render_depth(
    index: TriangleIndex, intrinsics: CameraIntrinsics, pose: np.ndarray
) -> DepthFrame:
    """Render one depth frame from a world-from-camera pose.

    With the camera-frame direction scaled to unit z, the ray parameter of
    the nearest hit equals the camera-frame z coordinate, so the kernel's
    t values are already metric depth.
    """
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (4, 4):
        raise ValueError("pose must be a 4x4 matrix")
    depth = np.empty((intrinsics.height, intrinsics.width), dtype=np.float64)
    ids = np.empty((intrinsics.height, intrinsics.width), dtype=np.int32)
    _render(
        index.node_lo, index.node_hi, index.first_leaf, index.leaf_size,
        index.n_tris, index.v0, index.v1, index.v2, index.tri_object,
        index.big_v0, index.big_v1, index.big_v2, index.big_object,
        np.ascontiguousarray(pose[:3, :3]), np.ascontiguousarray(pose[:3, 3]),
        intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
        depth, ids,
    )
    return DepthFrame(depth, ids, intrinsics, pose)


def make_pose(position, yaw: float, pitch: float) -> np.ndarray:
    """World-from-camera pose for a camera at `position` with the given yaw
    (about world z) and pitch (positive looks up). Camera axes: x right,
    y down, z forward; world z is up."""
    cy_, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cp * cy_, cp * sy, sp])
    right = np.array([sy, -cy_, 0.0])
    down = np.array([sp * cy_, sp * sy, -cp])
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = forward
    pose[:3, 3] = np.asarray(position, dtype=np.float64)
    return pose


def qualifying_ids(frame: DepthFrame, min_pixels: int = MIN_OBJECT_PIXELS) -> list[int]:
    """Distinct non-floor/wall object ids covering at least min_pixels."""
    ids = frame.id_map[frame.id_map >= 0]
    if ids.size == 0:
        return []
    counts = np.bincount(ids)
    return [int(i) for i in np.flatnonzero(counts >= min_pixels)]


def sample_valid_view(
    scene: SceneGeometry,
    rng: np.random.Generator,
    min_objects: int = DEFAULT_MIN_VIEW_OBJECTS,
    intrinsics: CameraIntrinsics | None = None,
    accel: TriangleIndex | None = None,
    max_retries: int = VIEW_RETRIES,
    wall_margin: float = CAMERA_WALL_MARGIN,
    height_range: tuple[float, float] = CAMERA_HEIGHT_RANGE,
    pitch_range: tuple[float, float] = CAMERA_PITCH_RANGE,
    min_pixels: int = MIN_OBJECT_PIXELS,
) -> tuple[DepthFrame, np.ndarray]:
    """Sample camera poses inside the room until a rendered frame shows at
    least `min_objects` distinct objects, each covering `min_pixels` pixels.

    Raises SceneRejectedError when no pose qualifies within `max_retries`;
    the caller is expected to regenerate the scene.
    """
    if len(scene.objects) < min_objects:
        raise ValueError(
            f"scene has {len(scene.objects)} objects, fewer than {min_objects}"
        )
    if intrinsics is None:
        intrinsics = CameraIntrinsics()
    if accel is None:
        accel = build_accelerator(scene.meshes())
    w, l = scene.spec.room_width, scene.spec.room_length
    # Degenerate-safe sampling bounds for tiny rooms.
    x_lo, x_hi = min(wall_margin, w / 2), max(w - wall_margin, w / 2)
    y_lo, y_hi = min(wall_margin, l / 2), max(l - wall_margin, l / 2)
    for _ in range(max_retries):
        position = (
            float(rng.uniform(x_lo, x_hi)),
            float(rng.uniform(y_lo, y_hi)),
            float(rng.uniform(*height_range)),
        )
        yaw = float(rng.uniform(0.0, 2.0 * math.pi))
        pitch = float(rng.uniform(*pitch_range))
        pose = make_pose(position, yaw, pitch)
        frame = render_depth(accel, intrinsics, pose)
        if len(qualifying_ids(frame, min_pixels)) >= min_objects:
            return frame, pose
    raise SceneRejectedError(f"no valid camera pose after {max_retries} attempts")


def depth_to_points(
    frame: DepthFrame, window: tuple[int, int, int, int] | None = None
) -> PointCloud:
    """Lift valid pixels to a world-frame point cloud (with object ids).

    `window` restricts the lift to (u0, v0, width, height) in pixels.
    """
    intr = frame.intrinsics
    depth = frame.depth
    if window is not None:
        u0, v0, w, h = window
        mask = np.zeros_like(depth, dtype=bool)
        mask[v0 : v0 + h, u0 : u0 + w] = True
        mask &= depth > 0.0
    else:
        mask = depth > 0.0
    vs, us = np.nonzero(mask)
    z = depth[vs, us]
    x = (us + 0.5 - intr.cx) / intr.fx * z
    y = (vs + 0.5 - intr.cy) / intr.fy * z
    cam = np.stack([x, y, z], axis=1)
    world = cam @ frame.pose[:3, :3].T + frame.pose[:3, 3]
    ids = frame.id_map[vs, us].astype(np.int32)
    return PointCloud(world, object_ids=ids)


def save_depth_png(path, frame: DepthFrame) -> None:
    """16-bit grayscale PNG in millimeters (0 = no hit)."""
    mm = np.round(frame.depth * 1000.0)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path, format="PNG")  # uint16 -> 16-bit grayscale


def load_depth_png(path) -> np.ndarray:
    """Depth in meters from a 16-bit millimeter PNG."""
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.uint16)
    return arr.astype(np.float64) / 1000.0


def frame_record(frame: DepthFrame, min_pixels: int = MIN_OBJECT_PIXELS) -> dict:
    """Sidecar record: intrinsics (4 numbers), pose (16, row-major), and the
    qualifying object-id list."""
    intr = frame.intrinsics
    return {
        "intrinsics": [intr.fx, intr.fy, intr.cx, intr.cy],
        "width": intr.width,
        "height": intr.height,
        "pose": [float(v) for v in frame.pose.reshape(16)],
        "object_ids": qualifying_ids(frame, min_pixels),
    }


def save_frame_record(path, frame: DepthFrame, min_pixels: int = MIN_OBJECT_PIXELS) -> None:
    with open(path, "w", encoding="ascii") as f:
        json.dump(frame_record(frame, min_pixels), f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
