import numpy as np
import pytest

from synthrooms.geometry import PointCloud, SurfaceMesh, normalize_unit_sphere
from synthrooms.scenegen import (
    FLOOR_ID,
    WALL_ID,
    Heightmap,
    SceneSpec,
    apply_transform,
    assemble_scene,
    augment_object,
    finalize_multiview,
    replay_scene,
    sample_augment,
    sample_scene_points,
    voxel_downsample,
)


def box_mesh(ex, ey, ez):
    v = np.array(
        [[x, y, z] for x in (0, ex) for y in (0, ey) for z in (0, ez)], dtype=float
    )
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [[a, b, c], [a, c, d]]
    return SurfaceMesh(v, np.array(tris))


def box_set(rng, n, ex_range, ey_range, ez_range):
    out = []
    for _ in range(n):
        out.append(
            normalize_unit_sphere(
                box_mesh(
                    rng.uniform(*ex_range), rng.uniform(*ey_range), rng.uniform(*ez_range)
                )
            )
        )
    return out


def harmonic_set(n, seed=0):
    from synthrooms.harmonics import generate_mesh, sample_coefficients
    from synthrooms.seeds import rng_for

    return [
        normalize_unit_sphere(generate_mesh(sample_coefficients(rng_for(seed, "object", i)), 32, 64))
        for i in range(n)
    ]


class TestAugment:
    def test_scale_distribution(self):
        rng = np.random.default_rng(4)
        scales = np.array([sample_augment(rng, False)[0] for _ in range(50000)])
        assert np.all((scales >= 0.7) & (scales <= 1.5))
        assert scales.mean() == pytest.approx(1.1, abs=0.01)

    def test_flip_is_involution(self, rng):
        cloud = PointCloud(rng.normal(size=(100, 3)))
        once = apply_transform(cloud, 1.0, True, 0.0, False)
        twice = apply_transform(once, 1.0, True, 0.0, False)
        assert np.allclose(twice.positions, cloud.positions, atol=1e-12)

    def test_zy_swap_exact(self, rng):
        pts = rng.normal(size=(50, 3))
        out = apply_transform(PointCloud(pts.copy()), 1.0, False, 0.0, True)
        assert np.array_equal(out.positions, pts[:, [0, 2, 1]])

    def test_swap_only_for_harmonics(self):
        rng = np.random.default_rng(0)
        assert not any(sample_augment(rng, False)[3] for _ in range(100))
        rng = np.random.default_rng(0)
        assert any(sample_augment(rng, True)[3] for _ in range(100))

    def test_augment_object_deterministic(self, rng):
        mesh = normalize_unit_sphere(box_mesh(1.0, 0.5, 0.25))
        a = augment_object(mesh, np.random.default_rng(5), True)
        b = augment_object(mesh, np.random.default_rng(5), True)
        assert np.array_equal(a.vertices, b.vertices)


class TestHeightmap:
    def test_support_and_update(self):
        hm = Heightmap(2.0, 2.0, cell=0.05)
        assert hm.support(0.0, 1.0, 0.0, 1.0) == 0.0
        hm.add(0.0, 1.0, 0.0, 1.0, 1.2)
        assert hm.support(0.5, 0.9, 0.5, 0.9) == 1.2
        assert hm.support(1.4, 1.9, 1.4, 1.9) == 0.0
        # Stacking another 1.2 m object here would reach 2.4 m, over the cap.
        assert hm.support(0.2, 0.8, 0.2, 0.8) + 1.2 > 2.0

    def test_max_semantics(self):
        hm = Heightmap(1.0, 1.0, cell=0.05)
        hm.add(0.0, 1.0, 0.0, 1.0, 1.5)
        hm.add(0.2, 0.4, 0.2, 0.4, 0.5)  # lower object must not lower the map
        assert hm.support(0.0, 1.0, 0.0, 1.0) == 1.5


class TestAssemble:
    def test_object_count_in_range(self):
        objs = harmonic_set(20)
        for seed in range(5):
            geom = assemble_scene(objs, np.random.default_rng(seed), is_harmonic=True)
            assert 12 <= len(geom.spec.placements) <= 16
            assert len(geom.objects) == len(geom.spec.placements)

    def test_small_object_set_rejected(self):
        objs = harmonic_set(15)
        with pytest.raises(ValueError):
            assemble_scene(objs, np.random.default_rng(0))

    def test_sorted_by_projection_area(self):
        objs = harmonic_set(20)
        geom = assemble_scene(objs, np.random.default_rng(3), is_harmonic=True)
        areas = []
        for p in geom.spec.placements:
            g = apply_transform(objs[p.object_ref], p.scale, p.flip, p.z_rotation, p.zy_swap)
            lo, hi = g.aabb()
            areas.append((hi[0] - lo[0]) * (hi[1] - lo[1]))
        assert all(areas[i] >= areas[i + 1] - 1e-12 for i in range(len(areas) - 1))

    def test_objects_inside_room_footprint(self):
        objs = harmonic_set(20)
        for seed in range(5):
            geom = assemble_scene(objs, np.random.default_rng(seed), is_harmonic=True)
            w, l = geom.spec.room_width, geom.spec.room_length
            for obj in geom.objects:
                lo, hi = obj.aabb()
                assert lo[0] >= -1e-9 and hi[0] <= w + 1e-9
                assert lo[1] >= -1e-9 and hi[1] <= l + 1e-9

    def test_support_invariant_and_stack_cap(self):
        # Flat plates stack; every bottom rests on the floor or on the
        # running heightmap, and stacked tops never exceed 2 m.
        rng0 = np.random.default_rng(1)
        objs = box_set(rng0, 20, (0.8, 1.6), (0.8, 1.6), (0.1, 0.3))
        saw_stack = False
        for seed in range(8):
            geom = assemble_scene(objs, np.random.default_rng(seed))
            hm = Heightmap(geom.spec.room_width, geom.spec.room_length)
            for obj in geom.objects:
                lo, hi = obj.aabb()
                support = hm.support(lo[0], hi[0], lo[1], hi[1])
                stacked = lo[2] > 1e-9
                if stacked:
                    saw_stack = True
                    assert abs(lo[2] - support) < 1e-6
                    assert hi[2] <= 2.0 + 1e-9
                else:
                    assert abs(lo[2]) < 1e-6
                hm.add(lo[0], hi[0], lo[1], hi[1], hi[2])
        assert saw_stack

    def test_tall_objects_never_stacked(self):
        # Every object is at least 1.4 m tall after the minimum scale, so any
        # stack would exceed 2 m: the rule must leave all of them on the floor.
        rng0 = np.random.default_rng(2)
        objs = box_set(rng0, 20, (0.3, 0.5), (0.3, 0.5), (1.9, 2.0))
        for seed in range(5):
            geom = assemble_scene(objs, np.random.default_rng(seed))
            for obj in geom.objects:
                lo, _ = obj.aabb()
                assert abs(lo[2]) < 1e-6

    def test_replay_matches_assembly(self):
        objs = harmonic_set(20)
        geom = assemble_scene(objs, np.random.default_rng(9), is_harmonic=True)
        replayed = replay_scene(geom.spec, objs)
        for a, b in zip(geom.objects, replayed.objects):
            assert np.array_equal(a.vertices, b.vertices)
            assert a.object_id == b.object_id

    def test_spec_record_roundtrip(self):
        objs = harmonic_set(20)
        geom = assemble_scene(objs, np.random.default_rng(11), is_harmonic=True)
        rec = geom.spec.to_record()
        back = SceneSpec.from_record(rec)
        assert back.room_width == geom.spec.room_width
        assert len(back.placements) == len(geom.spec.placements)
        p0, q0 = geom.spec.placements[0], back.placements[0]
        assert p0.object_ref == q0.object_ref
        assert np.array_equal(p0.position, q0.position)

    def test_deterministic(self):
        objs = harmonic_set(20)
        a = assemble_scene(objs, np.random.default_rng(21), seed=21, is_harmonic=True)
        b = assemble_scene(objs, np.random.default_rng(21), seed=21, is_harmonic=True)
        assert a.spec.to_record() == b.spec.to_record()


class TestVoxelDownsample:
    def test_empty(self):
        out = voxel_downsample(PointCloud(np.empty((0, 3))))
        assert len(out) == 0

    def test_floor_binning(self):
        pc = PointCloud(np.array([[0.01, 0.01, 0.01], [0.05, 0.01, 0.01]]))
        out = voxel_downsample(pc, 0.04)
        assert len(out) == 2  # voxel x-indices 0 and 1

    def test_duplicates_collapse(self):
        p = np.array([0.123, -0.456, 0.789])
        pc = PointCloud(np.tile(p, (1000, 1)))
        out = voxel_downsample(pc, 0.04)
        assert len(out) == 1
        assert np.allclose(out.positions[0], p, atol=1e-12)

    def test_centroid_and_color_average(self):
        pts = np.array([[0.01, 0.01, 0.01], [0.03, 0.01, 0.01]])
        colors = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        out = voxel_downsample(PointCloud(pts, colors=colors), 0.04)
        assert len(out) == 1
        assert np.allclose(out.positions[0], [0.02, 0.01, 0.01])
        assert np.allclose(out.colors[0], [0.5, 0.0, 0.5])

    def test_majority_id_smallest_tie(self):
        pts = np.zeros((4, 3)) + 0.01
        ids = np.array([3, 1, 1, 3], dtype=np.int32)
        out = voxel_downsample(PointCloud(pts, object_ids=ids), 0.04)
        assert out.object_ids[0] == 1
        ids = np.array([2, 2, 5], dtype=np.int32)
        out = voxel_downsample(PointCloud(pts[:3], object_ids=ids), 0.04)
        assert out.object_ids[0] == 2

    def test_unique_voxels_and_idempotent(self, rng):
        pc = PointCloud(rng.normal(0, 0.5, size=(20000, 3)),
                        object_ids=rng.integers(0, 5, 20000).astype(np.int32))
        once = voxel_downsample(pc, 0.04)
        assert len(once) <= len(pc)
        idx = np.floor(once.positions / 0.04).astype(np.int64)
        assert len(np.unique(idx, axis=0)) == len(once)
        twice = voxel_downsample(once, 0.04)
        assert len(twice) == len(once)
        assert np.array_equal(twice.positions, once.positions)
        assert np.array_equal(twice.object_ids, once.object_ids)

    def test_rejects_bad_voxel(self):
        with pytest.raises(ValueError):
            voxel_downsample(PointCloud(np.zeros((1, 3))), 0.0)


class TestFinalize:
    def test_exact_point_count_and_ids(self):
        objs = harmonic_set(20)
        rng = np.random.default_rng(5)
        geom = assemble_scene(objs, rng, is_harmonic=True)
        cloud = finalize_multiview(geom, rng)
        assert len(cloud) == 40000
        ids = set(np.unique(cloud.object_ids).tolist())
        assert FLOOR_ID in ids and WALL_ID in ids
        assert ids - {FLOOR_ID, WALL_ID} <= set(range(len(geom.objects)))

    def test_revoxelization_does_not_grow(self):
        objs = harmonic_set(20)
        rng = np.random.default_rng(6)
        geom = assemble_scene(objs, rng, is_harmonic=True)
        cloud = finalize_multiview(geom, rng)
        again = voxel_downsample(cloud, 0.04)
        assert len(again) <= len(cloud)

    def test_deterministic(self):
        objs = harmonic_set(20)
        geom = assemble_scene(objs, np.random.default_rng(7), is_harmonic=True)
        a = finalize_multiview(geom, np.random.default_rng(8))
        b = finalize_multiview(geom, np.random.default_rng(8))
        assert np.array_equal(a.positions, b.positions)


class TestDensity:
    """Voxel downsampling equalizes per-object sampling density.

    The cap at ~1 point per occupied voxel can only equalize objects whose
    3000 samples saturate the grid (surface area small enough); rod-like
    objects are in that regime. Bulky high-area objects stay sample-limited,
    so their density still tracks 1/area; for those the audit checks the
    strong reduction relative to the raw sampling spread.
    """

    @staticmethod
    def _densities(objs, seed, is_harmonic):
        pre, post = [], []
        for s in range(10):
            rng = np.random.default_rng(seed + s)
            geom = assemble_scene(objs, rng, is_harmonic=is_harmonic)
            raw = sample_scene_points(geom, rng)
            down = voxel_downsample(raw, 0.04)
            for rank, obj in enumerate(geom.objects):
                area = obj.area()
                pre.append(3000 / area)
                post.append(int(np.sum(down.object_ids == rank)) / area)
        return np.array(pre), np.array(post)

    def test_saturating_objects_within_two_fold(self):
        rng0 = np.random.default_rng(0)
        objs = box_set(rng0, 20, (1.2, 2.0), (0.05, 0.15), (0.05, 0.15))
        pre, post = self._densities(objs, 100, False)
        spread_post = np.percentile(post, 90) / np.percentile(post, 10)
        assert spread_post < 2.0
        spread_pre = np.percentile(pre, 90) / np.percentile(pre, 10)
        assert spread_post < spread_pre

    def test_harmonics_strongly_equalized(self):
        objs = harmonic_set(20)
        pre, post = self._densities(objs, 200, True)
        spread_pre = np.percentile(pre, 90) / np.percentile(pre, 10)
        spread_post = np.percentile(post, 90) / np.percentile(post, 10)
        # Bulky objects stay sample-limited: the 2x bound is not reachable
        # for this family, but the spread must shrink markedly.
        assert spread_post < 0.75 * spread_pre
        assert spread_post < 3.5
