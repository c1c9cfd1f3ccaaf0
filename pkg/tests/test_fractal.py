import numpy as np
import pytest
from scipy import stats
from scipy.spatial import ConvexHull

from synthrooms.fractal import (
    DEFAULT_MIN_AXIS_VARIANCE,
    DivergentSystemError,
    IfsSystem,
    accept_system,
    chaos_game,
    generate_accepted_system,
    load_systems,
    sample_ifs,
    save_systems,
)
from synthrooms.geometry import PointCloud, normalize_unit_sphere
from synthrooms.seeds import derive_seed


def tetra_system():
    """Four half-scale maps whose fixed points are the tetrahedron corners:
    x -> 0.5 x + 0.5 v has fixed point v."""
    vertices = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    )
    linear = np.repeat(0.5 * np.eye(3)[None], 4, axis=0)
    offsets = 0.5 * vertices
    return IfsSystem(linear, offsets, np.full(4, 0.25)), vertices


class TestSampleIfs:
    def test_rejects_bad_map_counts(self, rng):
        with pytest.raises(ValueError):
            sample_ifs(rng, 1)
        with pytest.raises(ValueError):
            sample_ifs(rng, 9)

    def test_weights_normalized_and_positive(self, rng):
        for _ in range(50):
            s = sample_ifs(rng, int(rng.integers(2, 9)))
            s.validate()
            assert np.all(s.weights > 0)
            assert s.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_weights_follow_floored_determinants(self, rng):
        for _ in range(20):
            s = sample_ifs(rng, 4)
            w = np.maximum(np.abs(np.linalg.det(s.linear)), 0.01)
            assert np.allclose(s.weights, w / w.sum(), atol=1e-15)

    def test_deterministic(self):
        a = sample_ifs(np.random.default_rng(3), 5)
        b = sample_ifs(np.random.default_rng(3), 5)
        assert np.array_equal(a.linear, b.linear)
        assert np.array_equal(a.offset, b.offset)
        assert np.array_equal(a.weights, b.weights)

    def test_entry_uniformity(self):
        # 1000 systems; matrix entries should be uniform on [-1, 1] (0.01 level).
        rng = np.random.default_rng(77)
        entries = np.concatenate(
            [sample_ifs(rng, 4).linear.ravel() for _ in range(1000)]
        )
        hist, _ = np.histogram(entries, bins=20, range=(-1.0, 1.0))
        assert stats.chisquare(hist).pvalue > 0.01


class TestChaosGame:
    def test_single_map_contraction(self):
        # One-map system (permitted only here): x -> 0.5 x from start p.
        system = IfsSystem(0.5 * np.eye(3)[None], np.zeros((1, 3)), np.ones(1))
        start = np.array([1.0, 1.0, 1.0])
        burn_in = 10
        cloud = chaos_game(system, 20, burn_in, np.random.default_rng(0), start=start)
        bound = 0.5**burn_in * np.linalg.norm(start)
        norms = np.linalg.norm(cloud.positions, axis=1)
        assert np.all(norms <= bound + 1e-15)
        # Iterate k is exactly 0.5^k * p.
        expected = np.array([0.5 ** (burn_in + k + 1) * start for k in range(20)])
        assert np.allclose(cloud.positions, expected, rtol=1e-12)

    def test_tetrahedron_hull_containment(self):
        system, vertices = tetra_system()
        cloud = chaos_game(system, 10000, 100, np.random.default_rng(5))
        hull = ConvexHull(vertices)
        # Inside iff A x + b <= 0 for every facet.
        values = cloud.positions @ hull.equations[:, :3].T + hull.equations[:, 3]
        assert np.all(values <= 1e-9)

    def test_deterministic(self):
        system, _ = tetra_system()
        a = chaos_game(system, 500, 50, np.random.default_rng(4))
        b = chaos_game(system, 500, 50, np.random.default_rng(4))
        assert np.array_equal(a.positions, b.positions)

    def test_deterministic_sampled_system(self):
        # Seed chosen so the sampled system converges.
        for seed in range(40):
            system = sample_ifs(np.random.default_rng(seed), 2)
            try:
                a = chaos_game(system, 500, 50, np.random.default_rng(4))
            except DivergentSystemError:
                continue
            b = chaos_game(system, 500, 50, np.random.default_rng(4))
            assert np.array_equal(a.positions, b.positions)
            return
        raise AssertionError("no convergent sampled system in 40 seeds")

    def test_divergence_detected(self):
        system = IfsSystem(
            2.0 * np.eye(3)[None], np.array([[1.0, 0.0, 0.0]]), np.ones(1)
        )
        with pytest.raises(DivergentSystemError):
            chaos_game(system, 1000, 0, np.random.default_rng(0))


class TestAcceptSystem:
    def test_identical_points_rejected(self):
        cloud = PointCloud(np.ones((100, 3)))
        assert accept_system(cloud) is False

    def test_uniform_cube_accepted(self, rng):
        cloud = PointCloud(rng.random((5000, 3)))
        assert accept_system(cloud) is True

    def test_line_rejected(self, rng):
        pts = np.zeros((1000, 3))
        pts[:, 0] = rng.random(1000)
        assert accept_system(PointCloud(pts)) is False

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accept_system(PointCloud(np.empty((0, 3))))


class TestGeneration:
    def test_accepted_objects_normalized_properties(self):
        master = 13
        for i in range(5):
            rng = np.random.default_rng(derive_seed(master, "object", i))
            system, cloud, _ = generate_accepted_system(
                rng, derive_seed(master, "fractal-points", i), n_points=1000
            )
            normalized = normalize_unit_sphere(cloud)
            norms = np.linalg.norm(normalized.positions, axis=1)
            assert norms.max() == pytest.approx(1.0, abs=1e-12)
            assert np.all(normalized.positions.var(axis=0) > DEFAULT_MIN_AXIS_VARIANCE)

    def test_acceptance_rate_reasonable(self):
        master = 99
        total_attempts = 0
        n = 60
        for i in range(n):
            rng = np.random.default_rng(derive_seed(master, "object", i))
            _, _, attempts = generate_accepted_system(
                rng, derive_seed(master, "fractal-points", i), n_points=800
            )
            total_attempts += attempts
        assert n / total_attempts > 0.10

    def test_cloud_reproducible_from_archive(self, tmp_path):
        rng = np.random.default_rng(derive_seed(1, "object", 0))
        points_seed = derive_seed(1, "fractal-points", 0)
        system, cloud, _ = generate_accepted_system(rng, points_seed, n_points=500)
        path = tmp_path / "systems.txt"
        save_systems(path, [system])
        (loaded,) = load_systems(path)
        replay = chaos_game(loaded, 500, 100, np.random.default_rng(points_seed))
        assert np.array_equal(replay.positions, cloud.positions)

    def test_save_load_multiple(self, tmp_path):
        rng = np.random.default_rng(0)
        systems = [sample_ifs(rng, int(rng.integers(2, 9))) for _ in range(10)]
        path = tmp_path / "systems.txt"
        save_systems(path, systems)
        loaded = load_systems(path)
        assert len(loaded) == 10
        for a, b in zip(systems, loaded):
            assert np.array_equal(a.linear, b.linear)
            assert np.array_equal(a.offset, b.offset)
            assert np.array_equal(a.weights, b.weights)
