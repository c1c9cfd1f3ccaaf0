import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from synthrooms.harmonics import (
    HarmonicCoefficients,
    eval_radius,
    generate_mesh,
    load_coefficients,
    sample_coefficients,
    save_coefficients,
)

FIG_COEFFS = HarmonicCoefficients(2, 1, 2, 2, 2, 2, 1, 2)


def radius_oracle(c, theta, phi):
    """Independent scalar evaluation: math-module trig, powers by repeated
    multiplication, x**0 == 1."""

    def ipow(x, p):
        r = 1.0
        for _ in range(p):
            r *= x
        return r

    return (
        ipow(math.sin(c.m1 * phi), c.p1)
        + ipow(math.cos(c.m2 * phi), c.p2)
        + ipow(math.sin(c.m3 * theta), c.p3)
        + ipow(math.cos(c.m4 * theta), c.p4)
    )


def edge_incidence(mesh) -> Counter:
    counts = Counter()
    for a, b, c in mesh.triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            counts[(min(u, v), max(u, v))] += 1
    return counts


class TestCoefficients:
    def test_ranges_enforced(self):
        with pytest.raises(ValueError):
            HarmonicCoefficients(6.0, 0, 0, 0, 1, 1, 1, 1)
        with pytest.raises(ValueError):
            HarmonicCoefficients(0, 0, 0, 0, 5, 1, 1, 1)
        with pytest.raises(ValueError):
            HarmonicCoefficients(0, 0, 0, 0, 1.5, 1, 1, 1)

    def test_sampling_within_ranges(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            c = sample_coefficients(rng)
            assert all(-5.0 <= v <= 5.0 for v in c.m)
            assert all(v in (0, 1, 2, 3, 4) for v in c.p)

    def test_sampling_deterministic(self):
        a = sample_coefficients(np.random.default_rng(7))
        b = sample_coefficients(np.random.default_rng(7))
        assert a == b

    def test_sampling_uniformity(self):
        # Chi-square goodness of fit at significance 0.01 on 10000 draws.
        rng = np.random.default_rng(42)
        draws = [sample_coefficients(rng) for _ in range(10000)]
        ms = np.array([d.m for d in draws])
        ps = np.array([d.p for d in draws])
        for col in range(4):
            hist, _ = np.histogram(ms[:, col], bins=10, range=(-5.0, 5.0))
            assert stats.chisquare(hist).pvalue > 0.01
            counts = np.bincount(ps[:, col], minlength=5)
            assert stats.chisquare(counts).pvalue > 0.01

    def test_save_load_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        sets = [sample_coefficients(rng) for _ in range(50)]
        path = tmp_path / "objects.txt"
        save_coefficients(path, sets)
        assert load_coefficients(path) == sets


class TestEvalRadius:
    def test_zero_frequency(self):
        c = HarmonicCoefficients(0, 0, 0, 0, 1, 1, 1, 1)
        for theta, phi in [(0.0, 0.0), (1.0, 2.0), (5.5, 3.0)]:
            assert eval_radius(c, theta, phi) == pytest.approx(2.0, abs=1e-15)

    def test_zero_exponents_force_four(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = rng.uniform(-5, 5, 4)
            c = HarmonicCoefficients(*m, 0, 0, 0, 0)
            theta, phi = rng.uniform(0, 2 * np.pi), rng.uniform(0, np.pi)
            assert eval_radius(c, theta, phi) == 4.0

    def test_reference_value(self):
        # sin(pi/2)^2 + cos(pi/4)^2 + sin(pi)^1 + cos(pi)^2 = 1 + 0.5 + 0 + 1
        value = eval_radius(FIG_COEFFS, math.pi / 2, math.pi / 4)
        assert value == pytest.approx(2.5, abs=1e-12)

    def test_matches_oracle_on_random_tuples(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            c = sample_coefficients(rng)
            theta = float(rng.uniform(0, 2 * np.pi))
            phi = float(rng.uniform(0, np.pi))
            assert eval_radius(c, theta, phi) == pytest.approx(
                radius_oracle(c, theta, phi), abs=1e-12
            )

    def test_periodic_in_theta_for_integer_frequencies(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            c = HarmonicCoefficients(
                float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)),
                int(rng.integers(-5, 6)), int(rng.integers(-5, 6)),
                *(int(v) for v in rng.integers(0, 5, 4)),
            )
            theta = float(rng.uniform(0, 2 * np.pi))
            phi = float(rng.uniform(0, np.pi))
            a = eval_radius(c, theta, phi)
            b = eval_radius(c, theta + 2 * np.pi, phi)
            assert a == pytest.approx(b, abs=1e-9)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(2)
        c = sample_coefficients(rng)
        theta = rng.uniform(0, 2 * np.pi, 64)
        phi = rng.uniform(0, np.pi, 64)
        batch = eval_radius(c, theta, phi)
        singles = np.array([eval_radius(c, t, p) for t, p in zip(theta, phi)])
        assert np.array_equal(batch, singles)


class TestGenerateMesh:
    def test_rejects_low_resolution(self):
        c = HarmonicCoefficients(0, 0, 0, 0, 1, 1, 1, 1)
        with pytest.raises(ValueError):
            generate_mesh(c, 2, 32)
        with pytest.raises(ValueError):
            generate_mesh(c, 16, 2)

    def test_counts(self):
        c = HarmonicCoefficients(1, 1, 1, 1, 1, 1, 1, 1)
        mesh = generate_mesh(c, 16, 32)
        assert mesh.n_vertices == 17 * 32
        assert mesh.n_triangles == 2 * 16 * 32

    def test_constant_radius_sphere(self):
        c = HarmonicCoefficients(3, -2, 1, 4, 0, 0, 0, 0)  # radius 4 everywhere
        mesh = generate_mesh(c, 16, 32)
        norms = np.linalg.norm(mesh.vertices, axis=1)
        assert np.all(np.abs(norms - 4.0) <= 1e-9)

    def test_edge_sharing(self):
        rng = np.random.default_rng(8)
        for _ in range(3):
            c = sample_coefficients(rng)
            mesh = generate_mesh(c, 12, 24)
            n_azimuth = 24
            pole_rows = set(range(n_azimuth)) | set(
                range(mesh.n_vertices - n_azimuth, mesh.n_vertices)
            )
            for (u, v), count in edge_incidence(mesh).items():
                if u in pole_rows and v in pole_rows:
                    assert count == 1  # open ring at each pole
                else:
                    assert count == 2

    def test_all_finite(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            mesh = generate_mesh(sample_coefficients(rng), 16, 32)
            assert np.all(np.isfinite(mesh.vertices))

    def test_subgrid_consistency(self):
        rng = np.random.default_rng(31)
        c = sample_coefficients(rng)
        coarse = generate_mesh(c, 16, 32)
        fine = generate_mesh(c, 32, 64)
        for i in range(17):
            for j in range(32):
                vc = coarse.vertices[i * 32 + j]
                vf = fine.vertices[(2 * i) * 64 + (2 * j)]
                assert np.array_equal(vc, vf)

    def test_deterministic(self):
        c = FIG_COEFFS
        a = generate_mesh(c, 20, 40)
        b = generate_mesh(c, 20, 40)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.triangles, b.triangles)

    def test_grid_matches_eval_radius(self):
        c = FIG_COEFFS
        mesh = generate_mesh(c, 8, 16)
        phi = np.arange(9) * np.pi / 8
        theta = np.arange(16) * 2 * np.pi / 16
        for i in range(9):
            for j in range(16):
                r = eval_radius(c, theta[j], phi[i])
                expected = r * np.array(
                    [
                        np.sin(phi[i]) * np.cos(theta[j]),
                        np.sin(phi[i]) * np.sin(theta[j]),
                        np.cos(phi[i]),
                    ]
                )
                assert np.allclose(mesh.vertices[i * 16 + j], expected, atol=1e-12)
