"""Trigonometric radius-field objects on the sphere.

Each object is a closed surface r(theta, phi) built from four sine/cosine
terms with frequency multipliers m1..m4 and integer exponents p1..p4.
Randomizing the eight coefficients yields a diverse family of closed
shapes that mesh naturally on a regular (polar x azimuth) grid.

Conventions: theta is the azimuth in [0, 2*pi), phi the polar angle in
[0, pi]; x**0 == 1 for every x (including 0), so zero exponents contribute
a constant term; negative radii are kept, reflecting the point through
the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Integral
from typing import Iterable

import numpy as np

from .geometry import SurfaceMesh

M_RANGE = (-5.0, 5.0)
P_CHOICES = (0, 1, 2, 3, 4)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class HarmonicCoefficients:
    m1: float
    m2: float
    m3: float
    m4: float
    p1: int
    p2: int
    p3: int
    p4: int

    def __post_init__(self) -> None:
        for name in ("m1", "m2", "m3", "m4"):
            v = getattr(self, name)
            if not (M_RANGE[0] <= float(v) <= M_RANGE[1]):
                raise ValueError(f"{name}={v} outside {M_RANGE}")
        for name in ("p1", "p2", "p3", "p4"):
            v = getattr(self, name)
            if not isinstance(v, Integral) or int(v) not in P_CHOICES:
                raise ValueError(f"{name}={v} not in {P_CHOICES}")

    @property
    def m(self) -> tuple[float, float, float, float]:
        return (self.m1, self.m2, self.m3, self.m4)

    @property
    def p(self) -> tuple[int, int, int, int]:
        return (self.p1, self.p2, self.p3, self.p4)


def sample_coefficients(rng: np.random.Generator) -> HarmonicCoefficients:
    """Draw coefficients uniformly: m_i on [-5, 5], p_i on {0..4}."""
    m = rng.uniform(M_RANGE[0], M_RANGE[1], size=4)
    p = rng.integers(P_CHOICES[0], P_CHOICES[-1] + 1, size=4)
    return HarmonicCoefficients(
        float(m[0]), float(m[1]), float(m[2]), float(m[3]),
        int(p[0]), int(p[1]), int(p[2]), int(p[3]),
    )


def eval_radius(c: HarmonicCoefficients, theta, phi):
    """Signed radius at (theta, phi); broadcasts over array inputs."""
    scalar = np.ndim(theta) == 0 and np.ndim(phi) == 0
    # Evaluate through the 1-d ufunc loops even for scalar input so scalar
    # and vectorized calls agree bit-for-bit.
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    r = (
        np.sin(c.m1 * phi) ** c.p1
        + np.cos(c.m2 * phi) ** c.p2
        + np.sin(c.m3 * theta) ** c.p3
        + np.cos(c.m4 * theta) ** c.p4
    )
    if scalar:
        return float(r[0])
    return r


def generate_mesh(
    c: HarmonicCoefficients,
    n_polar: int = 64,
    n_azimuth: int = 128,
    object_id: int = 0,
) -> SurfaceMesh:
    """Triangulate the surface on a uniform (polar, azimuth) grid.

    Vertices sit at phi_i = i*pi/n_polar (i = 0..n_polar) and
    theta_j = j*2*pi/n_azimuth (j = 0..n_azimuth-1); the azimuth seam is
    welded by index so the mesh is closed in theta. Each grid quad splits
    into two triangles. Pole rows are kept un-welded: the radius varies
    along them, so their vertices are genuinely distinct.
    """
    if n_polar < 3 or n_azimuth < 3:
        raise ValueError("mesh resolution must be at least 3 x 3")

    # Angle arithmetic is arranged so that doubling both resolutions
    # reproduces shared grid vertices bit-for-bit: (2i*pi)/(2n) == (i*pi)/n
    # exactly in IEEE-754.
    phi = np.arange(n_polar + 1, dtype=np.float64) * np.pi / n_polar
    theta = np.arange(n_azimuth, dtype=np.float64) * TWO_PI / n_azimuth

    tt = theta[None, :]  # (1, A)
    pp = phi[:, None]  # (P+1, 1)
    r = (
        np.sin(c.m1 * pp) ** c.p1
        + np.cos(c.m2 * pp) ** c.p2
        + np.sin(c.m3 * tt) ** c.p3
        + np.cos(c.m4 * tt) ** c.p4
    )
    sin_phi = np.sin(pp)
    x = r * sin_phi * np.cos(tt)
    y = r * sin_phi * np.sin(tt)
    z = r * np.cos(pp)
    vertices = np.stack([x, y, z], axis=-1).reshape(-1, 3)

    i = np.arange(n_polar)[:, None]  # (P, 1)
    j = np.arange(n_azimuth)[None, :]  # (1, A)
    jn = (j + 1) % n_azimuth
    v00 = i * n_azimuth + j
    v01 = i * n_azimuth + jn
    v10 = (i + 1) * n_azimuth + j
    v11 = (i + 1) * n_azimuth + jn
    upper = np.stack([v00, v10, v11], axis=-1).reshape(-1, 3)
    lower = np.stack([v00, v11, v01], axis=-1).reshape(-1, 3)
    triangles = np.concatenate([upper, lower])
    return SurfaceMesh(vertices, triangles, object_id)


def save_coefficients(path, sets: Iterable[HarmonicCoefficients]) -> None:
    """Write one object per line: m1 m2 m3 m4 p1 p2 p3 p4 (floats round-trip)."""
    with open(path, "w", encoding="ascii") as f:
        for c in sets:
            ms = " ".join(repr(float(v)) for v in c.m)
            ps = " ".join(str(int(v)) for v in c.p)
            f.write(f"{ms} {ps}\n")


def load_coefficients(path) -> list[HarmonicCoefficients]:
    sets = []
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 8:
                raise ValueError(f"{path}:{line_no}: expected 8 numbers, got {len(fields)}")
            m = [float(v) for v in fields[:4]]
            p = [int(v) for v in fields[4:]]
            sets.append(HarmonicCoefficients(*m, *p))
    return sets
