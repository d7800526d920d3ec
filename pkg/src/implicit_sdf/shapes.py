"""Analytic shapes with exact signed distances, used for probes and fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud


@dataclass(frozen=True)
class Sphere:
    """Sphere (circle in 2-D) of ``radius`` around ``center``; negative inside."""

    radius: float = 0.5
    center: tuple = (0.0, 0.0, 0.0)
    # closed surface: inside is negative by convention
    oriented = True

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def sdf(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.linalg.norm(x - np.asarray(self.center), axis=1) - self.radius

    def sample(self, rng: np.random.Generator, n: int) -> tuple:
        """Uniform surface points and their outward normals."""
        d = rng.standard_normal((n, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * d, d


@dataclass(frozen=True)
class Plane:
    """Hyperplane ``n . x = offset`` sampled on the square patch ``|x_i| <= half`` around its foot point."""

    normal: tuple = (0.0, 0.0, 1.0)
    offset: float = 0.0
    half: float = 1.0
    _unit: np.ndarray = field(init=False, repr=False, compare=False)
    # without normals either side may be the positive one
    oriented = False

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        length = np.linalg.norm(n)
        if length == 0:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "_unit", n / length)

    @property
    def dim(self) -> int:
        return len(self.normal)

    def sdf(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self._unit - self.offset

    def _frame(self) -> np.ndarray:
        # orthonormal in-plane basis from a QR of [n | I]
        m = np.column_stack([self._unit, np.eye(self.dim)])
        q, _ = np.linalg.qr(m)
        return q[:, 1:self.dim]

    def sample(self, rng: np.random.Generator, n: int) -> tuple:
        coords = rng.uniform(-self.half, self.half, (n, self.dim - 1))
        pts = self.offset * self._unit + coords @ self._frame().T
        return pts, np.tile(self._unit, (n, 1))


def make_shape(name: str, dim: int = 3, radius: float = 0.5):
    if name == "sphere":
        return Sphere(radius, (0.0,) * dim)
    if name == "plane":
        normal = [0.0] * dim
        normal[-1] = 1.0
        return Plane(tuple(normal))
    raise ValueError(f"unknown shape {name!r}; expected 'plane' or 'sphere'")


def circle_cloud(n: int = 200, radius: float = 0.5, center=(0.0, 0.0)) -> PointCloud:
    """Evenly spaced points and outward normals on a circle."""
    t = 2.0 * np.pi * np.arange(n) / n
    nrm = np.column_stack([np.cos(t), np.sin(t)])
    return PointCloud(np.asarray(center) + radius * nrm, nrm)


def l_shape_cloud(n: int = 240, size: float = 1.0) -> PointCloud:
    """Points and outward normals spread along the boundary of an L polygon by arc length."""
    s = size
    corners = np.array([[0, 0], [s, 0], [s, s / 2], [s / 2, s / 2], [s / 2, s], [0, s]], dtype=np.float64)
    corners -= corners.mean(axis=0)
    edges = np.roll(corners, -1, axis=0) - corners
    lengths = np.linalg.norm(edges, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    # offset by half a step so no sample sits exactly on a corner
    t = (np.arange(n) + 0.5) * cum[-1] / n
    seg = np.searchsorted(cum, t, side="right") - 1
    frac = (t - cum[seg]) / lengths[seg]
    pts = corners[seg] + frac[:, None] * edges[seg]
    tangent = edges[seg] / lengths[seg][:, None]
    # counter-clockwise polygon: outward normal is the tangent rotated clockwise
    nrm = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    return PointCloud(pts, nrm)
