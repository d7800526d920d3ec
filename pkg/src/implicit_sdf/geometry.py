"""Point clouds, bounding boxes, nearest-neighbor queries and set metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import kernels

# above this many points neighbor candidates come from a kd-tree
KDTREE_MIN_POINTS = 1000
NORMAL_TOL = 1e-6


class PointCloudParseError(ValueError):
    """Raised for malformed point-cloud text; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class PointCloud:
    """Sample points in R^d (d = 2 or 3) with optional unit normals."""

    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] not in (2, 3):
            raise ValueError(f"points must be an (n, 2|3) array with n >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ValueError(f"normals shape {nrm.shape} does not match points {pts.shape}")
            lengths = np.linalg.norm(nrm, axis=1)
            if not np.all(np.abs(lengths - 1.0) <= NORMAL_TOL):
                raise ValueError("normals must have unit length")
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min, dtype=np.float64)
        hi = np.array(self.max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("min and max must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box min must not exceed max")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def dim(self) -> int:
        return self.min.shape[0]

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.min) & (pts <= self.max), axis=1)

    @classmethod
    def cube(cls, half: float, dim: int) -> "Aabb":
        return cls(np.full(dim, -half), np.full(dim, half))


@dataclass(frozen=True)
class MetricReport:
    chamfer: float
    hausdorff: float
    chamfer_one_sided_ab: float
    chamfer_one_sided_ba: float
    hausdorff_one_sided_ab: float
    hausdorff_one_sided_ba: float


def _as_points(a) -> np.ndarray:
    if isinstance(a, PointCloud):
        return a.points
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def nearest_distances(a, b) -> np.ndarray:
    """Distance from every point of ``a`` to its nearest point of ``b``."""
    a = _as_points(a)
    b = _as_points(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if b.shape[0] > KDTREE_MIN_POINTS:
        return np.sqrt(_tree_min_sq(a, b))
    return np.sqrt(kernels.min_sq_dist(a, b))


def _exact_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # same accumulation order as the kernels, so tree and scan agree bit-for-bit
    diff = a[..., 0] - b[..., 0]
    acc = diff * diff
    for k in range(1, a.shape[-1]):
        diff = a[..., k] - b[..., k]
        acc = acc + diff * diff
    return acc


def _tree_min_sq(a: np.ndarray, b: np.ndarray, candidates: int = 4) -> np.ndarray:
    # a few candidates absorb rounding differences between the tree and exact distances
    kq = min(candidates, b.shape[0])
    _, idx = cKDTree(b).query(a, k=kq)
    idx = idx.reshape(a.shape[0], kq)
    return _exact_sq(a[:, None, :], b[idx]).min(axis=1)


def kth_nn_distance(cloud, k: Optional[int] = None) -> np.ndarray:
    """Distance from each point to its k-th closest other point.

    ``k`` defaults to ``min(50, n - 1)``.
    """
    pts = _as_points(cloud)
    n = pts.shape[0]
    if k is None:
        k = min(50, n - 1)
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k <= n - 1 (n={n}), got {k}")
    if n > KDTREE_MIN_POINTS:
        tree = cKDTree(pts)
        kq = min(n, k + 1 + 4)
        _, idx = tree.query(pts, k=kq)
        sq = _exact_sq(pts[:, None, :], pts[idx])
        sq[idx == np.arange(n)[:, None]] = np.inf
        return np.sqrt(np.partition(sq, k - 1, axis=1)[:, k - 1])
    return np.sqrt(kernels.kth_sq_dist(pts, k))


def set_distances(a, b) -> MetricReport:
    """Chamfer and Hausdorff distances (symmetric and one-sided) between point sets."""
    a = _as_points(a)
    b = _as_points(b)
    dab = nearest_distances(a, b)
    dba = nearest_distances(b, a)
    c_ab, c_ba = float(dab.mean()), float(dba.mean())
    h_ab, h_ba = float(dab.max()), float(dba.max())
    return MetricReport(
        chamfer=0.5 * (c_ab + c_ba),
        hausdorff=max(h_ab, h_ba),
        chamfer_one_sided_ab=c_ab,
        chamfer_one_sided_ba=c_ba,
        hausdorff_one_sided_ab=h_ab,
        hausdorff_one_sided_ba=h_ba,
    )


def bounding_box(cloud, margin_fraction: float = 0.0) -> Aabb:
    """Tight box around the points, each side grown by ``margin_fraction`` of its length.

    Zero-length sides grow by ``margin_fraction`` of the largest side instead.
    """
    if margin_fraction < 0:
        raise ValueError("margin_fraction must be non-negative")
    pts = _as_points(cloud)
    if pts.shape[0] == 0:
        raise ValueError("cannot bound an empty cloud")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    side = hi - lo
    pad = margin_fraction * side
    degenerate = side <= 0
    pad[degenerate] = margin_fraction * side.max()
    return Aabb(lo - pad, hi + pad)


def read_point_cloud(path) -> PointCloud:
    """Parse the whitespace text format: ``x y [z] [nx ny [nz]]`` per line, ``#`` comments."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            try:
                vals = [float(tok) for tok in fields]
            except ValueError:
                raise PointCloudParseError(f"non-numeric value in {line!r}", lineno) from None
            if len(vals) not in (2, 3, 4, 6):
                raise PointCloudParseError(f"expected 2, 3, 4 or 6 columns, got {len(vals)}", lineno)
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise PointCloudParseError(f"column count {len(vals)} differs from first row ({width})", lineno)
            if not all(np.isfinite(vals)):
                raise PointCloudParseError("non-finite value", lineno)
            rows.append(vals)
    if not rows:
        raise PointCloudParseError("no points found", 0)
    data = np.array(rows)
    if width in (2, 3):
        return PointCloud(data)
    d = width // 2
    normals = data[:, d:]
    lengths = np.linalg.norm(normals, axis=1)
    bad = np.nonzero(np.abs(lengths - 1.0) > NORMAL_TOL)[0]
    if bad.size and np.any(lengths[bad] == 0):
        raise PointCloudParseError("zero-length normal", _data_line(path, int(bad[0])))
    # normals in files are often only approximately unit
    return PointCloud(data[:, :d], normals / lengths[:, None])


def _data_line(path, index: int) -> int:
    seen = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                seen += 1
                if seen == index:
                    return lineno
    return 0


def write_point_cloud(path, cloud: PointCloud) -> None:
    data = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, fmt="%.17g")
