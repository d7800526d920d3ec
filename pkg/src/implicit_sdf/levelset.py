"""Grid sampling of a network and iso-contour / iso-surface extraction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _mc_tables as tables
from .geometry import Aabb
from .network import Network, evaluate

DEGENERATE_EDGE_TOL = 1e-12
_EVAL_CHUNK = 1 << 16


@dataclass(frozen=True)
class GridSpec:
    box: Aabb
    resolution: int

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("grid resolution must be at least 2")
        if np.any(self.box.extent <= 0):
            raise ValueError("grid box must have positive extent on every axis")

    @property
    def dim(self) -> int:
        return self.box.dim

    def axes(self) -> list:
        return [np.linspace(lo, hi, self.resolution) for lo, hi in zip(self.box.min, self.box.max)]

    def nodes(self) -> np.ndarray:
        """All lattice nodes, row-major (last axis fastest)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def cell_size(self) -> np.ndarray:
        return self.box.extent / (self.resolution - 1)


@dataclass(frozen=True)
class GridField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        shape = (self.spec.resolution,) * self.spec.dim
        vals = np.asarray(self.values, dtype=np.float64).reshape(shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable) -> "GridField":
        return cls(spec, fn(spec.nodes()))

    def __sub__(self, c: float) -> "GridField":
        return GridField(self.spec, self.values - c)


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ValueError("triangle index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise ValueError("degenerate triangle with a repeated index")

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles).size
        return int(used - len(self.edges()) + len(self.triangles))

    def is_closed(self) -> bool:
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


@dataclass
class Polyline2D:
    """Iso-contour as segments plus the same segments chained into polylines."""

    vertices: np.ndarray
    segments: np.ndarray
    chains: list
    closed: list

    @property
    def segment_points(self) -> np.ndarray:
        """(n, 2, 2) array of segment endpoints."""
        return self.vertices[self.segments]

    def loops(self) -> list:
        return [self.vertices[c] for c, is_closed in zip(self.chains, self.closed) if is_closed]


def evaluate_grid(net: Network, z, spec: GridSpec) -> GridField:
    """Network values at every lattice node (box corners included)."""
    if spec.dim != net.spec.input_dim:
        raise ValueError("grid dimension does not match network input")
    nodes = spec.nodes()
    out = np.empty(nodes.shape[0])
    for start in range(0, nodes.shape[0], _EVAL_CHUNK):
        stop = start + _EVAL_CHUNK
        out[start:stop] = evaluate(net, nodes[start:stop], z)
    return GridField(spec, out)


def _interpolate(spec: GridSpec, values: np.ndarray, keys: np.ndarray, iso: float) -> np.ndarray:
    """Vertex positions on grid edges; ``key = axis * n_nodes + node``."""
    res = spec.resolution
    d = spec.dim
    n_nodes = res ** d
    axis = keys // n_nodes
    node = keys % n_nodes
    idx = np.stack(np.unravel_index(node, (res,) * d), axis=1)
    step = np.eye(d, dtype=np.int64)[axis]
    idx1 = idx + step
    flat = values.ravel()
    v0 = flat[node]
    v1 = flat[np.ravel_multi_index(idx1.T, (res,) * d)]
    flat_deg = (np.abs(v0 - iso) <= DEGENERATE_EDGE_TOL) & (np.abs(v1 - iso) <= DEGENERATE_EDGE_TOL)
    denom = np.where(flat_deg, 1.0, v1 - v0)
    t = np.where(flat_deg, 0.5, (iso - v0) / denom)
    axes = spec.axes()
    p0 = np.stack([axes[k][idx[:, k]] for k in range(d)], axis=1)
    p1 = np.stack([axes[k][idx1[:, k]] for k in range(d)], axis=1)
    return p0 + t[:, None] * (p1 - p0)


def _cell_cases(values: np.ndarray, iso: float, corners: np.ndarray) -> np.ndarray:
    inside = values < iso
    d = values.ndim
    cells = tuple(s - 1 for s in values.shape)
    case = np.zeros(cells, dtype=np.int64)
    for c, off in enumerate(corners):
        sl = tuple(slice(o, o + n) for o, n in zip(off, cells))
        case |= inside[sl].astype(np.int64) << c
    return case


def _edge_keys(cell_idx: np.ndarray, local_edges: np.ndarray, edge_table: np.ndarray,
               corners: np.ndarray, res: int) -> np.ndarray:
    d = corners.shape[1]
    a = edge_table[local_edges, 0]
    b = edge_table[local_edges, 1]
    axis = np.argmax(corners[b] - corners[a], axis=1)
    start = cell_idx + corners[a]
    node = np.ravel_multi_index(start.T, (res,) * d)
    return axis * res ** d + node


def marching_squares(field: GridField, iso: float = 0.0) -> Polyline2D:
    """Iso-contour of a 2-D field by the 16-case table with linear edge interpolation."""
    if field.spec.dim != 2:
        raise ValueError("marching_squares needs a 2-D field")
    res = field.spec.resolution
    case = _cell_cases(field.values, iso, tables.SQUARE_CORNERS).ravel()
    active = np.nonzero(tables.SQUARE_SEGMENT_COUNTS[case])[0]
    if active.size == 0:
        return Polyline2D(np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64), [], [])
    segs = tables.SQUARE_SEGMENTS[case[active]]
    valid = segs[:, :, 0] >= 0
    cell_of = np.repeat(active, 2).reshape(-1, 2)[valid]
    local = segs[valid]
    cell_idx = np.stack(np.unravel_index(cell_of, (res - 1, res - 1)), axis=1)
    keys = np.stack([
        _edge_keys(cell_idx, local[:, i], tables.SQUARE_EDGE_ARRAY, tables.SQUARE_CORNERS, res)
        for i in range(2)
    ], axis=1)
    uniq, inverse = np.unique(keys, return_inverse=True)
    vertices = _interpolate(field.spec, field.values, uniq, iso)
    segments = inverse.reshape(-1, 2)
    chains, closed = _chain(segments, len(uniq))
    return Polyline2D(vertices, segments, chains, closed)


def _chain(segments: np.ndarray, n_vertices: int) -> tuple:
    nxt = np.full(n_vertices, -1, dtype=np.int64)
    has_prev = np.zeros(n_vertices, dtype=bool)
    for a, b in segments:
        nxt[a] = b
        has_prev[b] = True
    visited = np.zeros(n_vertices, dtype=bool)
    chains, closed = [], []
    starts = [v for v in range(n_vertices) if nxt[v] >= 0 and not has_prev[v]]
    starts += [v for v in range(n_vertices) if nxt[v] >= 0 and has_prev[v]]
    for s in starts:
        if visited[s]:
            continue
        chain = [s]
        visited[s] = True
        cur = nxt[s]
        is_closed = False
        while cur >= 0:
            if cur == s:
                is_closed = True
                break
            if visited[cur]:
                break
            chain.append(cur)
            visited[cur] = True
            cur = nxt[cur]
        chains.append(np.array(chain, dtype=np.int64))
        closed.append(is_closed)
    return chains, closed


def marching_cubes(field: GridField, iso: float = 0.0) -> Mesh:
    """Iso-surface of a 3-D field; triangles ordered by cell index."""
    if field.spec.dim != 3:
        raise ValueError("marching_cubes needs a 3-D field")
    res = field.spec.resolution
    case = _cell_cases(field.values, iso, tables.CUBE_CORNERS).ravel()
    counts = tables.CUBE_TRIANGLE_COUNTS[case]
    active = np.nonzero(counts)[0]
    if active.size == 0:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    tris = tables.CUBE_TRIANGLES[case[active]]
    valid = tris[:, :, 0] >= 0
    width = tris.shape[1]
    cell_of = np.repeat(active, width).reshape(-1, width)[valid]
    local = tris[valid]
    cell_idx = np.stack(np.unravel_index(cell_of, (res - 1,) * 3), axis=1)
    keys = np.stack([
        _edge_keys(cell_idx, local[:, i], tables.CUBE_EDGE_ARRAY, tables.CUBE_CORNERS, res)
        for i in range(3)
    ], axis=1)
    uniq, inverse = np.unique(keys, return_inverse=True)
    vertices = _interpolate(field.spec, field.values, uniq, iso)
    return Mesh(vertices, inverse.reshape(-1, 3))


def sdf_relative_error(net: Network, gt: Callable, box: Aabb, n: int = 100_000, seed: int = 0,
                       exclusion_band: float = 0.1, z=None) -> tuple:
    """Mean and std of |f - s| / |s| over uniform samples with |s| > exclusion_band."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    pts = box.min + box.extent * rng.random((n, box.dim))
    s = np.asarray(gt(pts), dtype=np.float64)
    keep = np.abs(s) > exclusion_band
    if keep.sum() < n / 2:
        raise ValueError(
            f"only {int(keep.sum())} of {n} samples lie outside the exclusion band; enlarge the box"
        )
    pts, s = pts[keep], s[keep]
    f = np.concatenate([evaluate(net, pts[i:i + _EVAL_CHUNK], z) for i in range(0, len(pts), _EVAL_CHUNK)])
    rel = np.abs(f - s) / np.abs(s)
    return float(rel.mean()), float(rel.std())


def write_obj(path, mesh: Mesh) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write("v %r %r %r\n" % tuple(float(c) for c in v))
        for t in mesh.triangles:
            fh.write("f %d %d %d\n" % tuple(int(i) + 1 for i in t))


def read_obj(path) -> Mesh:
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))


def write_contour_csv(path, contour: Polyline2D) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x0,y0,x1,y1\n")
        for seg in contour.segment_points:
            fh.write(",".join(repr(float(v)) for v in seg.ravel()) + "\n")


def read_contour_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data.reshape(-1, 2, 2)


def write_contour_svg(path, contour: Polyline2D, box: Aabb, points: Optional[np.ndarray] = None,
                      size: int = 512) -> None:
    """Render contour chains (and optional input points) into an SVG image."""
    lo, ext = box.min, box.extent
    scale = size / float(ext.max())

    def px(p):
        return (p[0] - lo[0]) * scale, (lo[1] + ext[1] - p[1]) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{ext[0] * scale:.1f}" '
        f'height="{ext[1] * scale:.1f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for chain, is_closed in zip(contour.chains, contour.closed):
        coords = " ".join("%.3f,%.3f" % px(contour.vertices[i]) for i in chain)
        tag = "polygon" if is_closed else "polyline"
        parts.append(f'<{tag} points="{coords}" fill="none" stroke="black" stroke-width="1.5"/>')
    if points is not None:
        for p in points:
            x, y = px(p)
            parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="2.5" fill="#888"/>')
    parts.append("</svg>")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def sample_mesh(mesh: Mesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform samples on a triangle mesh."""
    if len(mesh.triangles) == 0:
        raise ValueError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    tri = mesh.vertices[mesh.triangles]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    total = area.sum()
    prob = area / total if total > 0 else np.full(len(area), 1.0 / len(area))
    pick = rng.choice(len(tri), size=n, p=prob)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = tri[pick]
    return (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]


def sample_polyline(contour: Polyline2D, n: int, seed: int = 0) -> np.ndarray:
    """Length-weighted uniform samples on contour segments."""
    seg = contour.segment_points
    if len(seg) == 0:
        raise ValueError("cannot sample an empty contour")
    rng = np.random.default_rng(seed)
    length = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)
    total = length.sum()
    prob = length / total if total > 0 else np.full(len(seg), 1.0 / len(seg))
    pick = rng.choice(len(seg), size=n, p=prob)
    t = rng.random(n)[:, None]
    return seg[pick, 0] + t * (seg[pick, 1] - seg[pick, 0])
