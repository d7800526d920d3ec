"""Marching-cubes / marching-squares case tables, built once at import.

Corner ``c`` of the unit cell sits at offset ``(c & 1, (c >> 1) & 1, (c >> 2) & 1)``.
A corner is *inside* when its value is below the iso level. The cube table is
derived face by face: on every face the crossing edges are paired the same way
no matter which of the two adjacent cells looks at it (ambiguous faces always
separate the inside corners), so neighbouring cells stitch into a closed
surface. The per-face segments of a case chain into loops which are fanned
into triangles wound counter-clockwise when seen from the outside region.
"""

import numpy as np

CUBE_CORNERS = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)])

# edge -> (corner a, corner b); axis is the single differing bit
CUBE_EDGES = [(a, a | (1 << axis)) for axis in range(3) for a in range(8) if not a & (1 << axis)]
_EDGE_ID = {frozenset(e): i for i, e in enumerate(CUBE_EDGES)}


def _faces():
    faces = []
    for axis in range(3):
        u, v = [ax for ax in range(3) if ax != axis]
        for side in (0, 1):
            base = side << axis
            # cyclic order counter-clockwise seen from outside the cube
            ring = [base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)]
            normal = np.zeros(3)
            normal[axis] = 1.0 if side else -1.0
            if np.dot(np.cross(CUBE_CORNERS[ring[1]] - CUBE_CORNERS[ring[0]],
                               CUBE_CORNERS[ring[3]] - CUBE_CORNERS[ring[0]]), normal) < 0:
                ring = ring[::-1]
            faces.append(ring)
    return faces


CUBE_FACES = _faces()
_FACE_EDGES = [
    {_EDGE_ID[frozenset((ring[i], ring[(i + 1) % 4]))] for i in range(4)} for ring in CUBE_FACES
]


def _face_segments(ring, inside):
    """Directed edge pairs (from, to) on one face.

    Walking the face boundary counter-clockwise from outside the cell, a
    segment runs from the crossing where the boundary enters the inside
    region to the one where it leaves, so each crossing edge is a start on
    one face and an end on the other and the segments chain into loops.
    """
    flags = [inside[c] for c in ring]
    edges = [_EDGE_ID[frozenset((ring[i], ring[(i + 1) % 4]))] for i in range(4)]
    crossings = [i for i in range(4) if flags[i] != flags[(i + 1) % 4]]
    if not crossings:
        return []
    if len(crossings) == 2:
        i, j = crossings
        # crossing i goes inside->outside iff corner i is inside
        if flags[i]:
            return [(edges[j], edges[i])]
        return [(edges[i], edges[j])]
    # ambiguous face: cut off each inside corner separately
    return [(edges[(k - 1) % 4], edges[k]) for k in range(4) if flags[k]]


def _cube_case(case):
    inside = [(case >> c) & 1 == 1 for c in range(8)]
    nxt = {}
    for ring in CUBE_FACES:
        for a, b in _face_segments(ring, inside):
            if a in nxt:
                raise AssertionError(f"case {case}: edge {a} has two successors")
            nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    tris = []
    for loop in loops:
        found = _triangulate(tuple(loop))
        if found is None:
            raise AssertionError(f"case {case}: no face-free triangulation")
        tris.extend(found)
    return tris


def _share_face(a, b):
    return any(a in _FACE_EDGES[f] and b in _FACE_EDGES[f] for f in range(6))


def _triangulate(loop):
    """Triangulate a loop so no interior diagonal lies in a cell face.

    Such a diagonal would also be produced by the neighbouring cell and the
    two sheets would meet along it.
    """
    n = len(loop)
    if n == 3:
        return [loop]
    # cut an ear at vertex i: diagonal (i-1, i+1); try in a fixed order
    for i in range(n):
        a, b, c = loop[i - 1], loop[i], loop[(i + 1) % n]
        if _share_face(a, c):
            continue
        rest = _triangulate(loop[:i] + loop[i + 1:] if i else loop[1:])
        if rest is not None:
            return [(a, b, c)] + rest
    return None


def _build_cube_table():
    cases = [_cube_case(c) for c in range(256)]
    width = max(len(t) for t in cases)
    table = np.full((256, width, 3), -1, dtype=np.int64)
    counts = np.zeros(256, dtype=np.int64)
    for c, tris in enumerate(cases):
        counts[c] = len(tris)
        if tris:
            table[c, :len(tris)] = tris
    return table, counts


CUBE_TRIANGLES, CUBE_TRIANGLE_COUNTS = _build_cube_table()
CUBE_EDGE_ARRAY = np.array(CUBE_EDGES, dtype=np.int64)


# squares: corner c at (c & 1, c >> 1); edges as pairs of corners
SQUARE_CORNERS = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
SQUARE_EDGES = [(0, 1), (2, 3), (0, 2), (1, 3)]
_SQUARE_RING = [0, 1, 3, 2]


def _square_case(case):
    # segments run with the inside region on their left (counter-clockwise loops)
    inside = [(case >> c) & 1 == 1 for c in range(4)]
    edge_id = {frozenset(e): i for i, e in enumerate(SQUARE_EDGES)}
    flags = [inside[c] for c in _SQUARE_RING]
    edges = [edge_id[frozenset((_SQUARE_RING[i], _SQUARE_RING[(i + 1) % 4]))] for i in range(4)]
    crossings = [i for i in range(4) if flags[i] != flags[(i + 1) % 4]]
    if not crossings:
        return []
    if len(crossings) == 2:
        i, j = crossings
        return [(edges[i], edges[j])] if flags[i] else [(edges[j], edges[i])]
    return [(edges[k], edges[(k - 1) % 4]) for k in range(4) if flags[k]]


SQUARE_SEGMENTS = np.full((16, 2, 2), -1, dtype=np.int64)
SQUARE_SEGMENT_COUNTS = np.zeros(16, dtype=np.int64)
for _c in range(16):
    _segs = _square_case(_c)
    SQUARE_SEGMENT_COUNTS[_c] = len(_segs)
    if _segs:
        SQUARE_SEGMENTS[_c, :len(_segs)] = _segs
SQUARE_EDGE_ARRAY = np.array(SQUARE_EDGES, dtype=np.int64)
