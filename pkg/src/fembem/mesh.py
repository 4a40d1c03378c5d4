"""Triangulations, boundary partitions and newest vertex bisection.

Node ids are persistent: refinement only appends nodes, so the nodes of
level ``l`` of a hierarchy are exactly ``0 .. N_l - 1`` of every finer level.
Every node remembers the two endpoints of the edge it bisected
(``node_parents``; ``-1`` for initial nodes), which is all that is needed to
build prolongations and level increments.

Triangles are stored counter-clockwise and rotated such that the reference
edge is ``(t[0], t[1])``; the opposite vertex ``t[2]`` is the newest vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np


class MeshError(ValueError):
    pass


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VolumeMesh:
    nodes: np.ndarray          # (n, 2)
    triangles: np.ndarray      # (m, 3), ccw, reference edge (t0, t1)
    node_parents: np.ndarray   # (n, 2), -1 for initial nodes

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        parents = np.asarray(self.node_parents, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or not np.all(np.isfinite(nodes)):
            raise MeshError("nodes must be a finite (n, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must be an (m, 3) array")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise MeshError("triangle references unknown node")
        if parents.shape != (len(nodes), 2):
            raise MeshError("node_parents must be (n, 2)")
        for name, arr in (("nodes", nodes), ("triangles", tris), ("node_parents", parents)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.areas <= 0.0):
            raise MeshError("degenerate or clockwise triangle")

    @classmethod
    def from_arrays(cls, nodes, triangles, ref_edge=None) -> "VolumeMesh":
        """Build an initial mesh, orienting triangles ccw.

        ``ref_edge[k]`` selects edge ``(v_k, v_{k+1})`` of triangle k as its
        reference edge.  Without it the longest edge is used, ties broken by
        the lowest id of the opposite vertex.
        """
        nodes = np.asarray(nodes, dtype=float)
        tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        p = nodes[tris]
        cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 1, 1] - p[:, 0, 1]
        ) * (p[:, 2, 0] - p[:, 0, 0])
        if ref_edge is None:
            ref = np.empty(len(tris), dtype=np.int64)
            for k, t in enumerate(tris):
                lens = [np.linalg.norm(nodes[t[(i + 1) % 3]] - nodes[t[i]]) for i in range(3)]
                longest = max(lens)
                cands = [i for i in range(3) if lens[i] >= longest * (1 - 1e-12)]
                # opposite vertex of edge i is t[(i + 2) % 3]
                ref[k] = min(cands, key=lambda i: t[(i + 2) % 3])
        else:
            ref = np.asarray(ref_edge, dtype=np.int64).reshape(-1)
            if ref.shape != (len(tris),) or np.any((ref < 0) | (ref > 2)):
                raise MeshError("ref_edge entries must lie in {0, 1, 2}")
        out = np.empty_like(tris)
        for k, (t, r) in enumerate(zip(tris, ref)):
            a, b, c = t[r], t[(r + 1) % 3], t[(r + 2) % 3]
            if cross[k] < 0:
                a, b = b, a
            out[k] = (a, b, c)
        return cls(nodes, out, -np.ones((len(nodes), 2), dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def ref_edge(self) -> np.ndarray:
        return np.zeros(len(self.triangles), dtype=np.int64)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def diameters(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (sorted node pairs) and the (m, 3) triangle->edge map.

        Local edge i of a triangle joins t[i] and t[(i+1) % 3].
        """
        t = self.triangles
        loc = np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2)
        key = np.sort(loc, axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    def boundary_edges(self) -> np.ndarray:
        """Oriented boundary edges (domain on the left)."""
        t = self.triangles
        loc = np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2)
        key = np.sort(loc, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        return loc[counts[inv.reshape(-1)] == 1]

    def patch_areas(self) -> np.ndarray:
        """Area of the node patch (union of triangles containing the node)."""
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.triangles.reshape(-1), np.repeat(self.areas, 3))
        return out


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Closed polygonal partition of the boundary.

    ``nodes`` is indexed by persistent node id and may contain ids that are
    not on the boundary (the interior nodes of the volume mesh that induced
    it).  ``segments`` are ordered counter-clockwise, so segment i runs from
    ``segments[i, 0]`` to ``segments[i, 1] == segments[i + 1, 0]``.
    """

    nodes: np.ndarray
    segments: np.ndarray
    node_parents: np.ndarray
    outward: bool = True

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        segs = np.asarray(self.segments, dtype=np.int64)
        parents = np.asarray(self.node_parents, dtype=np.int64)
        if segs.ndim != 2 or segs.shape[1] != 2 or len(segs) < 3:
            raise MeshError("need at least three segments")
        if not np.array_equal(segs[:, 1], np.roll(segs[:, 0], -1)):
            raise MeshError("segments do not form a closed loop")
        if len(np.unique(segs[:, 0])) != len(segs):
            raise MeshError("segments do not form a single loop")
        for name, arr in (("nodes", nodes), ("segments", segs), ("node_parents", parents)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.lengths <= 0.0):
            raise MeshError("zero-length segment")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def node_ids(self) -> np.ndarray:
        """Boundary node ids; node i is the start of segment i."""
        return self.segments[:, 0]

    @property
    def lengths(self) -> np.ndarray:
        p = self.nodes[self.segments]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.nodes[self.segments[:, 0]], self.nodes[self.segments[:, 1]]

    @property
    def normals(self) -> np.ndarray:
        a, b = self.endpoints
        t = (b - a) / self.lengths[:, None]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n if self.outward else -n

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    def gamma_ratio(self) -> float:
        """Largest length ratio of adjacent segments."""
        h = self.lengths
        hn = np.roll(h, -1)
        return float(np.max(np.maximum(h / hn, hn / h)))


@dataclass(frozen=True, eq=False)
class LevelIncrement:
    volume: np.ndarray      # node ids, Ñ_l^Ω
    boundary: np.ndarray    # node ids, Ñ_l^Γ
    new_volume: np.ndarray  # N_l^Ω \ N_{l-1}^Ω (hierarchical basis)
    new_boundary: np.ndarray


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    """Nested sequence of meshes.  ``volumes`` may hold ``None`` entries for
    boundary-only hierarchies."""

    volumes: tuple
    boundaries: tuple
    increments: tuple
    boundary_parents: tuple = field(default=())  # per level >= 1: coarse segment of each fine one

    @property
    def n_levels(self) -> int:
        return len(self.boundaries)

    @property
    def finest(self) -> tuple[Optional[VolumeMesh], BoundaryMesh]:
        return self.volumes[-1], self.boundaries[-1]

    @property
    def coupled(self) -> bool:
        return self.volumes[0] is not None


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

LSHAPE_SIDE = 1.0 / (3.0 * np.sqrt(2.0))
LSHAPE_ROTATION = -0.75 * np.pi


def lshape_vertices(side: float = LSHAPE_SIDE, rotation: float = LSHAPE_ROTATION) -> np.ndarray:
    """Hexagon vertices (ccw) of the L-shape with reentrant corner at 0."""
    a = side
    v = np.array([[0, 0], [0, -a], [-a, -a], [-a, a], [a, a], [a, 0]], dtype=float)
    return v @ _rot(rotation).T


def _rot(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def lshape_mesh(side: float = LSHAPE_SIDE, rotation: float = LSHAPE_ROTATION) -> VolumeMesh:
    """12-triangle L-shape: three squares, each split through its centre.

    The default rotation puts the removed quadrant around the negative
    x-axis, so polar angles inside the domain lie in [-3pi/4, 3pi/4] and the
    positive x-axis runs through the interior.  diam = 2*sqrt(2)*side = 2/3.
    """
    a = side
    grid = [(-a, -a), (0, -a), (-a, 0), (0, 0), (a, 0), (-a, a), (0, a), (a, a)]
    centres = [(-a / 2, -a / 2), (-a / 2, a / 2), (a / 2, a / 2)]
    nodes = np.array(grid + centres, dtype=float) @ _rot(rotation).T
    squares = [(0, 1, 3, 2, 8), (2, 3, 6, 5, 9), (3, 4, 7, 6, 10)]
    tris = []
    for p, q, r, s, c in squares:  # ccw corners p q r s
        tris += [(p, q, c), (q, r, c), (r, s, c), (s, p, c)]
    return VolumeMesh.from_arrays(nodes, tris)


def shape_regularity(mesh: VolumeMesh) -> float:
    """sup_T diam(T) / |T|^(1/2)."""
    return float(np.max(mesh.diameters / np.sqrt(mesh.areas)))


# --------------------------------------------------------------------------
# newest vertex bisection
# --------------------------------------------------------------------------


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def refine_nvb(
    mesh: VolumeMesh,
    marked: Iterable[int],
    marked_edges: Iterable[tuple[int, int]] = (),
) -> VolumeMesh:
    """Coarsest conforming NVB refinement bisecting every marked triangle.

    ``marked_edges`` (node pairs) are additionally bisected; this is how
    marked boundary segments enter the volume refinement.
    """
    marked = [int(k) for k in marked]
    m = mesh.n_triangles
    if any(k < 0 or k >= m for k in marked):
        raise MeshError("invalid triangle id")
    tris = mesh.triangles
    edge_set = set()
    for k in marked:
        edge_set.add(_edge_key(tris[k, 0], tris[k, 1]))
    if marked_edges:
        _, emap = mesh.edges()
        existing = {_edge_key(tris[k, i], tris[k, (i + 1) % 3]) for k in range(m) for i in range(3)}
        for a, b in marked_edges:
            key = _edge_key(int(a), int(b))
            if key not in existing:
                raise MeshError(f"marked edge {key} is not a mesh edge")
            edge_set.add(key)
    if not edge_set:
        return mesh

    # closure: a triangle with any marked edge needs its reference edge marked
    local = [[_edge_key(t[0], t[1]), _edge_key(t[1], t[2]), _edge_key(t[2], t[0])] for t in tris.tolist()]
    changed = True
    while changed:
        changed = False
        for e in local:
            if e[0] not in edge_set and (e[1] in edge_set or e[2] in edge_set):
                edge_set.add(e[0])
                changed = True

    # new node ids in order of first appearance (triangle order, edge order)
    nodes = mesh.nodes.tolist()
    parents = mesh.node_parents.tolist()
    mid: dict[tuple[int, int], int] = {}
    for e in local:
        for key in e:
            if key in edge_set and key not in mid:
                mid[key] = len(nodes)
                pa, pb = mesh.nodes[key[0]], mesh.nodes[key[1]]
                nodes.append([(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2])
                parents.append([key[0], key[1]])

    out = []
    for t, e in zip(tris.tolist(), local):
        a, b, c = t
        if e[0] not in edge_set:
            out.append(t)
            continue
        mm = mid[e[0]]
        left = (c, a, mm)    # reference edge (c, a)
        right = (b, c, mm)   # reference edge (b, c)
        if e[2] in edge_set:  # edge (c, a)
            m2 = mid[e[2]]
            out += [(a, mm, m2), (mm, c, m2)]
        else:
            out.append(left)
        if e[1] in edge_set:  # edge (b, c)
            m1 = mid[e[1]]
            out += [(c, mm, m1), (mm, b, m1)]
        else:
            out.append(right)
    return VolumeMesh(np.array(nodes), np.array(out, dtype=np.int64), np.array(parents, dtype=np.int64))


def refine_uniform(mesh: VolumeMesh) -> VolumeMesh:
    edges, _ = mesh.edges()
    return refine_nvb(mesh, range(mesh.n_triangles), [tuple(e) for e in edges])


# --------------------------------------------------------------------------
# boundary meshes
# --------------------------------------------------------------------------


def _order_loop(oriented: np.ndarray) -> np.ndarray:
    nxt = {}
    for a, b in oriented.tolist():
        if a in nxt:
            raise MeshError("boundary is not a simple closed curve")
        nxt[a] = b
    start = min(nxt)
    loop = [start]
    cur = nxt[start]
    while cur != start:
        if cur not in nxt or len(loop) > len(nxt):
            raise MeshError("boundary edges do not form a single loop")
        loop.append(cur)
        cur = nxt[cur]
    if len(loop) != len(nxt):
        raise MeshError("boundary edges do not form a single loop")
    loop = np.array(loop, dtype=np.int64)
    return np.stack([loop, np.roll(loop, -1)], axis=1)


def induced_boundary_mesh(mesh: VolumeMesh) -> BoundaryMesh:
    """Boundary partition given by the boundary edges of ``mesh``."""
    segs = _order_loop(mesh.boundary_edges())
    return BoundaryMesh(mesh.nodes, segs, mesh.node_parents)


def refine_boundary(bmesh: BoundaryMesh, marked: Iterable[int], gamma: float = 2.0) -> BoundaryMesh:
    """Bisect marked segments; neighbours are bisected as long as an
    adjacent length ratio would exceed ``max(gamma, initial ratio)``."""
    marked = {int(k) for k in marked}
    M = bmesh.n_segments
    if any(k < 0 or k >= M for k in marked):
        raise MeshError("invalid segment id")
    if not marked:
        return bmesh
    h = bmesh.lengths
    limit = max(gamma, bmesh.gamma_ratio()) * (1 + 1e-12)
    refine = np.zeros(M, dtype=bool)
    refine[list(marked)] = True
    while True:
        hn = np.where(refine, h / 2, h)
        bad = False
        for i in range(M):
            j = (i + 1) % M
            if hn[i] > limit * hn[j] and not refine[i]:
                refine[i] = bad = True
            elif hn[j] > limit * hn[i] and not refine[j]:
                refine[j] = bad = True
        if not bad:
            break
    nodes = bmesh.nodes.tolist()
    parents = bmesh.node_parents.tolist()
    out = []
    for i, (a, b) in enumerate(bmesh.segments.tolist()):
        if refine[i]:
            mm = len(nodes)
            pa, pb = bmesh.nodes[a], bmesh.nodes[b]
            nodes.append([(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2])
            parents.append([a, b] if a < b else [b, a])
            out += [(a, mm), (mm, b)]
        else:
            out.append((a, b))
    segs = np.array(out, dtype=np.int64)
    k = int(np.argmin(segs[:, 0]))
    return BoundaryMesh(np.array(nodes), np.roll(segs, -k, axis=0), np.array(parents, dtype=np.int64), bmesh.outward)


def boundary_segment_parents(coarse: BoundaryMesh, fine: BoundaryMesh) -> np.ndarray:
    """Index of the coarse segment containing each fine segment."""
    index = {_edge_key(a, b): i for i, (a, b) in enumerate(coarse.segments.tolist())}
    n_old = len(coarse.nodes)
    out = np.empty(fine.n_segments, dtype=np.int64)
    for i, (a, b) in enumerate(fine.segments.tolist()):
        key = _edge_key(a, b)
        if key not in index:
            new = a if a >= n_old else b
            key = _edge_key(*fine.node_parents[new])
        if key not in index:
            raise MeshError("fine boundary mesh is not a refinement")
        out[i] = index[key]
    return out


# --------------------------------------------------------------------------
# hierarchies
# --------------------------------------------------------------------------


def _increment(n_old: int, new_parents: np.ndarray, new_ids: np.ndarray) -> np.ndarray:
    # old nodes whose patch shrank are exactly the endpoints of bisected edges
    old = new_parents.reshape(-1)
    old = old[(old >= 0) & (old < n_old)]
    return np.unique(np.concatenate([new_ids, old]))


def hierarchy_from_volume(mesh: VolumeMesh) -> MeshHierarchy:
    bm = induced_boundary_mesh(mesh)
    inc = LevelIncrement(
        np.arange(mesh.n_nodes), np.sort(bm.node_ids), np.arange(mesh.n_nodes), np.sort(bm.node_ids)
    )
    return MeshHierarchy((mesh,), (bm,), (inc,), ())


def hierarchy_from_boundary(bmesh: BoundaryMesh) -> MeshHierarchy:
    ids = np.sort(bmesh.node_ids)
    inc = LevelIncrement(np.array([], dtype=np.int64), ids, np.array([], dtype=np.int64), ids)
    return MeshHierarchy((None,), (bmesh,), (inc,), ())


def extend_hierarchy(h: MeshHierarchy, marked_vol=(), marked_bnd=(), uniform: bool = False) -> MeshHierarchy:
    """Append one refined level and its increments.

    ``uniform`` bisects every edge (volume) or segment (boundary) and
    ignores the marks.
    """
    vol, bnd = h.finest
    if uniform:
        marked_vol = [] if vol is None else list(range(vol.n_triangles))
        marked_bnd = list(range(bnd.n_segments))
    marked_vol = list(marked_vol)
    marked_bnd = list(marked_bnd)
    if not marked_vol and not marked_bnd:
        raise MeshError("marked sets must not both be empty")
    if vol is not None:
        if uniform:
            edges = [tuple(e) for e in vol.edges()[0]]
        else:
            edges = [tuple(bnd.segments[k]) for k in _checked(marked_bnd, bnd.n_segments)]
        new_vol = refine_nvb(vol, marked_vol, edges)
        new_bnd = induced_boundary_mesh(new_vol)
        nv = np.arange(vol.n_nodes, new_vol.n_nodes)
        vol_inc = _increment(vol.n_nodes, new_vol.node_parents[nv], nv)
    else:
        if marked_vol:
            raise MeshError("boundary-only hierarchy takes no volume marks")
        new_vol = None
        new_bnd = refine_boundary(bnd, marked_bnd)
        nv = vol_inc = np.array([], dtype=np.int64)
    n_old = len(bnd.nodes)
    old_b = set(bnd.node_ids.tolist())
    nb = np.array(sorted(set(new_bnd.node_ids.tolist()) - old_b), dtype=np.int64)
    bnd_inc = _increment(n_old, new_bnd.node_parents[nb] if len(nb) else np.zeros((0, 2), np.int64), nb)
    inc = LevelIncrement(vol_inc, bnd_inc, nv, nb)
    parents = boundary_segment_parents(bnd, new_bnd)
    return MeshHierarchy(
        h.volumes + (new_vol,), h.boundaries + (new_bnd,), h.increments + (inc,), h.boundary_parents + (parents,)
    )


def _checked(ids, n):
    ids = [int(k) for k in ids]
    if any(k < 0 or k >= n for k in ids):
        raise MeshError("invalid segment id")
    return ids


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------


def hanging_nodes(mesh: VolumeMesh, tol: float = 1e-12) -> int:
    """Brute-force conformity scan: number of (edge, node) pairs where a
    node lies strictly inside a triangle edge, plus edges shared by more
    than two triangles."""
    bad = 0
    X = mesh.nodes
    scale = np.max(np.abs(X)) + 1.0
    edges, _ = mesh.edges()
    for a, b in edges:
        pa, pb = X[a], X[b]
        d = pb - pa
        L2 = d @ d
        r = X - pa
        s = r @ d / L2
        dist = np.abs(r[:, 0] * d[1] - r[:, 1] * d[0]) / np.sqrt(L2)
        inside = (s > tol) & (s < 1 - tol) & (dist < tol * scale)
        bad += int(inside.sum())
    t = mesh.triangles
    loc = np.sort(np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2), axis=1)
    _, counts = np.unique(loc, axis=0, return_counts=True)
    bad += int(np.sum(counts > 2))
    return bad


# --------------------------------------------------------------------------
# plain-text format
# --------------------------------------------------------------------------


def write_mesh(path, mesh: VolumeMesh, bmesh: Optional[BoundaryMesh] = None) -> None:
    if bmesh is None:
        bmesh = induced_boundary_mesh(mesh)
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} segments {bmesh.n_segments}"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    lines += [f"{i} {a} {b} {c} 0" for i, (a, b, c) in enumerate(mesh.triangles.tolist())]
    lines += [f"{i} {a} {b}" for i, (a, b) in enumerate(bmesh.segments.tolist())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> tuple[VolumeMesh, BoundaryMesh]:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    head = rows[0]
    if len(head) != 6 or head[0] != "nodes" or head[2] != "triangles" or head[4] != "segments":
        raise MeshError("bad mesh header")
    n, m, k = int(head[1]), int(head[3]), int(head[5])
    body = rows[1:]
    if len(body) != n + m + k:
        raise MeshError("mesh file length does not match header")
    nodes = np.array([[float(r[1]), float(r[2])] for r in body[:n]])
    tris = np.array([[int(v) for v in r[1:4]] for r in body[n:n + m]], dtype=np.int64)
    ref = np.array([int(r[4]) for r in body[n:n + m]], dtype=np.int64)
    segs = np.array([[int(v) for v in r[1:3]] for r in body[n + m:]], dtype=np.int64)
    vol = VolumeMesh.from_arrays(nodes, tris, ref)
    bnd = BoundaryMesh(nodes, segs, vol.node_parents)
    return vol, bnd
