import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fembem.mesh import (
    MeshError,
    VolumeMesh,
    extend_hierarchy,
    hanging_nodes,
    hierarchy_from_boundary,
    hierarchy_from_volume,
    induced_boundary_mesh,
    lshape_mesh,
    lshape_vertices,
    read_mesh,
    refine_boundary,
    refine_nvb,
    refine_uniform,
    shape_regularity,
    write_mesh,
)
from fembem.problems import POLE, point_in_polygon


def _square():
    nodes = [[0, 0], [1, 0], [1, 1], [0, 1]]
    return VolumeMesh.from_arrays(nodes, [[0, 1, 2], [0, 2, 3]])


def _conforming_oracle(mesh):
    """Every interior edge shared by two triangles and no node strictly
    inside an edge, by direct enumeration."""
    X = mesh.nodes
    count = {}
    for t in mesh.triangles.tolist():
        for i in range(3):
            e = tuple(sorted((t[i], t[(i + 1) % 3])))
            count[e] = count.get(e, 0) + 1
    if max(count.values()) > 2:
        return False
    for a, b in count:
        for z in range(len(X)):
            if z in (a, b):
                continue
            d = X[b] - X[a]
            r = X[z] - X[a]
            s = (r @ d) / (d @ d)
            if 1e-12 < s < 1 - 1e-12 and abs(r[0] * d[1] - r[1] * d[0]) < 1e-13:
                return False
    return True


def _closure_oracle(mesh, marked, seed_edges=()):
    """Least edge set containing the marked reference edges (and seed
    edges), closed under 'any bisected edge of T forces the reference edge
    of T'."""
    tris = mesh.triangles.tolist()
    key = lambda a, b: (min(a, b), max(a, b))
    by_edge = {}
    for k, t in enumerate(tris):
        for i in range(3):
            by_edge.setdefault(key(t[i], t[(i + 1) % 3]), []).append(k)
    out = set()
    work = [key(tris[k][0], tris[k][1]) for k in marked] + [key(a, b) for a, b in seed_edges]
    while work:
        e = work.pop()
        if e in out:
            continue
        out.add(e)
        for k in by_edge[e]:
            work.append(key(tris[k][0], tris[k][1]))
    return out


def _boundary_patch_lengths(bm):
    out = {}
    for (a, b), L in zip(bm.segments.tolist(), bm.lengths):
        out[a] = out.get(a, 0.0) + L
        out[b] = out.get(b, 0.0) + L
    return out


def _bisected_edges(coarse, fine):
    new = fine.node_parents[coarse.n_nodes:]
    return {tuple(sorted(p)) for p in new.tolist()}


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


def test_lshape_counts_and_diameter(lshape):
    assert lshape.n_triangles == 12
    bm = induced_boundary_mesh(lshape)
    assert bm.n_segments == 8
    V = lshape_vertices()
    diam = max(np.linalg.norm(p - q) for p in V for q in V)
    assert diam == pytest.approx(2 / 3, rel=1e-14)
    assert point_in_polygon(POLE, V)


def test_lshape_reentrant_corner_at_origin():
    V = lshape_vertices()
    assert np.allclose(V[0], 0.0)
    a, b = V[-1] - V[0], V[1] - V[0]
    # interior angle measured inside a ccw polygon
    ang = math.atan2(a[0] * b[1] - a[1] * b[0], a @ b) % (2 * np.pi)
    ang = 2 * np.pi - ang if ang < np.pi else ang
    assert ang == pytest.approx(1.5 * np.pi, rel=1e-12)


def test_shape_regularity_closed_forms():
    eq = VolumeMesh.from_arrays([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]], [[0, 1, 2]])
    assert shape_regularity(eq) == pytest.approx(1 / (np.sqrt(3) / 4) ** 0.5, rel=1e-12)
    rt = VolumeMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert shape_regularity(rt) == pytest.approx(2.0, rel=1e-12)


def test_shape_regularity_bounded_under_bisection(lshape):
    mesh = lshape
    vals = [shape_regularity(mesh)]
    for _ in range(8):
        mesh = refine_nvb(mesh, range(mesh.n_triangles))
        vals.append(shape_regularity(mesh))
    # NVB generates finitely many similarity classes, all seen by level 2
    assert max(vals[3:]) <= max(vals[:3]) * (1 + 1e-12)


# --------------------------------------------------------------------------
# refine_nvb
# --------------------------------------------------------------------------


def test_single_triangle_all_edges_gives_four_sons():
    m = VolumeMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    edges, _ = m.edges()
    f = refine_nvb(m, [0], [tuple(e) for e in edges])
    assert f.n_triangles == 4
    assert f.areas.sum() == pytest.approx(0.5, rel=1e-15)


def test_empty_marking_is_identity(lshape):
    assert refine_nvb(lshape, []) is lshape
    bm = induced_boundary_mesh(lshape)
    assert refine_boundary(bm, []) is bm


def test_invalid_ids_rejected(lshape):
    with pytest.raises(MeshError):
        refine_nvb(lshape, [12])
    with pytest.raises(MeshError):
        refine_boundary(induced_boundary_mesh(lshape), [-1])


def test_neighbour_bisected_through_shared_edge():
    sq = _square()
    # both reference edges are the shared diagonal (longest edge)
    f = refine_nvb(sq, [0])
    assert f.n_triangles == 4
    assert hanging_nodes(f) == 0 and _conforming_oracle(f)


def test_sons_have_newest_vertex_opposite_reference_edge(lshape):
    f = refine_nvb(lshape, [0, 5])
    old = {tuple(t) for t in lshape.triangles.tolist()}
    for t in f.triangles.tolist():
        if tuple(t) not in old:
            assert t[2] >= lshape.n_nodes


def test_each_parent_splits_into_two_to_four(lshape):
    rng = np.random.default_rng(3)
    m = refine_uniform(lshape)
    f = refine_nvb(m, rng.choice(m.n_triangles, 10, replace=False))
    cent = f.nodes[f.triangles].mean(axis=1)
    counts = np.zeros(m.n_triangles, dtype=int)
    for c in cent:
        counts[_containing(m, c)] += 1
    assert set(counts.tolist()) <= {1, 2, 3, 4}


def _containing(mesh, x):
    P = mesh.nodes[mesh.triangles]
    for k, (a, b, c) in enumerate(P):
        T = np.column_stack([b - a, c - a])
        lam = np.linalg.solve(T, x - a)
        if lam.min() >= -1e-12 and lam.sum() <= 1 + 1e-12:
            return k
    raise AssertionError("point outside mesh")


def test_uniform_refinement_counts(lshape):
    f = refine_uniform(lshape)
    assert f.n_triangles == 48
    assert induced_boundary_mesh(f).n_segments == 16
    assert hanging_nodes(f) == 0


# --------------------------------------------------------------------------
# boundary meshes
# --------------------------------------------------------------------------


def test_boundary_uniform_bisection(lshape):
    bm = induced_boundary_mesh(lshape)
    f = refine_boundary(bm, range(bm.n_segments))
    assert f.n_segments == 16
    assert np.allclose(np.sort(f.lengths), np.sort(np.repeat(bm.lengths, 2) / 2), rtol=0, atol=1e-15)


def test_boundary_single_mark_local_ratio():
    bm = induced_boundary_mesh(lshape_mesh())
    for _ in range(6):
        bm = refine_boundary(bm, [0])
        h = bm.lengths
        ratios = np.maximum(h / np.roll(h, -1), np.roll(h, -1) / h)
        assert ratios.max() <= 2 + 1e-12


def test_induced_boundary_perimeter(lshape):
    V = lshape_vertices()
    per = np.linalg.norm(np.roll(V, -1, axis=0) - V, axis=1).sum()
    m = lshape
    for _ in range(3):
        assert induced_boundary_mesh(m).perimeter == pytest.approx(per, rel=1e-14)
        m = refine_nvb(m, [0, m.n_triangles - 1])


def test_boundary_normals_outward(lshape):
    bm = induced_boundary_mesh(lshape)
    A, B = bm.endpoints
    mid = 0.5 * (A + B)
    V = lshape_vertices()
    for x, n in zip(mid, bm.normals):
        assert not point_in_polygon(x + 1e-6 * n, V)
        assert point_in_polygon(x - 1e-6 * n, V)


# --------------------------------------------------------------------------
# hierarchies and increments
# --------------------------------------------------------------------------


def test_uniform_step_increment_is_all_nodes(lshape):
    h = extend_hierarchy(hierarchy_from_volume(lshape), uniform=True)
    inc = h.increments[-1]
    assert np.array_equal(inc.volume, np.arange(h.volumes[-1].n_nodes))
    assert np.array_equal(np.sort(inc.boundary), np.sort(h.boundaries[-1].node_ids))


def test_two_marked_interior_triangles(lshape):
    """Two interior triangles whose bisection needs no closure: the
    increment is the two midpoints plus the edge endpoints."""
    m = refine_uniform(lshape)
    bnd_nodes = set(induced_boundary_mesh(m).node_ids.tolist())
    ref = {}
    for k, t in enumerate(m.triangles.tolist()):
        ref.setdefault(tuple(sorted(t[:2])), []).append(k)
    pairs = [ks for e, ks in ref.items() if len(ks) == 2 and not (set(e) & bnd_nodes)]
    (k1, k2), (k3, k4) = pairs[0], pairs[1]
    h = extend_hierarchy(hierarchy_from_volume(m), [k1, k3])
    inc = h.increments[-1]
    assert len(inc.new_volume) == 2
    ends = set(m.triangles[k1, :2].tolist()) | set(m.triangles[k3, :2].tolist())
    assert set(inc.volume.tolist()) == set(inc.new_volume.tolist()) | ends


def test_empty_extension_rejected(lshape):
    with pytest.raises(MeshError):
        extend_hierarchy(hierarchy_from_volume(lshape), [], [])


def test_boundary_hierarchy_increments(lshape):
    h = hierarchy_from_boundary(induced_boundary_mesh(lshape))
    h = extend_hierarchy(h, (), [0])
    inc = h.increments[-1]
    b0 = h.boundaries[0]
    a, b = b0.segments[0]
    assert set(inc.boundary.tolist()) == set(inc.new_boundary.tolist()) | {int(a), int(b)}
    assert len(inc.new_boundary) >= 1


def test_mesh_roundtrip(tmp_path, lshape):
    m = refine_nvb(lshape, [1, 4])
    p = tmp_path / "m.txt"
    write_mesh(p, m)
    m2, b2 = read_mesh(p)
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(induced_boundary_mesh(m).segments, b2.segments)


def test_refinement_deterministic(lshape):
    a = refine_nvb(refine_uniform(lshape), [3, 7, 11])
    b = refine_nvb(refine_uniform(lshape), [3, 7, 11])
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.triangles, b.triangles)


# --------------------------------------------------------------------------
# property suite: random marking sequences
# --------------------------------------------------------------------------


marks = st.lists(st.lists(st.integers(0, 10_000), min_size=0, max_size=4), min_size=1, max_size=4)


@settings(max_examples=200, deadline=None)
@given(seq=marks, bmarks=st.lists(st.integers(0, 10_000), min_size=0, max_size=4))
def test_random_marking_sequences(seq, bmarks):
    h = hierarchy_from_volume(lshape_mesh())
    area0 = h.volumes[0].areas.sum()
    for step, mk in enumerate(seq):
        vol, bnd = h.finest
        mv = sorted({k % vol.n_triangles for k in mk})
        mb = sorted({k % bnd.n_segments for k in bmarks}) if step == 0 else []
        if not mv and not mb:
            mv = [0]
        h = extend_hierarchy(h, mv, mb)
        fine, fb = h.finest
        # conformity by two independent scans
        assert hanging_nodes(fine) == 0
        assert _conforming_oracle(fine)
        # minimal closure
        edges = [tuple(bnd.segments[k].tolist()) for k in mb]
        expected = _closure_oracle(vol, mv, edges)
        assert _bisected_edges(vol, fine) == expected
        # increments: old nodes in the set iff their patch shrank
        pa_old = vol.patch_areas()
        pa_new = fine.patch_areas()[: vol.n_nodes]
        shrank = set(np.nonzero(pa_new < pa_old * (1 - 1e-12))[0].tolist())
        new = set(range(vol.n_nodes, fine.n_nodes))
        inc = h.increments[-1]
        assert set(inc.volume.tolist()) == new | shrank
        # boundary increment: old boundary nodes whose two-segment patch shrank
        nb_new = set(fb.node_ids.tolist()) - set(bnd.node_ids.tolist())
        assert set(inc.new_boundary.tolist()) == nb_new
        shrank_b = {z for z, pl in _boundary_patch_lengths(bnd).items()
                    if _boundary_patch_lengths(fb)[z] < pl * (1 - 1e-12)}
        assert set(inc.boundary.tolist()) == nb_new | shrank_b
        assert fine.areas.sum() == pytest.approx(area0, rel=1e-13)
        assert np.all(fine.areas > 0)
