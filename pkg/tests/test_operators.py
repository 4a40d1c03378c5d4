import numpy as np
import pytest
import scipy.sparse as sp

from fembem.coupling import weaksing_rhs, weaksing_rhs_oracle
from fembem.mesh import (
    BoundaryMesh,
    VolumeMesh,
    extend_hierarchy,
    hierarchy_from_boundary,
    induced_boundary_mesh,
    lshape_mesh,
    refine_nvb,
)
from fembem.operators import (
    ConfigurationError,
    MaterialTensor,
    assemble_blocks,
    assemble_dlp,
    assemble_fem_stiffness,
    assemble_hyp,
    assemble_mass_trace,
    assemble_slp,
    haar_matrix,
    read_matrix,
    volume_load,
    write_matrix,
)
from fembem.coupling import CouplingKind, stabilization_vector
from fembem.problems import corner_singular

from conftest import corner_hierarchy, mixed_hierarchy


def _boundary(levels=2, seed=0):
    return mixed_hierarchy(levels, seed).finest[1]


# --------------------------------------------------------------------------
# FEM
# --------------------------------------------------------------------------


def test_stiffness_row_sums_vanish(mixed3):
    K = assemble_fem_stiffness(mixed3.finest[0])
    assert np.abs(K.sum(axis=1)).max() <= 1e-12 * abs(K).max()
    assert abs(K - K.T).max() == 0.0


def test_stiffness_unit_right_triangle():
    m = VolumeMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    K = assemble_fem_stiffness(m).toarray()
    expect = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    assert np.allclose(K, expect, rtol=0, atol=1e-15)


def test_stiffness_scales_with_constant_tensor(lshape):
    c = 2.75
    K1 = assemble_fem_stiffness(lshape)
    Kc = assemble_fem_stiffness(lshape, MaterialTensor(c_A=c, C_A=c))
    assert abs(Kc - c * K1).max() <= 1e-15 * abs(Kc).max()


def test_stiffness_psd_with_constant_kernel(lshape):
    ev = np.linalg.eigvalsh(assemble_fem_stiffness(lshape).toarray())
    assert abs(ev[0]) <= 1e-12 * ev[-1]
    assert ev[1] > 1e-6 * ev[-1]


def test_material_tensor_validation():
    with pytest.raises(ConfigurationError):
        MaterialTensor(c_A=0.0, C_A=1.0)
    with pytest.raises(ConfigurationError):
        MaterialTensor(c_A=1.0, C_A=2.0)
    bad = MaterialTensor(lambda x: np.tile([[1.0, 0.5], [0.0, 1.0]], (len(x), 1, 1)), 0.5, 1.5)
    with pytest.raises(ConfigurationError):
        bad(np.zeros((2, 2)))


def test_volume_load_exact_for_quadratics(lshape):
    # the midpoint rule integrates quadratics times hats of total degree 2 exactly
    f = lambda x: 1.0 + x[:, 0] - 2 * x[:, 1]
    total = volume_load(lshape, f).sum()
    p = lshape.nodes[lshape.triangles]
    ref = (lshape.areas * (1.0 + p[..., 0].mean(1) - 2 * p[..., 1].mean(1))).sum()
    assert total == pytest.approx(ref, rel=1e-14)
    assert not volume_load(lshape, None).any()


# --------------------------------------------------------------------------
# single layer
# --------------------------------------------------------------------------


def test_slp_symmetric_positive_definite():
    V = assemble_slp(_boundary())
    assert np.array_equal(V, V.T)
    assert np.linalg.eigvalsh(V)[0] > 0


def test_slp_nested_under_uniform_refinement():
    h = hierarchy_from_boundary(induced_boundary_mesh(lshape_mesh()))
    h = extend_hierarchy(h, uniform=True)
    h = extend_hierarchy(h, uniform=True)
    V0 = assemble_slp(h.boundaries[0])
    V2 = assemble_slp(h.boundaries[2])
    owner = h.boundary_parents[0][h.boundary_parents[1]]
    J = sp.csr_matrix((np.ones(len(owner)), (np.arange(len(owner)), owner)))
    assert np.allclose(J.T @ V2 @ J, V0, rtol=0, atol=1e-12 * np.abs(V0).max())


def test_slp_rejects_large_domain():
    big = induced_boundary_mesh(lshape_mesh(side=1.0))
    with pytest.raises(ConfigurationError):
        assemble_slp(big)


# --------------------------------------------------------------------------
# double layer
# --------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dlp_row_sums(seed):
    bm = _boundary(3, seed)
    K = assemble_dlp(bm)
    assert np.allclose(K.sum(axis=1), -0.5 * bm.lengths, rtol=0, atol=1e-10 * bm.lengths.max())


def test_dlp_collinear_entries_zero():
    bm = induced_boundary_mesh(refine_nvb(lshape_mesh(), [0, 1, 2, 3, 6]))
    K = assemble_dlp(bm)
    A, B = bm.endpoints
    t = (B - A) / bm.lengths[:, None]
    M = bm.n_segments

    def on_line(j, k):
        cross = lambda u, v: u[0] * v[1] - u[1] * v[0]
        return abs(cross(t[j], t[k])) < 1e-13 and abs(cross(t[j], A[k] - A[j])) < 1e-13

    hits = 0
    for j in range(M):
        for k in range(M):
            if on_line(j, k) and on_line(j, (k - 1) % M):
                assert K[j, k] == 0.0
                hits += 1
    assert hits >= M


# --------------------------------------------------------------------------
# hypersingular
# --------------------------------------------------------------------------


def test_hyp_kernel_is_constants():
    bm = _boundary(3)
    W = assemble_hyp(bm)
    assert np.abs(W @ np.ones(len(W))).max() <= 1e-12 * np.abs(W).max()
    assert np.array_equal(W, W.T)
    ev = np.linalg.eigvalsh(W)
    assert abs(ev[0]) <= 1e-12 * ev[-1]
    assert ev[1] > 1e-8 * ev[-1]


def test_maue_congruence_every_level():
    h = corner_hierarchy(4)
    for bm in h.boundaries:
        V = assemble_slp(bm)
        H = haar_matrix(bm)
        W = assemble_hyp(bm, V)
        assert np.abs(H.T @ V @ H - W).max() <= 1e-10 * np.abs(W).max()


def test_haar_columns_orthogonal_to_lengths():
    bm = _boundary(2)
    H = haar_matrix(bm)
    assert np.abs(bm.lengths @ H).max() <= 1e-12 * np.abs(H).max()


def _hat_prolongation(coarse: BoundaryMesh, fine: BoundaryMesh, parents: np.ndarray) -> np.ndarray:
    """Values of the coarse hats at the fine boundary nodes, by arclength interpolation."""
    Mc, Mf = coarse.n_segments, fine.n_segments
    A, B = coarse.endpoints
    P = np.zeros((Mf, Mc))
    X = fine.nodes[fine.node_ids]
    for i in range(Mf):
        k = parents[i]
        s = np.linalg.norm(X[i] - A[k]) / coarse.lengths[k]
        P[i, k] += 1.0 - s
        P[i, (k + 1) % Mc] += s
    return P


def test_hyp_nested_under_refinement():
    h = hierarchy_from_boundary(induced_boundary_mesh(lshape_mesh()))
    h = extend_hierarchy(h, marked_bnd=[0, 3, 4])
    c, f = h.boundaries
    P = _hat_prolongation(c, f, h.boundary_parents[0])
    Wc, Wf = assemble_hyp(c), assemble_hyp(f)
    assert np.allclose(P.T @ Wf @ P, Wc, rtol=0, atol=1e-11 * np.abs(Wc).max())


# --------------------------------------------------------------------------
# mass, stabilization, rhs
# --------------------------------------------------------------------------


def test_mass_trace_entries():
    bm = _boundary(2)
    Mb = assemble_mass_trace(bm)
    L = bm.lengths
    assert np.allclose(Mb.sum(axis=1), L, rtol=1e-15)
    i = 3
    nz = np.nonzero(Mb[i])[0]
    assert sorted(nz) == sorted([i, (i + 1) % len(L)])
    assert np.allclose(Mb[i, nz], L[i] / 2)


def test_mass_interior_columns_zero(mixed3):
    blocks = assemble_blocks(*mixed3.finest)
    interior = np.setdiff1d(np.arange(blocks.N), blocks.bnodes)
    assert len(interior) > 0
    assert abs(blocks.M_full()[:, interior]).max() == 0.0
    assert abs(blocks.K_full()[:, interior]).max() == 0.0


@pytest.mark.parametrize("kind", ["jn", "sym", "bmc"])
def test_stabilization_vector(mixed3, kind):
    blocks = assemble_blocks(*mixed3.finest)
    S = stabilization_vector(blocks, kind)
    perim = mixed3.finest[1].perimeter
    fem = S[: blocks.N]
    interior = np.setdiff1d(np.arange(blocks.N), blocks.bnodes)
    assert not fem[interior].any()
    expect = -perim if CouplingKind(kind) is CouplingKind.BMC else perim
    assert fem.sum() == pytest.approx(expect, rel=1e-10)
    assert np.allclose(S[blocks.N:], blocks.A_V.sum(axis=0), rtol=1e-15)


def test_weaksing_rhs_matches_fine_oracle():
    bm = induced_boundary_mesh(lshape_mesh())
    K = assemble_dlp(bm)
    Mb = assemble_mass_trace(bm)
    got = weaksing_rhs(bm, K, Mb, corner_singular)
    # graded midpoint sums converge at second order; extrapolate once
    r1 = weaksing_rhs_oracle(bm, corner_singular, n_sub=1000, grade=3.0)
    r2 = weaksing_rhs_oracle(bm, corner_singular, n_sub=2000, grade=3.0)
    ref = (4 * r2 - r1) / 3
    assert np.allclose(got, ref, rtol=0, atol=1e-8 * np.abs(ref).max())


def test_matrix_roundtrip(tmp_path, mixed3):
    blocks = assemble_blocks(*mixed3.finest)
    for A in (blocks.A_A, blocks.A_V, blocks.K_full()):
        path = tmp_path / "A.txt"
        write_matrix(path, A)
        B = read_matrix(path)
        assert B.shape == A.shape
        assert abs(sp.csr_matrix(A) - B).max() == 0.0


def test_matrix_reader_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("mat 2 2 0\n")
    with pytest.raises(ValueError):
        read_matrix(p)
    p.write_text("matrix 2 2 2\n0 0 1.0\n")
    with pytest.raises(ValueError):
        read_matrix(p)
