"""Galerkin matrices for lowest-order FEM-BEM coupling.

Discrete spaces on level l: P1 hats eta_z on the volume mesh and P0
characteristic functions psi_T on the boundary mesh.  Boundary columns are
indexed by position in ``bmesh.node_ids`` (node i starts segment i); the
maps to full volume indexing go through :func:`boundary_embedding`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .kernels import (
    DEFAULT_QUADRATURE,
    INV_2PI,
    QuadratureConfig,
    Segment,
    _slp_pair,
    dlp_pair_integral,
    gauss01,
    graded01,
    slp_self,
)
from .mesh import BoundaryMesh, VolumeMesh


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialTensor:
    """Symmetric material tensor A(x) with eigenvalues in [c_A, C_A].

    ``func`` maps points (k, 2) to matrices (k, 2, 2); ``None`` means c*I
    with c = c_A = C_A.
    """

    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    c_A: float = 1.0
    C_A: float = 1.0

    def __post_init__(self):
        if not 0 < self.c_A <= self.C_A < np.inf:
            raise ConfigurationError("need 0 < c_A <= C_A < inf")
        if self.func is None and self.c_A != self.C_A:
            raise ConfigurationError("constant tensor needs c_A == C_A")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.func is None:
            return np.broadcast_to(self.c_A * np.eye(2), (len(x), 2, 2))
        A = np.asarray(self.func(x), dtype=float).reshape(len(x), 2, 2)
        if not np.allclose(A, np.swapaxes(A, 1, 2)):
            raise ConfigurationError("material tensor not symmetric")
        return A


IDENTITY = MaterialTensor()


# --------------------------------------------------------------------------
# FEM
# --------------------------------------------------------------------------


def p1_gradients(mesh: VolumeMesh) -> np.ndarray:
    """Gradients of the three barycentric coordinates per triangle (m, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    inv = np.stack([np.stack([d2[:, 1], -d1[:, 1]], 1), np.stack([-d2[:, 0], d1[:, 0]], 1)], 1) / det[:, None, None]
    # rows of inv^T are gradients of lambda_1, lambda_2
    g12 = np.swapaxes(inv, 1, 2)
    g0 = -g12.sum(axis=1, keepdims=True)
    return np.concatenate([g0, g12], axis=1)


def assemble_fem_stiffness(mesh: VolumeMesh, A: MaterialTensor = IDENTITY) -> sp.csr_matrix:
    """P1 stiffness matrix; A sampled at triangle centroids."""
    if np.any(mesh.areas <= 0):
        raise ConfigurationError("degenerate triangle")
    G = p1_gradients(mesh)
    centroids = mesh.nodes[mesh.triangles].mean(axis=1)
    Am = A(centroids)
    local = np.einsum("tia,tab,tjb->tij", G, Am, G) * mesh.areas[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).reshape(-1)
    cols = np.tile(t, (1, 3)).reshape(-1)
    K = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    K.sum_duplicates()
    return K


def volume_load(mesh: VolumeMesh, f: Optional[Callable]) -> np.ndarray:
    """<f, eta_z> by the 3-point edge-midpoint rule (order 2)."""
    out = np.zeros(mesh.n_nodes)
    if f is None:
        return out
    p = mesh.nodes[mesh.triangles]
    mids = np.stack([(p[:, 0] + p[:, 1]) / 2, (p[:, 1] + p[:, 2]) / 2, (p[:, 2] + p[:, 0]) / 2], axis=1)
    fv = np.asarray(f(mids.reshape(-1, 2)), dtype=float).reshape(-1, 3)
    # lambda_i at the midpoints: 1/2 on the two adjacent edges, 0 opposite
    lam = np.array([[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])  # [node i, midpoint q]
    contrib = (fv @ lam.T) * (mesh.areas / 3.0)[:, None]
    np.add.at(out, mesh.triangles.reshape(-1), contrib.reshape(-1))
    return out


# --------------------------------------------------------------------------
# BEM
# --------------------------------------------------------------------------


def check_diameter(bmesh: BoundaryMesh) -> None:
    X = bmesh.nodes[bmesh.node_ids]
    d = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1)).max()
    if d >= 1.0:
        raise ConfigurationError(f"diam(Omega) = {d:.4g} >= 1: single-layer operator not elliptic")


def _pair_distances(A, B):
    """Pairwise distances between segments [A_i, B_i]."""

    def pt_seg(P, a, b):  # P (n, 2) points vs segments a, b (n, 2) -> (n, n)
        d = b - a
        L2 = (d * d).sum(1)
        r = P[:, None, :] - a[None]
        s = np.clip((r * d[None]).sum(-1) / L2[None], 0.0, 1.0)
        return np.linalg.norm(r - s[..., None] * d[None], axis=-1)

    d = np.minimum(pt_seg(A, A, B), pt_seg(B, A, B))  # [i, j]: endpoints of i to segment j
    return np.minimum(d, d.T)


def assemble_slp(bmesh: BoundaryMesh, cfg: QuadratureConfig = DEFAULT_QUADRATURE, check: bool = True) -> np.ndarray:
    """A_V[j, k] = <psi_j, V psi_k>."""
    if check:
        check_diameter(bmesh)
    A, B = bmesh.endpoints
    L = bmesh.lengths
    M = len(L)
    dist = _pair_distances(A, B)
    far = dist > cfg.far_ratio * np.maximum(L[:, None], L[None])
    np.fill_diagonal(far, False)
    t, w = gauss01(cfg.order)
    X = A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]   # (M, n, 2)
    W = w[None] * L[:, None]                                   # (M, n)
    V = np.zeros((M, M))
    for i in range(M):
        js = np.nonzero(far[i, i + 1:])[0] + i + 1
        if len(js):
            r = np.linalg.norm(X[i][None, :, None, :] - X[js][:, None, :, :], axis=-1)
            V[i, js] = -INV_2PI * np.einsum("a,kab,kb->k", W[i], np.log(r), W[js])
        for j in np.nonzero(~far[i, i + 1:])[0] + i + 1:
            s_key = (L[i], tuple(A[i]), tuple(B[i]))
            t_key = (L[j], tuple(A[j]), tuple(B[j]))
            a, b = (i, j) if s_key <= t_key else (j, i)
            V[i, j] = _slp_pair(A[a], B[a], A[b], B[b], cfg)
        V[i, i] = slp_self(L[i])
    iu = np.triu_indices(M, 1)
    V[(iu[1], iu[0])] = V[iu]
    return V


def assemble_dlp(bmesh: BoundaryMesh, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """K[j, i] = <psi_j, K zeta_i> for boundary hats zeta_i (M x M)."""
    A, B = bmesh.endpoints
    L = bmesh.lengths
    nrm = bmesh.normals
    M = len(L)
    dist = _pair_distances(A, B)
    far = dist > cfg.far_ratio * np.maximum(L[:, None], L[None])
    np.fill_diagonal(far, False)
    t, w = gauss01(cfg.order)
    X = A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]
    W = w[None] * L[:, None]
    # test segment j on the line of trial segment k: kernel vanishes identically
    off = np.abs(np.einsum("jc,kc->jk", A, nrm) - (A * nrm).sum(1)[None])
    off = np.maximum(off, np.abs(np.einsum("jc,kc->jk", B, nrm) - (A * nrm).sum(1)[None]))
    collinear = off <= 1e-14 * L[:, None]
    far &= ~collinear
    Kloc = np.zeros((M, M, 2))  # [test segment j, trial segment k, (start, end) hat piece]
    for j in range(M):
        ks = np.nonzero(far[j])[0]
        if len(ks):
            diff = X[j][None, :, None, :] - X[ks][:, None, :, :]      # (k, a, b, 2)
            ker = np.einsum("kabc,kc->kab", diff, nrm[ks]) / (diff * diff).sum(-1)
            wk = np.einsum("a,kab,kb->kb", W[j], ker, W[ks])           # (k, b)
            Kloc[j, ks, 0] = INV_2PI * wk @ (1.0 - t)
            Kloc[j, ks, 1] = INV_2PI * wk @ t
        for k in np.nonzero(~far[j] & ~collinear[j])[0]:
            if k == j:
                continue
            s = Segment(A[k], B[k], nrm[k])
            tt = Segment(A[j], B[j], nrm[j])
            Kloc[j, k] = dlp_pair_integral(tt, s, cfg)
    K = Kloc[:, :, 0].copy()
    K += np.roll(Kloc[:, :, 1], 1, axis=1)  # end of segment k is node k+1
    return K


def haar_matrix(bmesh: BoundaryMesh) -> np.ndarray:
    """Columns are the arclength derivatives of the boundary hats in the P0
    basis: chi_i = +1/|T_{i-1}| on T_{i-1}, -1/|T_i| on T_i."""
    L = bmesh.lengths
    M = len(L)
    H = np.zeros((M, M))
    idx = np.arange(M)
    H[idx, idx] = -1.0 / L
    H[(idx - 1) % M, idx] = 1.0 / L[(idx - 1) % M]
    return H


def assemble_hyp(bmesh: BoundaryMesh, A_V: Optional[np.ndarray] = None, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """A_W[a, b] = <W zeta_b, zeta_a> = <V zeta_b', zeta_a'> (Maue), scattered
    elementwise from the segment-pair integrals."""
    if A_V is None:
        A_V = assemble_slp(bmesh, cfg)
    L = bmesh.lengths
    M = len(L)
    # node of (segment, local end) and the derivative of its hat there
    nodes = np.stack([np.arange(M), (np.arange(M) + 1) % M], axis=1)
    coef = np.stack([-1.0 / L, 1.0 / L], axis=1)
    W = np.zeros((M, M))
    for p in range(2):
        for q in range(2):
            vals = coef[:, p, None] * A_V * coef[None, :, q]
            np.add.at(W, (nodes[:, p, None], nodes[None, :, q]), vals)
    return 0.5 * (W + W.T)


def assemble_mass_trace(bmesh: BoundaryMesh) -> np.ndarray:
    """Mb[j, i] = <psi_j, zeta_i> (M x M, boundary-node columns)."""
    L = bmesh.lengths
    M = len(L)
    Mb = np.zeros((M, M))
    idx = np.arange(M)
    Mb[idx, idx] = L / 2
    Mb[idx, (idx + 1) % M] += L / 2
    return Mb


def boundary_embedding(bmesh: BoundaryMesh, n_nodes: int) -> sp.csr_matrix:
    """E (n_nodes x M) with E[node_ids[i], i] = 1."""
    M = bmesh.n_segments
    return sp.csr_matrix((np.ones(M), (bmesh.node_ids, np.arange(M))), shape=(n_nodes, M))


def _segment_rule(a, b, sing, cfg):
    for p in sing:
        if np.array_equal(a, p):
            return graded01(0.0, 0.0, cfg)
        if np.array_equal(b, p):
            return graded01(1.0, 0.0, cfg)
    return gauss01(cfg.order)


def boundary_load(
    bmesh: BoundaryMesh,
    func: Callable,
    singular_points=((0.0, 0.0),),
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    with_normal: bool = False,
) -> np.ndarray:
    """<func, zeta_i>_Gamma; graded Gauss on segments touching a singular
    point.  With ``with_normal`` the integrand is called as func(x, n)."""
    A, B = bmesh.endpoints
    L = bmesh.lengths
    nrm = bmesh.normals
    out = np.zeros(len(L))
    sing = [np.asarray(p, dtype=float) for p in singular_points]
    for k in range(len(L)):
        t, w = _segment_rule(A[k], B[k], sing, cfg)
        x = A[k] + t[:, None] * (B[k] - A[k])
        fx = func(x, nrm[k]) if with_normal else func(x)
        fv = np.asarray(fx, dtype=float) * w * L[k]
        out[k] += fv @ (1.0 - t)
        out[(k + 1) % len(L)] += fv @ t
    return out


def p0_load(
    bmesh: BoundaryMesh,
    func: Callable,
    singular_points=((0.0, 0.0),),
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    with_normal: bool = False,
) -> np.ndarray:
    """<func, psi_j>_Gamma."""
    A, B = bmesh.endpoints
    L = bmesh.lengths
    nrm = bmesh.normals
    out = np.zeros(len(L))
    sing = [np.asarray(p, dtype=float) for p in singular_points]
    for k in range(len(L)):
        t, w = _segment_rule(A[k], B[k], sing, cfg)
        x = A[k] + t[:, None] * (B[k] - A[k])
        fx = func(x, nrm[k]) if with_normal else func(x)
        out[k] = np.asarray(fx, dtype=float) @ w * L[k]
    return out


# --------------------------------------------------------------------------
# collected blocks
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GalerkinBlocks:
    A_A: sp.csr_matrix      # N x N
    A_V: np.ndarray         # M x M
    K: np.ndarray           # M x M_nodes (boundary-node columns)
    Mb: np.ndarray          # M x M_nodes
    A_W: np.ndarray         # boundary nodes x boundary nodes
    bnodes: np.ndarray      # volume ids of the boundary nodes
    N: int

    @property
    def M(self) -> int:
        return self.A_V.shape[0]

    @property
    def E(self) -> sp.csr_matrix:
        return sp.csr_matrix((np.ones(len(self.bnodes)), (self.bnodes, np.arange(len(self.bnodes)))), shape=(self.N, len(self.bnodes)))

    def K_full(self) -> sp.csr_matrix:
        """K embedded as M x N (zero columns for interior nodes)."""
        return sp.csr_matrix(self.K) @ self.E.T

    def M_full(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.Mb) @ self.E.T

    def W_full(self) -> sp.csr_matrix:
        E = self.E
        return (E @ sp.csr_matrix(self.A_W) @ E.T).tocsr()


def assemble_blocks(
    mesh: VolumeMesh,
    bmesh: BoundaryMesh,
    A: MaterialTensor = IDENTITY,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    hyp: bool = True,
) -> GalerkinBlocks:
    A_V = assemble_slp(bmesh, cfg)
    return GalerkinBlocks(
        A_A=assemble_fem_stiffness(mesh, A),
        A_V=A_V,
        K=assemble_dlp(bmesh, cfg),
        Mb=assemble_mass_trace(bmesh),
        A_W=assemble_hyp(bmesh, A_V) if hyp else np.zeros((bmesh.n_segments,) * 2),
        bnodes=np.asarray(bmesh.node_ids).copy(),
        N=mesh.n_nodes,
    )


def write_matrix(path, A) -> None:
    """Coordinate format: header ``matrix r c nnz`` then ``row col value``."""
    C = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"matrix {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row.tolist(), C.col.tolist(), C.data.tolist()):
            fh.write(f"{i} {j} {v!r}\n")


def read_matrix(path) -> sp.csr_matrix:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] != "matrix":
            raise ValueError("bad matrix header")
        r, c, nnz = int(head[1]), int(head[2]), int(head[3])
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if len(data) != nnz:
        raise ValueError("entry count does not match header")
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(r, c))
