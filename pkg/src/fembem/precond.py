"""Local multilevel additive Schwarz preconditioners and comparators.

Every preconditioner is exposed only through ``apply_inverse``.  The
multilevel ones are sums of one-dimensional diagonal scalings,

    P_A^{-1} = sum_l I_l D_l^{-1} I_l^T,
    P_V^{-1} = 1 D^{-1} 1^T + sum_l C_l D_l^{-1} C_l^T,

where the columns of I_l are level-l hats and the columns of C_l are
level-l Haar functions, both written in the finest basis and restricted to
the level increment (MLAS) or to the new nodes (hierarchical basis).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .mesh import MeshHierarchy


@dataclass(frozen=True, eq=False)
class PreconditionerHandle:
    apply: Callable[[np.ndarray], np.ndarray]
    dim: int
    symmetric: bool = True
    name: str = ""
    meta: dict = field(default_factory=dict)

    def apply_inverse(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.dim:
            raise ValueError(f"expected leading dimension {self.dim}, got {u.shape[0]}")
        return self.apply(u)

    def dense_inverse(self) -> np.ndarray:
        return self.apply_inverse(np.eye(self.dim))


def _sum_terms(terms, extra=None):
    def apply(u):
        out = np.zeros_like(u, dtype=float) if extra is None else extra(u)
        for C, d in terms:  # fixed level order
            y = C.T @ u
            y = y / (d if y.ndim == 1 else d[:, None])
            out = out + C @ y
        return out

    return apply


# --------------------------------------------------------------------------
# level embeddings
# --------------------------------------------------------------------------


def volume_prolongation(n_coarse: int, parents_fine: np.ndarray) -> sp.csr_matrix:
    """Two-level P1 prolongation (N_fine x N_coarse) for persistent ids."""
    n_fine = len(parents_fine)
    rows = list(range(n_coarse))
    cols = list(range(n_coarse))
    vals = [1.0] * n_coarse
    for z in range(n_coarse, n_fine):
        a, b = parents_fine[z]
        if not (0 <= a < n_coarse and 0 <= b < n_coarse):
            raise ValueError("new node must bisect an edge of the coarse mesh")
        rows += [z, z]
        cols += [int(a), int(b)]
        vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_fine, n_coarse))


def volume_embeddings(h: MeshHierarchy) -> list[sp.csr_matrix]:
    """I^l (N_L x N_l): level-l hats in the finest basis."""
    vols = h.volumes
    L = len(vols) - 1
    out = [None] * (L + 1)
    out[L] = sp.identity(vols[L].n_nodes, format="csr")
    for l in range(L - 1, -1, -1):
        P = volume_prolongation(vols[l].n_nodes, vols[l + 1].node_parents)
        out[l] = (out[l + 1] @ P).tocsr()
    return out


def boundary_embeddings(h: MeshHierarchy) -> list[sp.csr_matrix]:
    """J^l (M_L x M_l): P0 prolongation, one unit entry per fine segment."""
    L = h.n_levels - 1
    ML = h.boundaries[L].n_segments
    out = [None] * (L + 1)
    out[L] = sp.identity(ML, format="csr")
    owner = np.arange(ML)
    for l in range(L - 1, -1, -1):
        owner = h.boundary_parents[l][owner]
        out[l] = sp.csr_matrix((np.ones(ML), (np.arange(ML), owner)), shape=(ML, h.boundaries[l].n_segments))
    return out


def local_haar(bmesh, node_ids: Sequence[int]) -> sp.csr_matrix:
    """Haar columns chi_z (M_l x |ids|) for the given persistent node ids."""
    pos = {int(z): i for i, z in enumerate(bmesh.node_ids.tolist())}
    L = bmesh.lengths
    M = len(L)
    rows, cols, vals = [], [], []
    for c, z in enumerate(node_ids):
        i = pos[int(z)]
        rows += [(i - 1) % M, i]
        cols += [c, c]
        vals += [1.0 / L[(i - 1) % M], -1.0 / L[i]]
    return sp.csr_matrix((vals, (rows, cols)), shape=(M, len(node_ids)))


def _node_sets(h: MeshHierarchy, which: str, hb: bool):
    key = ("new_" if hb else "") + which
    sets = [np.asarray(getattr(inc, key)) for inc in h.increments]
    if hb:
        # level 0 keeps all nodes
        sets[0] = np.asarray(getattr(h.increments[0], which))
    return sets


def _diag_quadratic(C: sp.csr_matrix, A) -> np.ndarray:
    AC = A @ C
    if sp.issparse(AC):
        return np.asarray(C.multiply(AC).sum(axis=0)).ravel()
    return np.asarray(C.multiply(np.asarray(AC)).sum(axis=0)).ravel()


# --------------------------------------------------------------------------
# FEM part
# --------------------------------------------------------------------------


def build_mlas_fem(h: MeshHierarchy, A_cal, hb: bool = False, embeddings=None) -> PreconditionerHandle:
    """P_A^{-1} with D_l = diag(I_l^T A_cal I_l) on the level increments.

    ``A_cal`` is the finest-level 𝒜-matrix (stiffness + stabilization, plus
    A_W for the symmetric coupling); nestedness makes I_l^T A_cal I_l the
    level-l Galerkin matrix exactly.
    """
    if not h.coupled:
        raise ValueError("hierarchy has no volume meshes")
    if len(h.increments) != h.n_levels:
        raise ValueError("missing increments")
    I = embeddings if embeddings is not None else volume_embeddings(h)
    sets = _node_sets(h, "volume", hb)
    A_cal = sp.csr_matrix(A_cal)
    terms = []
    for l, ids in enumerate(sets):
        if len(ids) == 0:
            continue
        C = I[l][:, ids].tocsc()
        d = _diag_quadratic(C, A_cal)
        if np.any(d <= 0):
            raise ValueError(f"non-positive diagonal on level {l}")
        terms.append((C, d))
    return PreconditionerHandle(_sum_terms(terms), A_cal.shape[0], True, "hb_fem" if hb else "mlas_fem",
                                {"levels": len(terms), "sizes": [len(s) for s in sets]})


# --------------------------------------------------------------------------
# BEM part
# --------------------------------------------------------------------------


def haar_diagonal(bmesh, node_ids, A_V_level: np.ndarray) -> np.ndarray:
    """<V chi_z, chi_z> from the 2x2 blocks of the level single-layer matrix."""
    pos = {int(z): i for i, z in enumerate(bmesh.node_ids.tolist())}
    L = bmesh.lengths
    M = len(L)
    out = np.empty(len(node_ids))
    for c, z in enumerate(node_ids):
        i = pos[int(z)]
        p = (i - 1) % M
        a, b = 1.0 / L[p], -1.0 / L[i]
        out[c] = a * a * A_V_level[p, p] + 2 * a * b * A_V_level[p, i] + b * b * A_V_level[i, i]
    return out


def build_mlas_slp(
    h: MeshHierarchy,
    A_V: np.ndarray,
    level_slp: Optional[Sequence[np.ndarray]] = None,
    hb: bool = False,
) -> PreconditionerHandle:
    """P_V^{-1} on the finest boundary mesh.

    Level matrices default to J_l^T A_V J_l (exact by nestedness);
    ``level_slp`` supplies separately assembled ones.
    """
    J = boundary_embeddings(h)
    sets = _node_sets(h, "boundary", hb)
    ML = A_V.shape[0]
    terms = []
    for l, ids in enumerate(sets):
        if len(ids) == 0:
            continue
        bm = h.boundaries[l]
        Vl = level_slp[l] if level_slp is not None else (J[l].T @ (J[l].T @ A_V).T)
        d = haar_diagonal(bm, ids, np.asarray(Vl))
        if np.any(d <= 0):
            raise ValueError(f"non-positive Haar diagonal on level {l}")
        C = (J[l] @ local_haar(bm, ids)).tocsc()
        terms.append((C, d))
    one = np.ones(ML)
    D = float(one @ A_V @ one)

    def const(u):
        y = one @ u
        return np.multiply.outer(one, y) / D

    return PreconditionerHandle(_sum_terms(terms, const), ML, True, "hb_slp" if hb else "mlas_slp",
                                {"D": D, "levels": len(terms), "sizes": [len(s) for s in sets]})


def build_hb(h: MeshHierarchy, which: str, matrix, level_slp=None) -> PreconditionerHandle:
    if which == "fem":
        return build_mlas_fem(h, matrix, hb=True)
    if which == "slp":
        return build_mlas_slp(h, matrix, level_slp, hb=True)
    raise ValueError("which must be 'fem' or 'slp'")


# --------------------------------------------------------------------------
# simple ones
# --------------------------------------------------------------------------


def build_diag(matrix) -> PreconditionerHandle:
    d = np.asarray(matrix.diagonal() if sp.issparse(matrix) else np.diag(matrix), dtype=float)
    if np.any(d <= 0):
        raise ValueError("non-positive diagonal entry")

    def apply(u):
        return u / (d if u.ndim == 1 else d[:, None])

    return PreconditionerHandle(apply, len(d), True, "diag")


def identity(n: int) -> PreconditionerHandle:
    return PreconditionerHandle(lambda u: u.copy(), n, True, "none")


def compose_block(P_fem: PreconditionerHandle, P_slp: PreconditionerHandle) -> PreconditionerHandle:
    N = P_fem.dim

    def apply(u):
        return np.concatenate([P_fem.apply_inverse(u[:N]), P_slp.apply_inverse(u[N:])], axis=0)

    return PreconditionerHandle(apply, N + P_slp.dim, P_fem.symmetric and P_slp.symmetric,
                                f"{P_fem.name}+{P_slp.name}")
