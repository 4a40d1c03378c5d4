"""Stabilized Johnson-Nedelec, symmetric and Bielak-MacCamy systems.

Unknowns are U = (u, phi) with u the P1 coefficients (length N) and phi
the P0 coefficients (length M).  The stabilized matrices are the Galerkin
block matrix plus the rank-1 term S S^T, applied as S (S.U).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .kernels import DEFAULT_QUADRATURE, QuadratureConfig, dlp_potential_at
from .mesh import BoundaryMesh, VolumeMesh
from .operators import (
    GalerkinBlocks,
    boundary_load,
    volume_load,
)


class CouplingKind(str, enum.Enum):
    JN = "jn"
    SYM = "sym"
    BMC = "bmc"


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """[[TL, TR], [BL, BR]] + S S^T with right-hand side ``rhs``."""

    kind: CouplingKind
    stabilized: bool
    TL: sp.csr_matrix
    TR: sp.csr_matrix
    BL: sp.csr_matrix
    BR: np.ndarray
    S: np.ndarray
    rhs: np.ndarray
    blocks: Optional[GalerkinBlocks] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        N, M = self.TL.shape[0], self.BR.shape[0]
        shapes = [self.TL.shape == (N, N), self.TR.shape == (N, M), self.BL.shape == (M, N), self.BR.shape == (M, M)]
        if not all(shapes) or len(self.S) != N + M or len(self.rhs) != N + M:
            raise ValueError("block dimensions do not match")

    @property
    def N(self) -> int:
        return self.TL.shape[0]

    @property
    def M(self) -> int:
        return self.BR.shape[0]

    @property
    def shape(self):
        n = self.N + self.M
        return (n, n)

    def apply(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        if U.shape[0] != self.N + self.M:
            raise ValueError("dimension mismatch")
        u, p = U[: self.N], U[self.N:]
        out = np.concatenate([self.TL @ u + self.TR @ p, self.BL @ u + self.BR @ p])
        if self.stabilized:
            out = out + np.multiply.outer(self.S, self.S @ U)
        return out

    __matmul__ = apply

    def dense(self) -> np.ndarray:
        A = np.block([[self.TL.toarray(), self.TR.toarray()], [self.BL.toarray(), self.BR]])
        if self.stabilized:
            A += np.outer(self.S, self.S)
        return A

    def solve_dense(self) -> np.ndarray:
        return sla.solve(self.dense(), self.rhs)


def stabilization_vector(blocks: GalerkinBlocks, kind: CouplingKind) -> np.ndarray:
    """JN/symmetric: (colsum(M/2 - K), colsum(A_V)); BMC: (-colsum(M), colsum(A_V))."""
    E = blocks.E
    if CouplingKind(kind) is CouplingKind.BMC:
        s_b = -blocks.Mb.sum(axis=0)
    else:
        s_b = (0.5 * blocks.Mb - blocks.K).sum(axis=0)
    return np.concatenate([E @ s_b, blocks.A_V.sum(axis=0)])


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RhsParts:
    f_vol: np.ndarray        # <f, eta_z>  (N)
    phi0: np.ndarray         # <phi0, zeta_i>  (boundary nodes)
    u0_h: np.ndarray         # nodal interpolant of u0 at the boundary nodes
    compat: float            # <f, 1> + <phi0, 1>


def rhs_parts(mesh: VolumeMesh, bmesh: BoundaryMesh, problem, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> RhsParts:
    f = volume_load(mesh, problem.f)
    phi = boundary_load(bmesh, problem.phi0, problem.singular_points, cfg, with_normal=True)
    u0 = problem.u0(bmesh.nodes[bmesh.node_ids])
    return RhsParts(f, phi, u0, float(f.sum() + phi.sum()))


def build_system(
    kind,
    blocks: GalerkinBlocks,
    parts: Optional[RhsParts] = None,
    stabilized: bool = True,
) -> BlockSystem:
    kind = CouplingKind(kind)
    N, Mseg = blocks.N, blocks.M
    E = blocks.E
    Kf = blocks.K_full()
    Mf = blocks.M_full()
    if kind is CouplingKind.JN:
        TL, TR, BL = blocks.A_A, -Mf.T, 0.5 * Mf - Kf
    elif kind is CouplingKind.SYM:
        TL, TR, BL = blocks.A_A + blocks.W_full(), Kf.T - 0.5 * Mf.T, 0.5 * Mf - Kf
    else:
        TL, TR, BL = blocks.A_A, 0.5 * Mf.T - Kf.T, -Mf
    S = stabilization_vector(blocks, kind)
    if parts is None:
        rhs = np.zeros(N + Mseg)
        meta = {}
    else:
        fem = parts.f_vol + E @ parts.phi0
        if kind is CouplingKind.BMC:
            bem = -blocks.Mb @ parts.u0_h
        else:
            bem = (0.5 * blocks.Mb - blocks.K) @ parts.u0_h
        if kind is CouplingKind.SYM:
            fem = fem + E @ (blocks.A_W @ parts.u0_h)
        rhs = np.concatenate([fem, bem])
        if stabilized:
            rhs = rhs + bem.sum() * S  # <1, second equation data>
        meta = {"compatibility": parts.compat}
    return BlockSystem(
        kind, stabilized, sp.csr_matrix(TL), sp.csr_matrix(TR), sp.csr_matrix(BL), np.asarray(blocks.A_V), S, rhs, blocks, meta
    )


@dataclass(frozen=True, eq=False)
class PreconditioningForm:
    """diag(A_A [+ A_W] + s s^T, A_V)."""

    A_cal: sp.csr_matrix
    A_V: np.ndarray

    @property
    def N(self) -> int:
        return self.A_cal.shape[0]

    def dense(self) -> np.ndarray:
        return sla.block_diag(self.A_cal.toarray(), self.A_V)

    def fem_dense(self) -> np.ndarray:
        return self.A_cal.toarray()


def build_pform(blocks: GalerkinBlocks, symmetric: bool = False) -> PreconditioningForm:
    S = stabilization_vector(blocks, CouplingKind.JN)
    s = S[: blocks.N]
    sc = sp.csr_matrix(s.reshape(-1, 1))
    A = blocks.A_A + sc @ sc.T
    if symmetric:
        A = A + blocks.W_full()
    return PreconditioningForm(sp.csr_matrix(A), np.asarray(blocks.A_V))


def solutions_agree(u_stab: np.ndarray, u_nostab: np.ndarray, rtol: float = 1e-8) -> dict:
    diff = float(np.max(np.abs(u_stab - u_nostab)))
    scale = float(max(np.max(np.abs(u_stab)), 1e-300))
    return {"max_diff": diff, "relative": diff / scale, "agree": diff <= rtol * scale or diff == 0.0}


# --------------------------------------------------------------------------
# weakly-singular integral equation
# --------------------------------------------------------------------------


def weaksing_rhs(bmesh: BoundaryMesh, K: np.ndarray, Mb: np.ndarray, g) -> np.ndarray:
    """G = <psi_j, (1/2 + K) g_h> with g_h the nodal interpolant of g."""
    gh = g(bmesh.nodes[bmesh.node_ids])
    return (0.5 * Mb + K) @ gh


def weaksing_rhs_oracle(bmesh: BoundaryMesh, g, n_sub: int = 400, grade: float = 3.0) -> np.ndarray:
    """Same functional via graded midpoint sums of the pointwise double-layer
    potential on every segment (slow; for tests)."""
    gh = g(bmesh.nodes[bmesh.node_ids])
    A, B = bmesh.endpoints
    L = bmesh.lengths
    out = np.zeros(len(L))
    # graded towards both segment endpoints
    s = np.linspace(0.0, 1.0, n_sub + 1)
    half = np.where(s <= 0.5, 0.5 * (2 * s) ** grade, 1.0 - 0.5 * (2 * (1 - s)) ** grade)
    mids = 0.5 * (half[1:] + half[:-1])
    w = np.diff(half)
    for j in range(len(L)):
        x = A[j] + mids[:, None] * (B[j] - A[j])
        kg = dlp_potential_at(x, bmesh, gh)
        gx = gh[j] * (1 - mids) + gh[(j + 1) % len(L)] * mids
        out[j] = ((0.5 * gx + kg) @ w) * L[j]
    return out
