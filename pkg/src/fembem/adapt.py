"""Error indicators, marking and prolongation for the adaptive loop.

The boundary indicators are weighted residuals |T| ||r'||^2_{L2(T)} of
the boundary integral equation, with r' the arclength derivative.  They
are evaluated through the complex line integral

    int_T ds / (zeta - z) = conj(tau_T) Log((b - z) / (a - z)),

for which

    (V phi)'(z) = Re[tau_z sum_T phi_T int_T ds/(zeta - z)] / (2 pi),
    (K g)'(z)   = -Re[tau_z / (2 pi i) sum_T g'_T int_T ds/(zeta - z)].
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import gauss01
from .mesh import BoundaryMesh, MeshHierarchy, VolumeMesh, extend_hierarchy
from .operators import p1_gradients
from .precond import volume_prolongation


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """Squared indicators per volume triangle and per boundary segment."""

    volume: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        for a in (self.volume, self.boundary):
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("indicators must be finite and nonnegative")

    @property
    def total(self) -> float:
        return float(self.volume.sum() + self.boundary.sum())


# --------------------------------------------------------------------------
# boundary residual derivatives
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _both_ends_rule(order: int = 8, grading: float = 0.25, depth: int = 14):
    """Composite Gauss on [0, 1] graded geometrically towards both ends."""
    gx, gw = gauss01(order)
    bps = [0.5 * grading**k for k in range(depth)] + [0.0]
    ts, ws = [], []
    for hi, lo in zip(bps[:-1], bps[1:]):
        t = lo + (hi - lo) * gx
        ts += [t, 1.0 - t]
        ws += [(hi - lo) * gw, (hi - lo) * gw]
    t = np.concatenate(ts)
    w = np.concatenate(ws)
    order_ = np.argsort(t)
    return t[order_], w[order_]


def _cauchy_sums(z: np.ndarray, za: np.ndarray, zb: np.ndarray, tau: np.ndarray, own: np.ndarray) -> np.ndarray:
    """C[p, k] = int_{T_k} ds / (zeta - z_p); real (principal) part of the
    logarithm on the segment containing z_p."""
    ratio = (zb[None, :] - z[:, None]) / (za[None, :] - z[:, None])
    lg = np.log(ratio)
    lg[np.arange(len(z)), own] = np.log(np.abs(ratio[np.arange(len(z)), own]))
    return np.conj(tau)[None, :] * lg


def boundary_residual_derivative(bmesh: BoundaryMesh, phi, g, c_id: float, c_K: float, c_V: float, rule=None):
    """Values of c_id g' + c_K (K g)' + c_V (V phi)' at quadrature points.

    ``g`` holds nodal values at ``bmesh.node_ids`` (piecewise affine), ``phi``
    segment values (piecewise constant).  Returns (values (M, q), weights (q,)).
    """
    t, w = rule if rule is not None else _both_ends_rule()
    A, B = bmesh.endpoints
    L = bmesh.lengths
    M = len(L)
    za = A[:, 0] + 1j * A[:, 1]
    zb = B[:, 0] + 1j * B[:, 1]
    tau = (zb - za) / L
    g = np.asarray(g, dtype=float)
    phi = np.asarray(phi, dtype=float)
    dg = (np.roll(g, -1) - g) / L  # g' on each segment
    z = (za[:, None] + t[None, :] * (zb - za)[:, None]).reshape(-1)
    own = np.repeat(np.arange(M), len(t))
    tz = tau[own]
    out = c_id * dg[own]
    step = max(1, 2_000_000 // max(M, 1))  # bound the (points x segments) block
    for lo in range(0, len(z), step):
        sl = slice(lo, lo + step)
        C = _cauchy_sums(z[sl], za, zb, tau, own[sl])
        if c_V:
            out[sl] += c_V * np.real(tz[sl] * (C @ phi)) / (2 * np.pi)
        if c_K:
            out[sl] -= c_K * np.real(tz[sl] / (2j * np.pi) * (C @ dg))
    return out.reshape(M, len(t)), w


def _weighted_residual(bmesh, vals, w):
    L = bmesh.lengths
    return L * L * (vals**2 @ w)  # |T| * int_T r'^2 = |T|^2 * sum w r'^2


def estimate_weaksing(bmesh: BoundaryMesh, phi, g, rule=None) -> IndicatorField:
    """eta_T^2 = |T| ||(V phi - (1/2 + K) g_h)'||^2_{L2(T)}; ``g`` is either
    nodal values or a callable evaluated at the boundary nodes."""
    gh = g(bmesh.nodes[bmesh.node_ids]) if callable(g) else np.asarray(g, dtype=float)
    vals, w = boundary_residual_derivative(bmesh, phi, gh, -0.5, -1.0, 1.0, rule)
    return IndicatorField(np.zeros(0), _weighted_residual(bmesh, vals, w))


def _fem_residuals(mesh: VolumeMesh, u: np.ndarray, f, phi_flux=None, bmesh=None):
    """Volume residual terms h_T^2 ||f||^2 + sum_E h_E ||[du/dn]||^2 / 2
    (interior edges) + h_E ||flux residual||^2 (boundary edges)."""
    G = p1_gradients(mesh)
    grad = np.einsum("tia,ti->ta", G, u[mesh.triangles])
    area = mesh.areas
    hT = np.sqrt(area)
    eta = np.zeros(mesh.n_triangles)
    if f is not None:
        c = mesh.nodes[mesh.triangles].mean(axis=1)
        eta += hT**2 * np.asarray(f(c)) ** 2 * area
    edges, emap = mesh.edges()
    el = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    # outward normal of local edge i of each triangle
    p = mesh.nodes[mesh.triangles]
    d = np.roll(p, -1, axis=1) - p
    n = np.stack([d[..., 1], -d[..., 0]], axis=-1) / np.linalg.norm(d, axis=-1)[..., None]
    flux = np.einsum("ta,tia->ti", grad, n)  # A = I; (m, 3)
    jump = np.zeros(len(edges))
    np.add.at(jump, emap.reshape(-1), flux.reshape(-1))
    count = np.bincount(emap.reshape(-1), minlength=len(edges))
    interior = count == 2
    eterm = np.where(interior, el * el * jump**2, 0.0)  # h_E * ||[.]||^2 with constant jump
    eta += 0.5 * eterm[emap].sum(axis=1)
    if phi_flux is not None:
        # boundary edge residual: (grad u).n - phi_flux, phi_flux(edge id)
        bnd_mask = ~interior
        for tri, loc in zip(*np.nonzero(bnd_mask[emap])):
            e = emap[tri, loc]
            r = phi_flux(e, flux[tri, loc])
            eta[tri] += el[e] ** 2 * r
    return eta


def estimate_coupling(
    mesh: VolumeMesh,
    bmesh: BoundaryMesh,
    u: np.ndarray,
    phi: np.ndarray,
    problem,
    kind: str = "jn",
    rule=None,
) -> IndicatorField:
    """Residual indicators for the coupled problem.

    Volume: h_T^2 ||f||^2 + interior flux jumps and, for JN/symmetric, the
    boundary conormal residual h_E ||du_h/dn - phi_h - phi0||^2.
    Boundary: |T| ||((1/2 - K)(u_h - u0_h) - V phi_h)'||^2 (JN/symmetric) or
    |T| ||(u_h - u0_h - V phi_h)'||^2 (Bielak-MacCamy).
    """
    bids = bmesh.node_ids
    gres = u[bids] - problem.u0(bmesh.nodes[bids])
    segpos = {}
    for k, (a, b) in enumerate(bmesh.segments.tolist()):
        segpos[(min(a, b), max(a, b))] = k
    edges, _ = mesh.edges()
    A, B = bmesh.endpoints
    nrm = bmesh.normals
    tq, wq = gauss01(8)

    cache = {}

    def flux(e, dudn):
        k = segpos[tuple(edges[e])]
        if k not in cache:
            x = A[k] + tq[:, None] * (B[k] - A[k])
            cache[k] = problem.phi0(x, nrm[k])
        r = dudn - phi[k] - cache[k]
        return float((r**2) @ wq)  # mean square over the edge

    eta_v = _fem_residuals(mesh, u, problem.f, None if kind == "bmc" else flux, bmesh)
    if kind == "bmc":
        vals, w = boundary_residual_derivative(bmesh, phi, gres, 1.0, 0.0, -1.0, rule)
    else:
        vals, w = boundary_residual_derivative(bmesh, phi, gres, 0.5, -1.0, -1.0, rule)
    return IndicatorField(eta_v, _weighted_residual(bmesh, vals, w))


# --------------------------------------------------------------------------
# marking
# --------------------------------------------------------------------------


def mark_doerfler(eta2, theta: float = 0.5) -> np.ndarray:
    """Minimal set with sum eta2[marked] >= theta * sum eta2 (greedy by
    decreasing value, ties by lower id)."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    eta2 = np.asarray(eta2, dtype=float)
    if eta2.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta2)), -eta2))
    cs = np.cumsum(eta2[order])
    total = cs[-1]
    if total <= 0:
        return np.zeros(0, dtype=np.int64)
    k = int(np.searchsorted(cs, theta * total, side="left")) + 1
    k = min(k, int(np.count_nonzero(eta2 > 0)))
    return np.sort(order[:k])


def mark_doerfler_field(ind: IndicatorField, theta: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    nv = len(ind.volume)
    ids = mark_doerfler(np.concatenate([ind.volume, ind.boundary]), theta)
    return ids[ids < nv], ids[ids >= nv] - nv


def mark_corner(mesh: VolumeMesh | None, bmesh: BoundaryMesh, corner=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """All triangles and segments having ``corner`` as a vertex."""
    X = bmesh.nodes
    hit = np.nonzero(np.all(X == np.asarray(corner, dtype=float), axis=1))[0]
    if len(hit) != 1:
        raise ValueError("corner is not a mesh vertex")
    z = int(hit[0])
    vol = np.zeros(0, dtype=np.int64)
    if mesh is not None:
        vol = np.nonzero(np.any(mesh.triangles == z, axis=1))[0]
    bnd = np.nonzero(np.any(bmesh.segments == z, axis=1))[0]
    return vol, bnd


def mark_all(mesh: VolumeMesh | None, bmesh: BoundaryMesh):
    vol = np.arange(mesh.n_triangles) if mesh is not None else np.zeros(0, dtype=np.int64)
    return vol, np.arange(bmesh.n_segments)


# --------------------------------------------------------------------------
# prolongation of discrete solutions
# --------------------------------------------------------------------------


def prolongate(h: MeshHierarchy, u_prev, phi_prev):
    """Coarse (level L-1) solution expressed on level L: nodal interpolation
    for P1, inheritance for P0."""
    phi = None
    if phi_prev is not None:
        phi = np.asarray(phi_prev)[h.boundary_parents[-1]]
    u = None
    if u_prev is not None:
        vols = h.volumes
        P = volume_prolongation(vols[-2].n_nodes, vols[-1].node_parents)
        u = P @ np.asarray(u_prev)
    return u, phi


# --------------------------------------------------------------------------
# level loop
# --------------------------------------------------------------------------


def adaptive_loop(h: MeshHierarchy, step, max_levels: int, on_record=None):
    """Run ``step`` on levels 0..max_levels, refining in between.

    ``step(h, level, prev)`` returns ``(record, (marked_vol, marked_bnd), state)``
    where ``state`` is handed to the next call (e.g. for prolongated initial
    guesses).  Returns the final hierarchy and the list of records.
    """
    if max_levels < 0:
        raise ValueError("max_levels must be >= 0")
    records, state = [], None
    for level in range(max_levels + 1):
        rec, marks, state = step(h, level, state)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        if level == max_levels:
            break
        h = extend_hierarchy(h, *marks)
    return h, records
