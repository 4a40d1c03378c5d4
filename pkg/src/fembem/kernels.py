"""Quadrature for the 2D Laplace single- and double-layer kernels.

G(x, y) = -log|x - y| / (2 pi),  d_n(y) G(x, y) = (x - y).n(y) / (2 pi |x - y|^2).

Inner integrals over a straight segment are done in closed form when the
evaluation point is close to the segment and by Gauss quadrature otherwise;
the closed forms lose digits proportional to distance / length.  Outer
integrals over a segment use plain Gauss for well-separated pairs and
geometrically graded composite Gauss towards the closest point otherwise,
which resolves the x log x behaviour at shared vertices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

INV_2PI = 1.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class QuadratureConfig:
    order: int = 16             # outer / far-field Gauss order
    tol: float = 1e-12          # relative accuracy target
    far_ratio: float = 0.5      # tensor Gauss when dist > far_ratio * longer length
    grading: float = 0.25       # geometric grading factor of near-field outer rules
    graded_order: int = 16      # Gauss order per graded sub-interval
    min_width: float = 1e-11    # innermost graded width relative to segment length
    near_ratio: float = 1.0     # max sub-interval length / distance to the other segment

    def __post_init__(self):
        if self.order < 2 or self.graded_order < 2:
            raise ValueError("Gauss order must be >= 2")
        if not 0 < self.grading < 1:
            raise ValueError("grading must lie in (0, 1)")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_points(cls, a, b, outward=True) -> "Segment":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = b - a
        L = float(np.hypot(*d))
        if L == 0.0:
            raise ValueError("zero-length segment")
        n = np.array([d[1], -d[0]]) / L
        return cls(a, b, n if outward else -n)

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.b - self.a)))


@lru_cache(maxsize=None)
def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


# --------------------------------------------------------------------------
# geometry helpers
# --------------------------------------------------------------------------


def _point_segment(x, a, b):
    """Distance of points x (k, 2) to segment [a, b] and projection params."""
    d = b - a
    L2 = d @ d
    s = np.clip((x - a) @ d / L2, 0.0, 1.0)
    return np.linalg.norm(x - (a + s[:, None] * d), axis=1), s


def segment_distance(a, b, c, e) -> tuple[float, float]:
    """Distance between non-crossing segments [a, b] and [c, e] and the
    parameter on [a, b] of a closest point."""
    d1, s1 = _point_segment(np.array([c, e]), a, b)
    d2, _ = _point_segment(np.array([a, b]), c, e)
    cand = [(d1[0], s1[0]), (d1[1], s1[1]), (d2[0], 0.0), (d2[1], 1.0)]
    d, s = min(cand, key=lambda z: (z[0], z[1]))
    return float(d), float(s)


def outer_rule(a, b, c, e, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Quadrature points/weights on [a, b] for an integrand that is smooth
    except near segment [c, e]."""
    L = float(np.hypot(*(b - a)))
    Lt = float(np.hypot(*(e - c)))
    dist, tstar = segment_distance(a, b, c, e)
    if dist > cfg.far_ratio * max(L, Lt):
        t, w = gauss01(cfg.order)
    else:
        t, w = near_rule01(a, b, c, e, tstar, dist, cfg)
    return a + t[:, None] * (b - a), w * L


def graded01(tstar: float, drel: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Composite Gauss on [0, 1] graded geometrically towards ``tstar``."""
    gx, gw = gauss01(cfg.graded_order)
    stop = max(0.5 * drel, cfg.min_width)
    ts, ws = [], []
    for side in (1.0 - tstar, tstar):
        if side <= 0.0:
            continue
        sign = 1.0 if side == 1.0 - tstar else -1.0
        bps = [side]
        w = side
        while w > stop:
            w *= cfg.grading
            bps.append(w)
        bps.append(0.0)
        for hi, lo in zip(bps[:-1], bps[1:]):
            ts.append(tstar + sign * (lo + (hi - lo) * gx))
            ws.append((hi - lo) * gw)
    return np.concatenate(ts), np.concatenate(ws)


def near_rule01(a, b, c, e, tstar: float, dist: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Graded rule on [0, 1] for [a, b] near [c, e], with sub-intervals
    bisected until their length is at most ``near_ratio`` times their
    distance to [c, e].  Handles nearly parallel pairs where the
    near-singularity is spread along the segment."""
    gx, gw = gauss01(cfg.graded_order)
    d = b - a
    L = float(np.hypot(*d))
    stop = max(0.5 * dist / L, cfg.min_width)
    stack = []
    for side, sign in ((1.0 - tstar, 1.0), (tstar, -1.0)):
        if side <= 0.0:
            continue
        bps = [side]
        w = side
        while w > stop:
            w *= cfg.grading
            bps.append(w)
        bps.append(0.0)
        stack += [tuple(sorted((tstar + sign * lo, tstar + sign * hi))) for hi, lo in zip(bps[:-1], bps[1:])]
    ts, ws = [], []
    while stack:
        lo, hi = stack.pop()
        width = hi - lo
        if width > 2.0 * stop and width * L > cfg.near_ratio * segment_distance(a + lo * d, a + hi * d, c, e)[0]:
            mid = 0.5 * (lo + hi)
            stack += [(lo, mid), (mid, hi)]
            continue
        ts.append(lo + width * gx)
        ws.append(width * gw)
    return np.concatenate(ts), np.concatenate(ws)


def _local(x, p, q):
    d = q - p
    L = float(np.hypot(*d))
    tau = d / L
    n = np.array([tau[1], -tau[0]])
    r = x - p
    return L, r @ tau, r @ n


# --------------------------------------------------------------------------
# inner integrals
# --------------------------------------------------------------------------


def slp_inner(x, p, q, order: int = 16) -> np.ndarray:
    """int_[p,q] log|x - y| dy for points x (k, 2)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    L, s0, h = _local(x, p, q)
    dist, _ = _point_segment(x, p, q)
    out = np.empty(len(x))
    far = dist > L
    if np.any(far):
        t, w = gauss01(order)
        y = p + t[:, None] * (q - p)
        r = np.linalg.norm(x[far, None, :] - y[None], axis=2)
        out[far] = np.log(r) @ w * L
    nr = ~far
    if np.any(nr):
        s, hh = s0[nr], h[nr]
        u1, u2 = -s, L - s
        r1sq, r2sq = u1 * u1 + hh * hh, u2 * u2 + hh * hh
        t1 = np.where(r1sq > 0, 0.5 * u1 * np.log(np.where(r1sq > 0, r1sq, 1.0)), 0.0)
        t2 = np.where(r2sq > 0, 0.5 * u2 * np.log(np.where(r2sq > 0, r2sq, 1.0)), 0.0)
        theta = np.arctan2(L * hh, hh * hh + u1 * u2)
        out[nr] = t2 - t1 - L + hh * theta
    return out


def dlp_inner(x, p, q, normal=None, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """int_[p,q] (x - y).n / |x - y|^2 * lambda(y) dy for the two affine
    shape functions (lambda_p, lambda_q) of the segment.

    Points lying inside the open segment return the principal value 0.
    ``normal`` defaults to the outward normal of a ccw boundary.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    L, s0, h = _local(x, p, q)
    sign = 1.0
    if normal is not None:
        d = (q - p) / L
        sign = float(np.sign(np.asarray(normal) @ np.array([d[1], -d[0]])))
    dist, _ = _point_segment(x, p, q)
    ip = np.empty(len(x))
    iq = np.empty(len(x))
    far = dist > L
    if np.any(far):
        t, w = gauss01(order)
        y = p + t[:, None] * (q - p)
        diff = x[far, None, :] - y[None]
        nn = np.array([(q - p)[1], -(q - p)[0]]) / L
        ker = (diff @ nn) / np.einsum("ijk,ijk->ij", diff, diff) * (w * L)
        iq[far] = ker @ t
        ip[far] = ker @ (1.0 - t)
    nr = ~far
    if np.any(nr):
        s, hh = s0[nr], h[nr]
        u1, u2 = -s, L - s
        r1sq, r2sq = u1 * u1 + hh * hh, u2 * u2 + hh * hh
        on = np.abs(hh) <= 1e-14 * L
        theta = np.where(on, 0.0, np.arctan2(L * hh, hh * hh + u1 * u2))
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(on, 0.0, 0.5 * np.log(r2sq / r1sq))
        i1 = hh * lg + s * theta
        iq[nr] = i1 / L
        ip[nr] = theta - i1 / L
    return sign * ip, sign * iq


# --------------------------------------------------------------------------
# pair integrals
# --------------------------------------------------------------------------


def _seg_key(s: Segment):
    return (s.length, tuple(s.a), tuple(s.b))


def slp_self(L: float) -> float:
    """int_T int_T G for a segment of length L."""
    return INV_2PI * L * L * (1.5 - np.log(L))


def slp_pair_integral(s: Segment, t: Segment, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """int_s int_t G(x, y) dy dx; exactly symmetric in (s, t)."""
    if s.length == 0.0 or t.length == 0.0:
        raise ValueError("zero-length segment")
    if _same(s, t):
        return slp_self(s.length)
    if _seg_key(t) < _seg_key(s):
        s, t = t, s
    return _slp_pair(s.a, s.b, t.a, t.b, cfg)


def _same(s: Segment, t: Segment) -> bool:
    return (np.array_equal(s.a, t.a) and np.array_equal(s.b, t.b)) or (
        np.array_equal(s.a, t.b) and np.array_equal(s.b, t.a)
    )


def _slp_pair(a, b, c, e, cfg):
    # outer over the shorter segment [a, b], inner over [c, e]
    L = float(np.hypot(*(b - a)))
    Lt = float(np.hypot(*(e - c)))
    dist, tstar = segment_distance(a, b, c, e)
    if dist > cfg.far_ratio * max(L, Lt):
        t, w = gauss01(cfg.order)
        x = a + t[:, None] * (b - a)
        y = c + t[:, None] * (e - c)
        r = np.linalg.norm(x[:, None, :] - y[None], axis=2)
        return float(-INV_2PI * (w @ np.log(r) @ w) * L * Lt)
    t, w = near_rule01(a, b, c, e, tstar, dist, cfg)
    x = a + t[:, None] * (b - a)
    return float(-INV_2PI * (slp_inner(x, c, e, cfg.order) @ w) * L)


def dlp_pair_integral(t: Segment, s: Segment, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> tuple[float, float]:
    """int_t (K lambda)(x) dx for the two hat pieces lambda_a, lambda_b
    supported on segment s (value 1 at s.a resp. s.b)."""
    if t.length == 0.0 or s.length == 0.0:
        raise ValueError("zero-length segment")
    if _same(s, t):
        return 0.0, 0.0
    x, w = outer_rule(t.a, t.b, s.a, s.b, cfg)
    ip, iq = dlp_inner(x, s.a, s.b, s.normal, cfg.order)
    return float(INV_2PI * (ip @ w)), float(INV_2PI * (iq @ w))


def dlp_potential_at(x, bmesh, g, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Principal value (K g)(x) for points x on the boundary (never at a
    node) and a piecewise-affine g given by its values at the boundary
    nodes (``g[i]`` belongs to ``bmesh.node_ids[i]``)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = np.asarray(g, dtype=float)
    A, B = bmesh.endpoints
    normals = bmesh.normals
    M = bmesh.n_segments
    for k in range(M):
        dk, _ = _point_segment(x, A[k], B[k])
        if np.any(dk == 0.0):
            ends = np.minimum(np.linalg.norm(x - A[k], axis=1), np.linalg.norm(x - B[k], axis=1))
            if np.any((dk == 0.0) & (ends == 0.0)):
                raise ValueError("evaluation point coincides with a boundary node")
    out = np.zeros(len(x))
    for k in range(M):
        ip, iq = dlp_inner(x, A[k], B[k], normals[k], cfg.order)
        out += g[k] * ip + g[(k + 1) % M] * iq
    return INV_2PI * out
