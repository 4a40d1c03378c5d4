"""Full GMRES in the inner product <x, y>_P = <P x, y>_2.

:func:`gmres_pfree` only ever applies P^{-1}: alongside the Krylov basis
V^i it keeps auxiliaries Vt^i with V^i = P^{-1} Vt^i, so every P-inner
product becomes a Euclidean one.  :func:`gmres_reference` is the literal
version with an explicit dense P, used as an oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

import numpy as np


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-6
    max_iter: Optional[int] = None   # default: problem dimension
    breakdown: float = 1e-14         # relative to ||R0||_P
    check_orthogonality: bool = False
    reorthogonalize: bool = False    # second Gram-Schmidt pass

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class GmresReport:
    x: np.ndarray
    iterations: int
    history: list            # ||R_k||_P / ||R_0||_P, k = 0..iterations
    reason: str              # converged | max_iters | breakdown
    orthogonality: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.reason in ("converged", "breakdown")

    @property
    def relres(self) -> float:
        return self.history[-1]


class GmresFailure(ArithmeticError):
    pass


def _as_apply(A) -> Callable:
    return A if callable(A) else (lambda v: A @ v)


class _Givens:
    """Incremental QR of the Hessenberg matrix."""

    def __init__(self, beta: float, K: int):
        self.c = np.zeros(K)
        self.s = np.zeros(K)
        self.g = np.zeros(K + 1)
        self.g[0] = beta
        self.R = np.zeros((K + 1, K))

    def add_column(self, h: np.ndarray, k: int) -> None:
        h = h.copy()
        for i in range(k):
            t = self.c[i] * h[i] + self.s[i] * h[i + 1]
            h[i + 1] = -self.s[i] * h[i] + self.c[i] * h[i + 1]
            h[i] = t
        r = np.hypot(h[k], h[k + 1])
        if r == 0.0:
            self.c[k], self.s[k] = 1.0, 0.0
        else:
            self.c[k], self.s[k] = h[k] / r, h[k + 1] / r
        h[k], h[k + 1] = r, 0.0
        self.g[k + 1] = -self.s[k] * self.g[k]
        self.g[k] = self.c[k] * self.g[k]
        self.R[: k + 2, k] = h[: k + 2]

    def solve(self, k: int) -> np.ndarray:
        """Least-squares coefficients for the first k+1 basis vectors."""
        R = self.R[: k + 1, : k + 1]
        y = np.zeros(k + 1)
        for i in range(k, -1, -1):
            y[i] = (self.g[i] - R[i, i + 1: k + 1] @ y[i + 1:]) / R[i, i]
        return y


def gmres_pfree(apply_A, apply_Pinv, F, U0=None, cfg: GmresConfig = GmresConfig(), trace: Optional[TextIO] = None) -> GmresReport:
    A = _as_apply(apply_A)
    Pinv = _as_apply(apply_Pinv)
    F = np.asarray(F, dtype=float)
    n = len(F)
    U0 = np.zeros(n) if U0 is None else np.asarray(U0, dtype=float).copy()
    K = min(cfg.max_iter or n, n)

    rt0 = F - A(U0)
    r0 = Pinv(rt0)
    beta2 = float(rt0 @ r0)
    if not np.isfinite(beta2) or beta2 < 0:
        raise GmresFailure("P^-1 is not positive definite or non-finite residual")
    beta = np.sqrt(beta2)
    hist = [1.0]
    _trace(trace, 0, 1.0)
    if beta == 0.0:
        return GmresReport(U0, 0, hist, "converged")
    Vt = [rt0 / beta]
    V = [r0 / beta]
    H = np.zeros((K + 1, K))
    giv = _Givens(beta, K)
    U = U0
    reason = "max_iters"
    for k in range(K):
        wt = A(V[k])
        for i in range(k + 1):
            H[i, k] = wt @ V[i]
            wt = wt - Vt[i] * H[i, k]
        if cfg.reorthogonalize:
            for i in range(k + 1):
                c = wt @ V[i]
                H[i, k] += c
                wt = wt - Vt[i] * c
        w = Pinv(wt)
        hk2 = float(wt @ w)
        if not np.isfinite(hk2):
            raise GmresFailure("non-finite Arnoldi vector")
        H[k + 1, k] = np.sqrt(max(hk2, 0.0))
        giv.add_column(H[: k + 2, k], k)
        y = giv.solve(k)
        U = U0 + np.column_stack(V) @ y
        rt = F - A(U)
        rel = np.sqrt(max(float(rt @ Pinv(rt)), 0.0)) / beta
        if not np.isfinite(rel):
            raise GmresFailure("non-finite residual")
        hist.append(float(rel))
        _trace(trace, k + 1, rel)
        if rel <= cfg.tol:
            reason = "converged"
            break
        if H[k + 1, k] <= cfg.breakdown * beta:
            reason = "breakdown"
            break
        if k + 1 < K:
            Vt.append(wt / H[k + 1, k])
            V.append(w / H[k + 1, k])
    orth = float("nan")
    if cfg.check_orthogonality:
        G = np.column_stack(Vt).T @ np.column_stack(V)
        orth = float(np.max(np.abs(G - np.eye(len(V)))))
    return GmresReport(U, len(hist) - 1, hist, reason, orth)


def gmres_reference(A: np.ndarray, P: np.ndarray, F, U0=None, cfg: GmresConfig = GmresConfig()) -> GmresReport:
    """Literal transcription with explicit P-inner products."""
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    if A.shape[0] > 2000:
        raise ValueError("reference GMRES is for desk-scale problems")
    F = np.asarray(F, dtype=float)
    n = len(F)
    U0 = np.zeros(n) if U0 is None else np.asarray(U0, dtype=float).copy()
    K = min(cfg.max_iter or n, n)
    ip = lambda x, y: float(x @ (P @ y))
    R0 = np.linalg.solve(P, F - A @ U0)
    beta = np.sqrt(ip(R0, R0))
    hist = [1.0]
    if beta == 0.0:
        return GmresReport(U0, 0, hist, "converged")
    V = [R0 / beta]
    H = np.zeros((K + 1, K))
    U = U0
    reason = "max_iters"
    for k in range(K):
        W = np.linalg.solve(P, A @ V[k])
        for i in range(k + 1):
            H[i, k] = ip(W, V[i])
            W = W - V[i] * H[i, k]
        if cfg.reorthogonalize:
            for i in range(k + 1):
                c = ip(W, V[i])
                H[i, k] += c
                W = W - V[i] * c
        H[k + 1, k] = np.sqrt(ip(W, W))
        e1 = np.zeros(k + 2)
        e1[0] = beta
        y = np.linalg.lstsq(H[: k + 2, : k + 1], e1, rcond=None)[0]
        U = U0 + np.column_stack(V) @ y
        R = np.linalg.solve(P, F - A @ U)
        rel = np.sqrt(ip(R, R)) / beta
        hist.append(float(rel))
        if rel <= cfg.tol:
            reason = "converged"
            break
        if H[k + 1, k] <= cfg.breakdown * beta:
            reason = "breakdown"
            break
        if k + 1 < K:
            V.append(W / H[k + 1, k])
    return GmresReport(U, len(hist) - 1, hist, reason)


def _trace(stream, k, rel):
    if stream is not None:
        stream.write(f"{k},{float(rel)!r}\n")


def write_trace(report: GmresReport, stream: TextIO) -> None:
    stream.write("k,relres_P\n")
    for k, r in enumerate(report.history):
        _trace(stream, k, r)
