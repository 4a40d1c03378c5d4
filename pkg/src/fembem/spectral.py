"""Dense spectral diagnostics for desk-scale systems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .precond import PreconditionerHandle


class SpectralError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SpectralReport:
    lam_min: float
    lam_max: float
    cond: float
    method: str
    n: int


def densify(P: PreconditionerHandle, check: bool = True) -> np.ndarray:
    Pinv = P.dense_inverse()
    if check:
        scale = np.max(np.abs(Pinv))
        asym = np.max(np.abs(Pinv - Pinv.T))
        if asym > 1e-12 * scale:
            raise SpectralError(f"P^-1 not symmetric (defect {asym / scale:.2e})")
    return 0.5 * (Pinv + Pinv.T)


def generalized_eigenvalues(Pinv: np.ndarray, B) -> np.ndarray:
    """Eigenvalues of P^{-1} B for SPD B and SPD P^{-1}, ascending.

    Both matrices are first scaled by D = diag(B); with B^ = R^T R the
    spectrum equals that of the symmetric matrix R P^^{-1} R^T.
    """
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    d = np.diag(B)
    if np.any(d <= 0):
        raise SpectralError("B has a non-positive diagonal entry")
    s = np.sqrt(d)
    Bh = B / s[:, None] / s[None, :]
    Ph = Pinv * s[:, None] * s[None, :]
    try:
        R = sla.cholesky(0.5 * (Bh + Bh.T), lower=False)
    except np.linalg.LinAlgError as exc:
        raise SpectralError("B is not positive definite") from exc
    T = R @ Ph @ R.T
    lam = sla.eigvalsh(0.5 * (T + T.T))
    if lam[0] <= 0:
        raise SpectralError("non-positive generalized eigenvalue: P^-1 not positive definite")
    return lam


def cond_precond_sym(P: PreconditionerHandle, B) -> SpectralReport:
    """cond of P^{-1} B, valid in both the B- and the P-inner product."""
    lam = generalized_eigenvalues(densify(P), B)
    return SpectralReport(float(lam[0]), float(lam[-1]), float(lam[-1] / lam[0]), "dense-cholesky", len(lam))


def cond2_estimate(A) -> float:
    """sqrt(cond_1(A) cond_1(A^T)) with exact dense inverse norms."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    try:
        Ainv = sla.inv(A, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SpectralError("singular matrix") from exc
    if not np.all(np.isfinite(Ainv)):
        raise SpectralError("singular matrix")
    c1 = np.linalg.norm(A, 1) * np.linalg.norm(Ainv, 1)
    cinf = np.linalg.norm(A, np.inf) * np.linalg.norm(Ainv, np.inf)
    return float(np.sqrt(c1 * cinf))


def cond2(A) -> float:
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1])


def unpreconditioned_growth_bounds(M: int, h_max: float, h_min: float) -> tuple[float, float]:
    """(alpha_L, beta_L): growth bounds for cond_2(A_V) and the diagonally
    scaled condition number."""
    alpha = M * (h_max / h_min) ** 2 * (1 + abs(np.log(M * h_max)))
    beta = M * (1 + abs(np.log(M * h_min))) * (1 + abs(np.log(h_min))) / (1 + abs(np.log(h_max)))
    return float(alpha), float(beta)
