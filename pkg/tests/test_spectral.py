import numpy as np
import pytest

from fembem.precond import PreconditionerHandle, build_diag, identity
from fembem.spectral import (
    SpectralError,
    cond2,
    cond2_estimate,
    cond_precond_sym,
    densify,
    generalized_eigenvalues,
    unpreconditioned_growth_bounds,
)


def _spd(n, seed=0):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    return G @ G.T / n + 0.1 * np.eye(n)


def _dense_handle(Pinv):
    return PreconditionerHandle(lambda u: Pinv @ u, len(Pinv))


def test_p_equal_b_gives_one():
    B = _spd(12)
    rep = cond_precond_sym(_dense_handle(np.linalg.inv(B)), B)
    assert rep.lam_min == pytest.approx(1.0, rel=1e-10)
    assert rep.lam_max == pytest.approx(1.0, rel=1e-10)
    assert rep.cond == pytest.approx(1.0, rel=1e-10)


def test_identity_with_diagonal_b():
    n = 9
    rep = cond_precond_sym(identity(n), np.diag(np.arange(1.0, n + 1)))
    assert rep.cond == pytest.approx(n, rel=1e-13)
    assert rep.n == n


def test_matches_unsymmetric_eigensolve():
    B = _spd(15, 1)
    Pinv = np.linalg.inv(_spd(15, 2))
    ref = np.sort(np.linalg.eigvals(Pinv @ B).real)
    assert np.allclose(generalized_eigenvalues(Pinv, B), ref, rtol=1e-10)


def test_permutation_invariance():
    B = _spd(20, 3)
    Pinv = np.linalg.inv(_spd(20, 4))
    perm = np.random.default_rng(5).permutation(20)
    a = cond_precond_sym(_dense_handle(Pinv), B).cond
    b = cond_precond_sym(_dense_handle(Pinv[np.ix_(perm, perm)]), B[np.ix_(perm, perm)]).cond
    assert b == pytest.approx(a, rel=1e-8)


def test_jacobi_equivalence():
    B = _spd(18, 6)
    d = np.sqrt(np.diag(B))
    ref = np.linalg.eigvalsh(B / d[:, None] / d[None])
    rep = cond_precond_sym(build_diag(B), B)
    assert rep.lam_min == pytest.approx(ref[0], rel=1e-10)
    assert rep.lam_max == pytest.approx(ref[-1], rel=1e-10)


def test_rejects_asymmetric_or_indefinite():
    with pytest.raises(SpectralError):
        densify(_dense_handle(np.array([[1.0, 0.5], [0.0, 1.0]])))
    with pytest.raises(SpectralError):
        generalized_eigenvalues(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SpectralError):
        generalized_eigenvalues(-np.eye(2), np.eye(2))


def test_cond2_estimate_trivial():
    assert cond2_estimate(np.eye(5)) == pytest.approx(1.0, rel=1e-15)
    assert cond2_estimate(np.diag([1.0, 10.0])) == pytest.approx(10.0, rel=1e-15)
    with pytest.raises(SpectralError):
        cond2_estimate(np.zeros((2, 2)))


def test_cond2_estimate_bounds_cond2():
    # sqrt(cond_1 cond_inf) and cond_2 agree up to the dimension factor
    A = np.random.default_rng(0).standard_normal((30, 30)) + 5 * np.eye(30)
    c, e = cond2(A), cond2_estimate(A)
    assert c / 30 <= e <= 30 * c


def test_growth_bounds_uniform():
    M, h = 40, 0.05
    alpha, _ = unpreconditioned_growth_bounds(M, h, h)
    assert alpha == pytest.approx(M * (1 + abs(np.log(M * h))), rel=1e-15)


def test_growth_bounds_graded():
    alpha, beta = unpreconditioned_growth_bounds(60, 0.1, 1e-5)
    assert beta <= alpha
