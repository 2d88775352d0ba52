import numpy as np
import pytest

import graphslab as gs
from graphslab.errors import NumericError
from graphslab.linalg import (
    constrained_qp,
    degenerate_gaussian_logpdf,
    dlpa,
    dlpa_objective,
    logdet_w,
    wperp_basis,
)


def test_wperp_basis_orthogonality():
    rng = np.random.default_rng(0)
    w = rng.uniform(0.5, 2.0, size=7)
    B = wperp_basis(w).B
    assert B.shape == (7, 6)
    assert np.allclose(B.T @ B, np.eye(6), atol=1e-12)
    assert np.allclose(B.T @ w, 0.0, atol=1e-12)


def test_logdet_w_matches_dense_eigendecomposition():
    rng = np.random.default_rng(1)
    g = gs.complete(6)
    L = gs.laplacian(g, rng.uniform(0.1, 2.0, size=g.m))
    w = rng.uniform(0.5, 2.0, size=6)
    basis = wperp_basis(w)
    ref = np.linalg.slogdet(basis.B.T @ L @ basis.B)[1]
    assert abs(logdet_w(L, basis) - ref) < 1e-10


def test_constrained_qp_kkt():
    rng = np.random.default_rng(2)
    n, p, d = 8, 5, 2
    X = rng.normal(size=(n, p))
    y = rng.normal(size=(n, d))
    w = rng.uniform(0.5, 2.0, size=p)
    g = gs.complete(p)
    L = gs.laplacian(g, rng.uniform(0.1, 1.0, size=g.m))
    nu = 1.5
    alpha, theta = constrained_qp(y, X, w, nu, L)
    assert np.allclose(w @ theta, 0.0, atol=1e-8)
    # compare against a brute-force solve of the same QP per column
    B = wperp_basis(w).B
    for c in range(d):
        H = B.T @ (X.T @ X + L) @ B
        Xw = X @ w
        # block solve for (alpha_c, coords)
        A = np.block([[np.array([[Xw @ Xw + nu]]), (Xw @ X @ B)[None, :]],
                      [(B.T @ X.T @ Xw)[:, None], H]])
        rhs = np.concatenate([[Xw @ y[:, c]], B.T @ X.T @ y[:, c]])
        sol = np.linalg.solve(A, rhs)
        assert abs(alpha[c] - sol[0]) < 1e-8
        assert np.allclose(theta[:, c], B @ sol[1:], atol=1e-8)


def test_dlpa_matches_dense_and_objective():
    rng = np.random.default_rng(3)
    g1, g2 = gs.complete(6), gs.chain(5)
    L1 = gs.laplacian(g1, rng.uniform(0.1, 2.0, size=g1.m))
    L2 = gs.laplacian(g2, rng.uniform(0.1, 2.0, size=g2.m))
    y = rng.normal(size=(6, 5))
    theta = dlpa(y, L1, L2)
    A = np.eye(30) + np.kron(L1, np.eye(5)) + np.kron(np.eye(6), L2)
    ref = np.linalg.solve(A, y.ravel()).reshape(6, 5)
    assert np.linalg.norm(theta - ref) <= 1e-8 * max(1.0, np.linalg.norm(ref))
    assert dlpa_objective(theta, y, L1, L2) <= dlpa_objective(y, y, L1, L2)


def test_degenerate_gaussian_logpdf_basis_invariance():
    rng = np.random.default_rng(4)
    P = np.diag(rng.uniform(0.5, 2.0, size=4))
    V = rng.normal(size=(4, 2))
    mean = rng.normal(size=4)
    x = mean + V @ rng.normal(size=2)
    v1 = degenerate_gaussian_logpdf(x, mean, P, V)
    v2 = degenerate_gaussian_logpdf(x, mean, P, V @ rng.normal(size=(2, 2)) + 0.0)
    assert abs(v1 - v2) < 1e-8
    with pytest.raises(NumericError):
        degenerate_gaussian_logpdf(x + np.array([1.0, 0, 0, 0]) * 10, mean, P, V)
