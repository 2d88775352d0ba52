"""Shared linear-algebra kernels: grounded bases, restricted log-determinants,
equality-constrained quadratic programs, degenerate Gaussians, and the
two-block Dykstra proximal solver for separable matrix penalties."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericError

__all__ = [
    "WperpBasis",
    "wperp_basis",
    "logdet_w",
    "constrained_qp",
    "constrained_qp_general",
    "dlpa",
    "degenerate_gaussian_logpdf",
]


@dataclass(frozen=True)
class WperpBasis:
    """Orthonormal basis B (p x (p-1)) of the hyperplane {x : w^T x = 0}."""

    w: np.ndarray
    B: np.ndarray


def wperp_basis(w) -> WperpBasis:
    """Deterministic orthonormal basis of w-perp via a Householder reflection
    mapping w/||w|| onto +-e1; the remaining reflector columns span w-perp."""
    w = np.asarray(w, dtype=float)
    p = w.shape[0]
    nrm = np.linalg.norm(w)
    if nrm == 0:
        raise NumericError("zero grounding vector")
    x = w / nrm
    v = x.copy()
    v[0] += math.copysign(1.0, x[0]) if x[0] != 0 else 1.0
    vn2 = v @ v
    H = np.eye(p) - 2.0 * np.outer(v, v) / vn2
    return WperpBasis(w=w, B=H[:, 1:])


def logdet_w(L, basis: WperpBasis) -> float:
    """log det of L restricted to w-perp: log det(B^T L B), computed in log
    space by Cholesky. Returns -inf when the restriction is singular."""
    M = basis.B.T @ np.asarray(L, dtype=float) @ basis.B
    if M.shape[0] == 0:
        return 0.0
    try:
        c = sla.cholesky(M, lower=True)
    except sla.LinAlgError:
        return -np.inf
    d = np.diag(c)
    if np.any(d <= 0):
        return -np.inf
    return float(2.0 * np.sum(np.log(d)))


def constrained_qp_general(y, offset_dir, M, L, g, nu):
    """Minimize ||y - offset_dir a^T - M T||_F^2 + nu ||a||^2 + tr(T^T L T)
    over a (length-d) and T (s x d) subject to g^T T = 0.

    Solved exactly by one KKT system shared across response columns.
    nu = inf clamps a = 0; nu = 0 is the flat limit (term dropped).
    Raises NumericError on a singular KKT system."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[0] == 1 and np.asarray(offset_dir).shape[0] != 1:
        y = y.T
    n, d = y.shape
    c = np.asarray(offset_dir, dtype=float).reshape(n)
    M = np.asarray(M, dtype=float)
    s = M.shape[1]
    g = np.asarray(g, dtype=float).reshape(s)
    L = np.asarray(L, dtype=float)

    MtM = M.T @ M + L
    Mty = M.T @ y
    if np.isinf(nu):
        K = np.zeros((s + 1, s + 1))
        K[:s, :s] = MtM
        K[:s, s] = g
        K[s, :s] = g
        rhs = np.zeros((s + 1, d))
        rhs[:s] = Mty
        try:
            sol = sla.solve(K, rhs)
        except sla.LinAlgError as exc:
            raise NumericError(f"singular KKT system: {exc}") from exc
        return np.zeros(d), sol[:s]
    K = np.zeros((s + 2, s + 2))
    K[0, 0] = nu + c @ c
    K[0, 1 : s + 1] = c @ M
    K[1 : s + 1, 0] = M.T @ c
    K[1 : s + 1, 1 : s + 1] = MtM
    K[1 : s + 1, s + 1] = g
    K[s + 1, 1 : s + 1] = g
    rhs = np.zeros((s + 2, d))
    rhs[0] = c @ y
    rhs[1 : s + 1] = Mty
    try:
        sol = sla.solve(K, rhs)
    except sla.LinAlgError as exc:
        raise NumericError(f"singular KKT system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericError("singular KKT system: non-finite solution")
    return sol[0], sol[1 : s + 1]


def constrained_qp(y, X, w, nu, L_q):
    """Exact minimizer of F(alpha, theta) = ||y - X(w alpha^T + theta)||_F^2
    + nu ||alpha||^2 + tr(theta^T L_q theta) subject to w^T theta = 0.

    Supports d response columns (y is n x d); returns (alpha, theta)."""
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    return constrained_qp_general(y, X @ w, X, L_q, w, nu)


def dlpa(y_centered, L_r, L_c, tol: float = 1e-12, max_iter: int = 10000):
    """Dykstra-like proximal algorithm for
    min ||y_c - theta||_F^2 + tr(theta^T L_r theta) + tr(theta L_c theta^T).

    Alternates the two cached-Cholesky proximal maps with dual corrections;
    converges to the solution of (I + L_r) theta + theta L_c = y_c."""
    y_c = np.asarray(y_centered, dtype=float)
    n1, n2 = y_c.shape
    F1 = sla.cho_factor(np.eye(n1) + np.asarray(L_r, dtype=float))
    F2 = sla.cho_factor(np.eye(n2) + np.asarray(L_c, dtype=float))
    z2 = y_c.copy()
    u1 = np.zeros_like(y_c)
    u2 = np.zeros_like(y_c)
    scale = max(1.0, float(np.linalg.norm(y_c)))
    for _ in range(max_iter):
        z1 = sla.cho_solve(F1, z2 + u2)
        u2 = z2 + u2 - z1
        z2 = sla.cho_solve(F2, (z1 + u1).T).T
        u1 = z1 + u1 - z2
        resid = z2 + L_r @ z2 + z2 @ L_c - y_c
        if np.linalg.norm(resid) <= tol * scale:
            return z2
    raise NumericError("DLPA did not converge")


def dlpa_objective(theta, y_c, L_r, L_c) -> float:
    r = y_c - theta
    return float((r * r).sum() + np.trace(theta.T @ L_r @ theta) + np.trace(theta @ L_c @ theta.T))


def degenerate_gaussian_logpdf(x, mean, precision, support) -> float:
    """Log density of a Gaussian supported on the affine subspace
    mean + span(support), with (ambient) precision matrix `precision`.

    The value is basis-invariant: `support` is orthonormalized internally.
    Raises NumericError when x - mean leaves the support (tol 1e-8)."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    V = np.atleast_2d(np.asarray(support, dtype=float))
    if V.shape[0] < V.shape[1]:
        raise NumericError("support basis must be p x r with r <= p")
    Q, _ = np.linalg.qr(V)
    dx = x - mean
    u = Q.T @ dx
    off = dx - Q @ u
    if np.linalg.norm(off) > 1e-8 * max(1.0, np.linalg.norm(dx)):
        raise NumericError("point lies off the Gaussian support")
    Om = Q.T @ np.asarray(precision, dtype=float) @ Q
    sign, ld = np.linalg.slogdet(Om)
    if sign <= 0:
        raise NumericError("restricted precision not positive definite")
    r = Q.shape[1]
    return float(-0.5 * r * math.log(2.0 * math.pi) + 0.5 * ld - 0.5 * u @ Om @ u)
