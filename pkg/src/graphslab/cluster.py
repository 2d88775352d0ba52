"""Clustering via the latent complete-bipartite spike-and-slab model:
softmax E-step, closed-form/block-alternating M-step, center merging, and
the label-permutation-corrected selection score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.special import gammaln, logsumexp, xlogy

from .errors import ConfigError, NoValidCandidateError, NumericError
from .linalg import logdet_w, wperp_basis

__all__ = [
    "ClusterSpec",
    "ClusterState",
    "ReducedClustering",
    "ClusterSelection",
    "estep_cluster",
    "mstep_cluster",
    "cluster_elbo",
    "run_cluster_em",
    "merge_centers",
    "cluster_score",
    "projection_weights",
    "cluster_path",
    "select_clustering",
]


@dataclass(frozen=True)
class ClusterSpec:
    k: int
    v1: float = 100.0
    nu: float = 0.0
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.v1 <= 0 or self.a <= 0 or self.b <= 0:
            raise ConfigError("v1, a, b must be positive")


@dataclass
class ClusterState:
    q: np.ndarray  # n x k row-stochastic responsibilities
    alpha: np.ndarray  # (d,)
    theta: np.ndarray  # n x d, columns sum to zero
    mu: np.ndarray  # k x d centers
    sigma2: float


@dataclass(frozen=True)
class ReducedClustering:
    groups: tuple[tuple[int, ...], ...]
    mu_tilde: np.ndarray  # k-hat x d
    q_tilde: np.ndarray  # n x k-hat
    gamma_hat: np.ndarray  # n x k one-hot
    k_hat: int


@dataclass(frozen=True)
class ClusterSelection:
    gamma_hat: np.ndarray
    k_tilde: int
    score: float
    assignments: np.ndarray
    fitted: np.ndarray  # n x d reduced-model point estimate
    table: tuple


def _as_matrix(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def _vbar(v0: float, v1: float) -> float:
    if not (0 < v0 < v1):
        raise ConfigError("clustering E-step needs 0 < v0 < v1")
    return 1.0 / (1.0 / v0 - 1.0 / v1)


def _sq_dists(theta: np.ndarray, mu: np.ndarray) -> np.ndarray:
    d2 = ((theta[:, None, :] - mu[None, :, :]) ** 2).sum(axis=2)
    return np.maximum(d2, 0.0)


def estep_cluster(state: ClusterState, v0: float, v1: float) -> np.ndarray:
    """Row-wise softmax of -||theta_i - mu_j||^2 / (2 sigma^2 vbar)."""
    vb = _vbar(v0, v1)
    logits = -_sq_dists(state.theta, state.mu) / (2.0 * state.sigma2 * vb)
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def _alpha_update(y: np.ndarray, nu: float) -> np.ndarray:
    ybar = y.mean(axis=0)
    n = y.shape[0]
    if np.isinf(nu):
        return np.zeros_like(ybar)
    return (n / (n + nu)) * ybar


def _theta_mu_solve(q, y_c, v0, v1):
    """Exact joint minimizer of ||y_c - theta||^2 + sum c_ij ||theta_i - mu_j||^2
    subject to 1^T theta = 0, with c_ij = q_ij/v0 + (1-q_ij)/v1.

    theta is eliminated analytically, leaving a dense (k+1) KKT system in
    (mu, lambda) shared across response columns."""
    n, d = y_c.shape
    k = q.shape[1]
    c = q / v0 + (1.0 - q) / v1  # n x k
    crow = c.sum(axis=1)  # n
    ccol = c.sum(axis=0)  # k
    inv = 1.0 / (1.0 + crow)  # diag of (I + diag(crow))^{-1}
    Dc = inv[:, None] * c  # n x k
    # KKT in (mu, lambda): [diag(ccol) - c^T Dc,  c^T inv1 ; (Dc^T 1)^T ... ]
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = np.diag(ccol) - c.T @ Dc
    v = Dc.sum(axis=0)  # c^T D 1 = 1^T D c
    M[:k, k] = v
    M[k, :k] = v
    M[k, k] = -float(inv.sum())
    rhs = np.zeros((k + 1, d))
    rhs[:k] = c.T @ (inv[:, None] * y_c)
    rhs[k] = -(inv[:, None] * y_c).sum(axis=0)
    # Empty/uncoupled centers (column of c all ~0) make the block singular;
    # pin them with a tiny ridge and reset to responsibility-weighted means.
    loose = ccol <= 1e-300
    if np.any(loose):
        M[:k, :k][loose, loose] += 1.0
    try:
        sol = sla.solve(M, rhs)
    except sla.LinAlgError as exc:
        raise NumericError(f"singular clustering M-step system: {exc}") from exc
    mu = sol[:k]
    lam = sol[k]
    theta = inv[:, None] * (y_c + c @ mu - lam[None, :])
    if np.any(loose):
        qcol = np.maximum(q.sum(axis=0), 1e-300)
        mu[loose] = ((q.T @ theta) / qcol[:, None])[loose]
    return theta, mu, c


def mstep_cluster(q: np.ndarray, y, spec: ClusterSpec, v0: float):
    """alpha from the orthogonal mean split; (theta, mu) by block alternation
    under the sum-zero constraint; sigma^2 conditional mode."""
    y = _as_matrix(y)
    n, d = y.shape
    k = spec.k
    alpha = _alpha_update(y, spec.nu)
    y_c = y - y.mean(axis=0, keepdims=True)
    theta, mu, c = _theta_mu_solve(q, y_c, v0, spec.v1)
    resid = y - alpha[None, :] - theta
    F = float((resid * resid).sum())
    if np.isfinite(spec.nu) and spec.nu > 0:
        F += spec.nu * float(alpha @ alpha)
    pen = float((c * _sq_dists(theta, mu)).sum())
    F += pen
    sigma2 = (F + spec.b) / ((2 * n + k) * d + spec.a + 2.0)
    return alpha, theta, mu, sigma2, F


def cluster_elbo(state: ClusterState, y, spec: ClusterSpec, v0: float) -> float:
    """Tracked variational objective of the latent-bipartite model. The
    resistance-weighted determinant bound is constant in q (rows of q sum
    to one), so it enters as an additive constant."""
    y = _as_matrix(y)
    n, d = y.shape
    k = spec.k
    q, s2 = state.q, state.sigma2
    c = q / v0 + (1.0 - q) / spec.v1
    resid = y - state.alpha[None, :] - state.theta
    F = float((resid * resid).sum())
    if np.isfinite(spec.nu) and spec.nu > 0:
        F += spec.nu * float(state.alpha @ state.alpha)
    F += float((c * _sq_dists(state.theta, state.mu)).sum())
    log2pis2 = math.log(2.0 * math.pi * s2)

    val = -0.5 * n * d * log2pis2  # likelihood
    val += -0.5 * d * log2pis2  # offset prior measure (consistent sigma^2 mode)
    if np.isfinite(spec.nu) and spec.nu > 0:
        val += 0.5 * d * math.log(spec.nu)
    val += -0.5 * (n + k - 1) * d * log2pis2  # (theta, mu) prior dimension
    # Constant det bound on the complete bipartite K_{n,k}: every row of q
    # contributes log(1/v0) + (k-1) log(1/v1), scaled by the bipartite
    # resistance (n+k-1)/(nk).
    r_bip = (n + k - 1) / (n * k)
    val += 0.5 * d * r_bip * n * (-math.log(v0) - (k - 1) * math.log(spec.v1))
    val += 0.5 * d * (math.log(n * n / float(n)))  # (1^T w)^2 / ||w||^2, w = (1_n, 0_k)
    val += -0.5 * (F + spec.b) / s2
    val += -n * math.log(k)  # uniform assignment prior
    val += 0.5 * spec.a * math.log(0.5 * spec.b) - gammaln(0.5 * spec.a)
    val += -(0.5 * spec.a + 1.0) * math.log(s2)
    val += -float(xlogy(q, q).sum())  # assignment entropy
    return float(val)


def _init_centers(y_c: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic farthest-point seeding on the centered data rows."""
    rng = np.random.default_rng(seed)
    n = y_c.shape[0]
    first = int(rng.integers(n))
    idx = [first]
    d2 = ((y_c - y_c[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))
        idx.append(nxt)
        d2 = np.minimum(d2, ((y_c - y_c[nxt]) ** 2).sum(axis=1))
    return y_c[idx].copy()


def run_cluster_em(
    y,
    spec: ClusterSpec,
    v0: float,
    init: ClusterState | None = None,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 500,
):
    y = _as_matrix(y)
    n, d = y.shape
    if init is None:
        y_c = y - y.mean(axis=0, keepdims=True)
        mu = _init_centers(y_c, spec.k, seed)
        alpha = _alpha_update(y, spec.nu)
        sigma2 = max(float(y.var()), 1e-12)
        state = ClusterState(
            q=np.full((n, spec.k), 1.0 / spec.k), alpha=alpha, theta=y_c, mu=mu, sigma2=sigma2
        )
    else:
        state = init
    trace: list[float] = []
    prev = -np.inf
    for it in range(max_iter):
        q = estep_cluster(state, v0, spec.v1)
        alpha, theta, mu, sigma2, _ = mstep_cluster(q, y, spec, v0)
        state = ClusterState(q=q, alpha=alpha, theta=theta, mu=mu, sigma2=sigma2)
        cur = cluster_elbo(state, y, spec, v0)
        if not np.isfinite(cur):
            raise NumericError(f"clustering objective non-finite at iteration {it}")
        trace.append(cur)
        if it > 0 and abs(cur - prev) <= tol * (1.0 + abs(prev)):
            break
        prev = cur
    return state, trace


def merge_centers(mu_hat: np.ndarray, q_hat: np.ndarray, eps: float = 1e-8) -> ReducedClustering:
    """Single-linkage grouping of centers within eps, pooled responsibilities,
    and the hard one-hot assignment."""
    mu_hat = np.asarray(mu_hat, dtype=float)
    k = mu_hat.shape[0]
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for jj in range(k):
        for ll in range(jj + 1, k):
            if np.linalg.norm(mu_hat[jj] - mu_hat[ll]) <= eps:
                parent[find(ll)] = find(jj)
    labels: dict[int, int] = {}
    group_of = np.empty(k, dtype=int)
    for j in range(k):
        r = find(j)
        if r not in labels:
            labels[r] = len(labels)
        group_of[j] = labels[r]
    k_hat = len(labels)
    groups = tuple(
        tuple(int(j) for j in range(k) if group_of[j] == l) for l in range(k_hat)
    )
    mu_tilde = np.stack([mu_hat[list(gs)].mean(axis=0) for gs in groups])
    q_hat = np.asarray(q_hat, dtype=float)
    n = q_hat.shape[0]
    q_tilde = np.zeros((n, k_hat))
    for l, gs in enumerate(groups):
        q_tilde[:, l] = q_hat[:, list(gs)].sum(axis=1)
    hard = np.argmax(q_tilde, axis=1)
    gamma_hat = np.zeros((n, k))
    gamma_hat[np.arange(n), hard] = 1.0
    return ReducedClustering(
        groups=groups, mu_tilde=mu_tilde, q_tilde=q_tilde, gamma_hat=gamma_hat, k_hat=k_hat
    )


def _center_coupling(sizes: np.ndarray, v1: float) -> np.ndarray:
    """Laplacian on the complete center graph with edge weights
    (n_j + n_l)/v1; satisfies tr(mu^T Kbar mu) = sum_{j<l} (n_j+n_l)/v1
    ||mu_j - mu_l||^2."""
    k = sizes.shape[0]
    wmat = (sizes[:, None] + sizes[None, :]) / v1
    np.fill_diagonal(wmat, 0.0)
    return np.diag(wmat.sum(axis=1)) - wmat


def cluster_score(y, gamma_hat, spec: ClusterSpec) -> tuple[float, bool]:
    """log p(gamma | y) up to gamma-independent constants: exact conjugate
    marginal of (alpha, mu, sigma^2) for the hard assignment plus the
    label-permutation count log[C(k, k-tilde) * k-tilde!]."""
    y = _as_matrix(y)
    gam = np.asarray(gamma_hat, dtype=float)
    n, d = y.shape
    k = gam.shape[1]
    if gam.shape[0] != n or not np.allclose(gam.sum(axis=1), 1.0):
        raise ConfigError("gamma_hat must be an n x k one-hot assignment")
    sizes = gam.sum(axis=0)
    k_tilde = int((sizes > 0).sum())
    Kbar = _center_coupling(sizes, spec.v1)
    K = Kbar + gam.T @ gam
    basis = wperp_basis(sizes) if k > 1 else None
    if k > 1:
        ld_prior = logdet_w(Kbar, basis)
        if not np.isfinite(ld_prior):
            return -np.inf, False
        B = basis.B
        Kb = B.T @ K @ B
        try:
            cf = sla.cho_factor(Kb)
        except sla.LinAlgError:
            return -np.inf, False
        ld_post = float(2.0 * np.sum(np.log(np.diag(cf[0]))))
        y_c = y - y.mean(axis=0, keepdims=True)
        u = B.T @ (gam.T @ y_c)
        quad = float((y_c * y_c).sum()) - float((u * sla.cho_solve(cf, u)).sum())
    else:
        ld_prior = ld_post = 0.0
        y_c = y - y.mean(axis=0, keepdims=True)
        quad = float((y_c * y_c).sum())

    ybar = y.mean(axis=0)
    nu = spec.nu
    if np.isinf(nu):
        alpha_term = 0.0
        quad_a = n * float(ybar @ ybar)
    elif nu == 0:
        alpha_term = -0.5 * d * math.log(float(n))
        quad_a = 0.0
    else:
        alpha_term = 0.5 * d * (math.log(nu) - math.log(nu + n))
        quad_a = (nu * n / (nu + n)) * float(ybar @ ybar)

    bracket = quad_a + quad + spec.b
    if bracket <= 0:
        return -np.inf, False
    score = (
        alpha_term
        + 0.5 * d * (ld_prior - ld_post)
        - 0.5 * (n * d + spec.a) * math.log(bracket)
        + math.lgamma(k + 1) - math.lgamma(k_tilde + 1) - math.lgamma(k - k_tilde + 1)
        + math.lgamma(k_tilde + 1)
        - n * math.log(k)
    )
    return float(score), bool(np.isfinite(score))


def projection_weights(gamma) -> np.ndarray:
    """lambda_il = sum_j gamma_ij gamma_lj / n_j (test identity only)."""
    gam = np.asarray(gamma, dtype=float)
    sizes = gam.sum(axis=0)
    if np.any(sizes[np.any(gam > 0, axis=0)] == 0) or np.any(sizes == 0):
        raise ConfigError("projection weights need no empty cluster")
    return gam @ np.diag(1.0 / sizes) @ gam.T


@dataclass(frozen=True)
class ClusterPathPoint:
    v0: float
    state: ClusterState
    reduced: ReducedClustering
    n_iter: int
    elbo: float


def cluster_path(y, spec: ClusterSpec, v0_grid=None, mode: str = "warm", seed: int = 0):
    y = _as_matrix(y)
    if v0_grid is None:
        v0_grid = np.geomspace(1e-4 * spec.v1, 0.99 * spec.v1, 20)
    v0_grid = np.asarray(v0_grid, dtype=float)
    if np.any((v0_grid <= 0) | (v0_grid >= spec.v1)):
        raise ConfigError("clustering v0 grid must lie in (0, v1)")
    if mode not in ("warm", "cold"):
        raise ConfigError(f"unknown path mode {mode!r}")
    points = []
    prev = None
    for v0 in np.sort(v0_grid):
        init = prev if mode == "warm" else None
        state, trace = run_cluster_em(y, spec, float(v0), init=init, seed=seed)
        if mode == "warm":
            prev = state
        reduced = merge_centers(state.mu, state.q)
        points.append(
            ClusterPathPoint(
                v0=float(v0), state=state, reduced=reduced, n_iter=len(trace), elbo=trace[-1]
            )
        )
    return points


def _reduced_fit(y, gamma_hat, spec: ClusterSpec) -> np.ndarray:
    """Reduced-model posterior mode: 1 alpha^T + gamma mu-tilde with mu
    solved on the (sizes)-orthogonal subspace."""
    y = _as_matrix(y)
    gam = np.asarray(gamma_hat, dtype=float)
    n = y.shape[0]
    alpha = _alpha_update(y, spec.nu)
    y_c = y - y.mean(axis=0, keepdims=True)
    sizes = gam.sum(axis=0)
    k = gam.shape[1]
    if k == 1:
        return alpha[None, :] + np.zeros_like(y_c)
    Kbar = _center_coupling(sizes, spec.v1)
    B = wperp_basis(sizes).B
    Kb = B.T @ (Kbar + gam.T @ gam) @ B
    u = B.T @ (gam.T @ y_c)
    mu = B @ sla.solve(Kb, u, assume_a="pos")
    return alpha[None, :] + gam @ mu


def select_clustering(y, spec: ClusterSpec, path) -> ClusterSelection:
    """Score deduplicated hard assignments along the path, pick the argmax."""
    if not path:
        raise NoValidCandidateError("empty clustering path")
    y = _as_matrix(y)
    seen = {}
    best = None
    table = []
    for pt in path:
        gam = pt.reduced.gamma_hat
        labels = np.argmax(gam, axis=1)
        canon: dict[int, int] = {}
        key = tuple(canon.setdefault(int(l), len(canon)) for l in labels)
        if key in seen:
            continue
        seen[key] = True
        score, valid = cluster_score(y, gam, spec)
        table.append((pt.v0, pt.reduced.k_hat, score, valid))
        if not valid:
            continue
        if best is None or score > best[0]:
            best = (score, pt)
    if best is None:
        raise NoValidCandidateError("no valid clustering candidate")
    score, pt = best
    gam = pt.reduced.gamma_hat
    return ClusterSelection(
        gamma_hat=gam,
        k_tilde=int((gam.sum(axis=0) > 0).sum()),
        score=score,
        assignments=np.argmax(gam, axis=1),
        fitted=_reduced_fit(y, gam, spec),
        table=tuple(table),
    )
