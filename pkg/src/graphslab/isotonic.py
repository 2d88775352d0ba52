"""Reduced isotonic regression on a chain: spike-and-slab half-Gaussian
prior, exact EM whose M-step is an isotonic-constrained quadratic program,
and a maximized (profile) selection score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import LinearConstraint, minimize
from scipy.special import betaln, gammaln

from . import graphs as gr
from .em import Q_CLAMP, _estep, elbo as _general_elbo, EMState, ModelSpec
from .errors import ConfigError, NoValidCandidateError, NumericError
from .linalg import logdet_w, wperp_basis

__all__ = [
    "IsoSpec",
    "IsotonicState",
    "isotonic_qp",
    "estep_iso",
    "mstep_iso",
    "iso_elbo",
    "run_iso_em",
    "iso_path",
    "iso_score",
    "iso_select",
]


@dataclass(frozen=True)
class IsoSpec:
    v1: float = 100.0
    nu: float = 0.0
    a: float = 1.0
    b: float = 1.0
    A: float = 1.0
    B: float = 1.0

    def __post_init__(self):
        if self.v1 <= 0 or self.a <= 0 or self.b <= 0:
            raise ConfigError("v1, a, b must be positive")
        if self.A < 1 or self.B < 1:
            raise ConfigError("Beta hyperparameters must be >= 1")


@dataclass
class IsotonicState:
    q: np.ndarray  # (n-1,)
    alpha: float
    theta: np.ndarray  # (n,), nondecreasing, sums to zero
    sigma2: float
    eta: float


def _pool_solve(targets, dw, pen, cw, bounds):
    """Equality-constrained QP over pool values given pool boundaries.

    bounds: sorted indices splitting [0, n) into pools; pools[j] = [bounds[j],
    bounds[j+1]). Returns pool values and the constraint multiplier."""
    P = len(bounds) - 1
    M = np.zeros((P + 1, P + 1))
    rhs = np.zeros(P + 1)
    CW = np.empty(P)
    for j in range(P):
        lo, hi = bounds[j], bounds[j + 1]
        wsum = dw[lo:hi].sum()
        M[j, j] += 2.0 * wsum
        rhs[j] += 2.0 * float(dw[lo:hi] @ targets[lo:hi])
        CW[j] = cw[lo:hi].sum()
        if j + 1 < P:
            pb = pen[hi - 1]
            M[j, j] += 2.0 * pb
            M[j + 1, j + 1] += 2.0 * pb
            M[j, j + 1] -= 2.0 * pb
            M[j + 1, j] -= 2.0 * pb
    M[:P, P] = CW
    M[P, :P] = CW
    sol = sla.solve(M, rhs)
    return sol[:P], sol[P]


def _expand(v, bounds, n):
    x = np.empty(n)
    for j in range(len(bounds) - 1):
        x[bounds[j] : bounds[j + 1]] = v[j]
    return x


def isotonic_qp(targets, dw=None, pen=None, cw=None, tol: float = 1e-10):
    """Minimize sum_i dw_i (x_i - t_i)^2 + sum_i pen_i (x_{i+1} - x_i)^2
    subject to x nondecreasing and sum_i cw_i x_i = 0.

    Primal active-set method over adjacent pools (adjacent violators are
    merged, blocks with negative multipliers are split), with an SLSQP
    dense fallback for n <= 500 if the active set cycles."""
    t = np.asarray(targets, dtype=float)
    n = t.shape[0]
    dw = np.ones(n) if dw is None else np.asarray(dw, dtype=float)
    pen = np.zeros(max(n - 1, 0)) if pen is None else np.asarray(pen, dtype=float)
    cw = np.ones(n) if cw is None else np.asarray(cw, dtype=float)
    if n == 1:
        return np.zeros(1) if cw[0] != 0 else t.copy()

    bounds = list(range(n + 1))
    for _ in range(50 * n + 50):
        v, lam = _pool_solve(t, dw, pen, cw, bounds)
        viol = [j for j in range(len(v) - 1) if v[j + 1] < v[j] - 1e-14]
        if viol:
            keep = set(range(len(bounds)))
            for j in viol:
                keep.discard(j + 1)
            bounds = [bounds[i] for i in sorted(keep)]
            continue
        x = _expand(v, bounds, n)
        # Dual feasibility of the active (within-pool) constraints.
        grad = 2.0 * dw * (x - t) + lam * cw
        if n > 1:
            d = np.diff(x)
            grad[:-1] += 2.0 * pen * (-d)
            grad[1:] += 2.0 * pen * d
        worst, worst_j = 0.0, None
        for j in range(len(bounds) - 1):
            lo, hi = bounds[j], bounds[j + 1]
            if hi - lo == 1:
                continue
            csum = np.cumsum(grad[lo:hi])[:-1]
            mu = -csum
            jmin = int(np.argmin(mu))
            if mu[jmin] < worst - 1e-10:
                worst, worst_j = mu[jmin], lo + jmin + 1
        if worst_j is None:
            return x
        bounds = sorted(set(bounds) | {worst_j})
    return _isotonic_qp_dense(t, dw, pen, cw, tol)


def _isotonic_qp_dense(t, dw, pen, cw, tol):
    """Dense fallback: SLSQP on the same objective/constraints (n <= 500)."""
    n = t.shape[0]
    if n > 500:
        raise NumericError("isotonic active set failed to converge for n > 500")

    def fun(x):
        d = np.diff(x)
        return float(dw @ (x - t) ** 2 + pen @ d**2)

    def jac(x):
        g = 2.0 * dw * (x - t)
        d = np.diff(x)
        g[:-1] -= 2.0 * pen * d
        g[1:] += 2.0 * pen * d
        return g

    D = np.diff(np.eye(n), axis=0)
    cons = [
        LinearConstraint(cw[None, :], 0.0, 0.0),
        LinearConstraint(D, 0.0, np.inf),
    ]

    def hess(x):
        H = np.diag(2.0 * dw)
        H += 2.0 * D.T @ (pen[:, None] * D)
        return H

    res = minimize(fun, np.zeros(n), jac=jac, hess=hess, method="trust-constr",
                   constraints=cons, options={"maxiter": 5000, "gtol": 1e-12, "xtol": 1e-14})
    if res.x is None:
        raise NumericError(f"isotonic QP fallback failed: {res.message}")
    return res.x


def estep_iso(state: IsotonicState, spec: IsoSpec, v0: float) -> np.ndarray:
    """Gaussian-ratio E-step on the chain differences delta_i = theta_{i+1} - theta_i."""
    delta = np.diff(state.theta)
    return _estep(delta * delta, state.sigma2, state.eta, v0, spec.v1, np.ones(delta.shape[0]), 1)


def mstep_iso(q: np.ndarray, y, spec: IsoSpec, v0: float):
    """alpha from the mean split; theta by the isotonic-constrained QP;
    sigma^2 and eta conditional modes (p = n on the chain)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    ybar = float(y.mean())
    alpha = 0.0 if np.isinf(spec.nu) else (n / (n + spec.nu)) * ybar
    y_c = y - ybar
    pen = gr.spike_slab_weights(q, v0, spec.v1)
    theta = isotonic_qp(y_c, pen=pen)
    resid = y - alpha - theta
    F = float(resid @ resid)
    if np.isfinite(spec.nu) and spec.nu > 0:
        F += spec.nu * alpha * alpha
    F += float(pen @ np.diff(theta) ** 2)
    sigma2 = (F + spec.b) / (2 * n + spec.a + 2.0)
    eta = float((spec.A - 1.0 + q.sum()) / (spec.A + spec.B + (n - 1) - 2.0))
    eta = min(max(eta, Q_CLAMP), 1.0 - Q_CLAMP)
    return alpha, theta, sigma2, eta


def _chain_modelspec(n: int, spec: IsoSpec) -> ModelSpec:
    return ModelSpec(
        g=gr.chain(n), w=np.ones(n), nu=spec.nu, v1=spec.v1,
        a=spec.a, b=spec.b, A=spec.A, B=spec.B,
    )


def iso_elbo(state: IsotonicState, y, spec: IsoSpec, v0: float) -> float:
    """Exact EM objective (the chain is a tree); the half-Gaussian support
    doubling contributes the constant (n-1) log 2."""
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    ms = _chain_modelspec(n, spec)
    st = EMState(
        q=state.q, alpha=np.array([state.alpha]), theta=state.theta[:, None],
        sigma2=state.sigma2, eta=state.eta,
    )
    return _general_elbo(st, ms, v0, y) + (n - 1) * math.log(2.0)


def run_iso_em(y, spec: IsoSpec, v0: float, init: IsotonicState | None = None,
               tol: float = 1e-8, max_iter: int = 500):
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    if init is None:
        ybar = float(y.mean())
        alpha = 0.0 if np.isinf(spec.nu) else (n / (n + spec.nu)) * ybar
        theta = isotonic_qp(y - ybar)
        resid = y - alpha - theta
        sigma2 = max(float(resid @ resid) / n, 1e-12)
        state = IsotonicState(q=np.full(n - 1, 0.5), alpha=alpha, theta=theta, sigma2=sigma2, eta=0.5)
    else:
        state = init
    trace: list[float] = []
    prev = -np.inf
    for it in range(max_iter):
        q = estep_iso(state, spec, v0)
        alpha, theta, sigma2, eta = mstep_iso(q, y, spec, v0)
        state = IsotonicState(q=q, alpha=alpha, theta=theta, sigma2=sigma2, eta=eta)
        cur = iso_elbo(state, y, spec, v0)
        if not np.isfinite(cur):
            raise NumericError(f"isotonic objective non-finite at iteration {it}")
        trace.append(cur)
        if it > 0 and abs(cur - prev) <= tol * (1.0 + abs(prev)):
            break
        prev = cur
    return state, trace


@dataclass(frozen=True)
class IsoPathPoint:
    v0: float
    state: IsotonicState
    gamma_hat: np.ndarray
    n_iter: int
    elbo: float


def iso_path(y, spec: IsoSpec, v0_grid=None, mode: str = "warm"):
    y = np.asarray(y, dtype=float).reshape(-1)
    if v0_grid is None:
        v0_grid = np.geomspace(1e-4 * spec.v1, spec.v1, 20)
    v0_grid = np.asarray(v0_grid, dtype=float)
    if np.any((v0_grid <= 0) | (v0_grid > spec.v1)):
        raise ConfigError("v0 grid values must lie in (0, v1]")
    points = []
    prev = None
    for v0 in np.sort(v0_grid):
        init = prev if mode == "warm" else None
        state, trace = run_iso_em(y, spec, float(v0), init=init)
        if mode == "warm":
            prev = state
        gamma_hat = (state.q >= 0.5).astype(int)
        points.append(IsoPathPoint(v0=float(v0), state=state, gamma_hat=gamma_hat,
                                   n_iter=len(trace), elbo=trace[-1]))
    return points


def _pieces(gamma: np.ndarray) -> np.ndarray:
    """Piece sizes of the contracted chain (gamma_i = 1 fuses i, i+1)."""
    sizes = []
    cur = 1
    for gi in gamma:
        if gi >= 0.5:
            cur += 1
        else:
            sizes.append(cur)
            cur = 1
    sizes.append(cur)
    return np.array(sizes, dtype=int)


def iso_score(y, gamma, spec: IsoSpec) -> tuple[float, bool]:
    """g(gamma): the log joint maximized over (alpha, nondecreasing reduced
    theta with weighted sum zero, sigma^2), including the contracted-chain
    half-Gaussian normalizer and the Beta-integrated eta term."""
    y = np.asarray(y, dtype=float).reshape(-1)
    gamma = np.asarray(gamma, dtype=float)
    n = y.shape[0]
    if gamma.shape != (n - 1,):
        raise ConfigError("gamma must have length n-1")
    sizes = _pieces(gamma)
    s = sizes.shape[0]
    ssum = float(gamma.sum())  # = n - s
    arg1 = ssum + spec.A - 1.0
    arg2 = (n - 1 - ssum) + spec.B - 1.0
    if arg1 <= 0 or arg2 <= 0:
        return -np.inf, False

    ybar = float(y.mean())
    alpha = 0.0 if np.isinf(spec.nu) else (n / (n + spec.nu)) * ybar
    y_c = y - ybar
    # Reduced isotonic QP over piece values.
    starts = np.concatenate([[0], np.cumsum(sizes)])
    bmeans = np.array([y_c[starts[j] : starts[j + 1]].mean() for j in range(s)])
    within = float(y_c @ y_c) - float(sizes @ (bmeans * bmeans))
    pen = np.full(max(s - 1, 0), 1.0 / spec.v1)
    theta_t = isotonic_qp(bmeans, dw=sizes.astype(float), pen=pen, cw=sizes.astype(float))
    G = within + float(sizes @ (bmeans - theta_t) ** 2) + n * (ybar - alpha) ** 2
    if np.isfinite(spec.nu) and spec.nu > 0:
        G += spec.nu * alpha * alpha
    penval = float(pen @ np.diff(theta_t) ** 2) if s > 1 else 0.0
    G += penval

    dim = n + (s - 1) + (1 if (np.isfinite(spec.nu) and spec.nu > 0) else 0)
    sigma2 = (G + spec.b) / (dim + spec.a + 2.0)
    l2p = math.log(2.0 * math.pi * sigma2)

    if s > 1:
        Z = np.zeros((n, s))
        for j in range(s):
            Z[starts[j] : starts[j + 1], j] = 1.0
        Ltil = gr.laplacian(gr.chain(n), (1.0 - gamma) / spec.v1)
        ld = logdet_w(Z.T @ Ltil @ Z, wperp_basis(sizes.astype(float)))
    else:
        ld = 0.0
    val = -0.5 * n * l2p
    if np.isfinite(spec.nu) and spec.nu > 0:
        val += 0.5 * (math.log(spec.nu) - l2p)
    elif spec.nu == 0:
        val += -0.5 * l2p  # flat limit keeps the measure normalizer
    val += (s - 1) * math.log(2.0) - 0.5 * (s - 1) * l2p + 0.5 * ld
    val += -0.5 * (G + spec.b) / sigma2
    val += betaln(arg1, arg2) - betaln(spec.A, spec.B)
    val += 0.5 * spec.a * math.log(0.5 * spec.b) - gammaln(0.5 * spec.a)
    val += -(0.5 * spec.a + 1.0) * math.log(sigma2)
    return float(val), True


def iso_select(y, spec: IsoSpec, path) -> tuple[np.ndarray, float, tuple]:
    """Score deduplicated path candidates, return (gamma_hat, score, table)."""
    if not path:
        raise NoValidCandidateError("empty isotonic path")
    y = np.asarray(y, dtype=float).reshape(-1)
    seen = set()
    best = None
    table = []
    for pt in path:
        key = tuple(int(g) for g in pt.gamma_hat)
        if key in seen:
            continue
        seen.add(key)
        score, valid = iso_score(y, pt.gamma_hat, spec)
        table.append((pt.v0, int(pt.gamma_hat.sum()), score, valid))
        if not valid:
            continue
        cand = (score, int(pt.gamma_hat.sum()), pt.gamma_hat)
        if best is None or (cand[0], cand[1]) > (best[0], best[1]):
            best = cand
    if best is None:
        raise NoValidCandidateError("no valid isotonic candidate")
    return best[2], best[0], tuple(table)
