"""Exact v0=0 posterior scoring of subgraphs, model selection over a
solution path, reduced-model point estimation, and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.special import betaln

from . import graphs as gr
from .em import ModelSpec, SolutionPath, as_columns
from .errors import NoValidCandidateError, NumericError
from .linalg import constrained_qp_general, logdet_w, wperp_basis

__all__ = [
    "ScoreTableRow",
    "SelectionResult",
    "log_posterior_score",
    "select",
    "point_estimate",
    "metrics",
]


@dataclass(frozen=True)
class ScoreTableRow:
    v0: float
    num_fused: int
    score: float
    valid: bool


@dataclass(frozen=True)
class SelectionResult:
    gamma_hat: np.ndarray
    score: float
    contraction: gr.ContractionResult
    beta_hat: np.ndarray
    table: tuple[ScoreTableRow, ...]


def _reduced_pieces(spec: ModelSpec, gamma):
    """Contraction, slab-only Laplacian on the quotient, and reduced design."""
    gamma = np.asarray(gamma)
    cr = gr.contract(spec.g, gamma)
    Ltil = gr.laplacian(spec.g, (1.0 - gamma) / spec.v1)
    Z = cr.Z
    M = Z if spec.X is None else spec.X @ Z
    return cr, Z.T @ Ltil @ Z, M


def log_posterior_score(spec: ModelSpec, y, gamma) -> tuple[float, bool]:
    """log p(gamma | y) up to a gamma-independent constant, by exact conjugate
    integration of (alpha, reduced theta, sigma^2) and the Beta-integrated
    eta term. Returns (score, valid); degenerate Beta arguments or singular
    determinants flag the candidate invalid (score -inf)."""
    y = as_columns(y, spec.d)
    gamma = np.asarray(gamma, dtype=float)
    n, m, d = spec.n, spec.g.m, spec.d
    ssum = float(gamma.sum())
    arg1 = ssum + spec.A - 1.0
    arg2 = (m - ssum) + spec.B - 1.0
    if arg1 <= 0 or arg2 <= 0:
        return -np.inf, False

    cr, Ls, M = _reduced_pieces(spec, gamma)
    s = cr.s
    wt = cr.Z.T @ spec.w
    c = spec.w if spec.X is None else spec.X @ spec.w

    basis = wperp_basis(wt)
    B = basis.B
    ld_prior = logdet_w(Ls, basis)
    if not np.isfinite(ld_prior):
        return -np.inf, False
    Kb = B.T @ (M.T @ M + Ls) @ B  # (s-1) x (s-1) restricted precision
    try:
        cf = sla.cho_factor(Kb)
    except sla.LinAlgError:
        return -np.inf, False
    ld_post = float(2.0 * np.sum(np.log(np.diag(cf[0]))))

    MB = M @ B
    u = MB.T @ y  # (s-1) x d
    uc = MB.T @ c  # (s-1,)
    sol_u = sla.cho_solve(cf, u)
    sol_c = sla.cho_solve(cf, uc)
    quad_y = float((y * y).sum()) - float((u * sol_u).sum())
    t_w = float(c @ c) - float(uc @ sol_c)
    t_wy = c @ y - uc @ sol_u  # (d,)

    if np.isinf(spec.nu):
        nu_term, corr = 0.0, 0.0
    elif spec.nu == 0:
        nu_term = -0.5 * d * math.log(t_w)
        corr = float(t_wy @ t_wy) / t_w
    else:
        nu_term = 0.5 * d * (math.log(spec.nu) - math.log(spec.nu + t_w))
        corr = float(t_wy @ t_wy) / (spec.nu + t_w)

    bracket = quad_y - corr + spec.b
    if bracket <= 0:
        return -np.inf, False
    score = (
        0.5 * d * (ld_prior - ld_post)
        + nu_term
        - 0.5 * (n * d + spec.a) * math.log(bracket)
        + betaln(arg1, arg2)
        - betaln(spec.A, spec.B)
    )
    return float(score), bool(np.isfinite(score))


def point_estimate(spec: ModelSpec, y, gamma) -> np.ndarray:
    """Posterior mode of the reduced model (sigma^2-independent QP):
    beta-hat = w alpha^T + Z theta-tilde with w^T Z theta-tilde = 0."""
    y = as_columns(y, spec.d)
    cr, Ls, M = _reduced_pieces(spec, gamma)
    wt = cr.Z.T @ spec.w
    c = spec.w if spec.X is None else spec.X @ spec.w
    alpha, theta_t = constrained_qp_general(y, c, M, Ls, wt, spec.nu)
    return np.outer(spec.w, alpha) + cr.Z @ theta_t


def metrics(gamma_hat, gamma_star, beta_hat=None, beta_star=None, X=None, n=None):
    """(FDP, POW, MSE) with the 0/0 = 1 convention.

    Discoveries are edges declared as breaks (gamma-hat = 0); FDP is the
    fraction of them that are truly fused, POW the fraction of true breaks
    discovered. MSE = ||X(beta_hat - beta_star)||^2 / n when estimates are
    given, else NaN."""
    gh = np.asarray(gamma_hat, dtype=float)
    gs = np.asarray(gamma_star, dtype=float)
    if gh.shape != gs.shape:
        raise NumericError("gamma vectors must share one edge set")
    disc = float((1.0 - gh).sum())
    fdp = 1.0 if disc == 0 else float(((1.0 - gh) * gs).sum()) / disc
    breaks = float((1.0 - gs).sum())
    pow_ = 1.0 if breaks == 0 else 1.0 - float(((1.0 - gs) * gh).sum()) / breaks
    mse = float("nan")
    if beta_hat is not None and beta_star is not None:
        bh = np.atleast_2d(np.asarray(beta_hat, dtype=float).T).T
        bs = np.atleast_2d(np.asarray(beta_star, dtype=float).T).T
        diff = bh - bs
        fit = diff if X is None else np.asarray(X) @ diff
        rows = fit.shape[0] if n is None else n
        mse = float((fit * fit).sum()) / rows
    return fdp, pow_, mse


def select(spec: ModelSpec, y, path: SolutionPath) -> SelectionResult:
    """Score the deduplicated gamma-hat candidates of a solution path and
    return the argmax; exact ties break toward more fused edges."""
    if not path.points:
        raise NoValidCandidateError("empty solution path")
    y = as_columns(y, spec.d)
    seen: dict[tuple, int] = {}
    candidates = []
    for pt in path.points:
        key = tuple(int(x) for x in pt.gamma_hat)
        if key in seen:
            continue
        seen[key] = len(candidates)
        candidates.append(pt)
    table = []
    best = None
    for pt in candidates:
        score, valid = log_posterior_score(spec, y, pt.gamma_hat)
        table.append(
            ScoreTableRow(v0=pt.v0, num_fused=int(pt.gamma_hat.sum()), score=score, valid=valid)
        )
        if not valid:
            continue
        key = (score, int(pt.gamma_hat.sum()))
        if best is None or key > (best[0], best[1]):
            best = (score, int(pt.gamma_hat.sum()), pt)
    if best is None:
        raise NoValidCandidateError("no candidate has a finite selection score")
    score, _, winner = best
    cr = gr.contract(spec.g, winner.gamma_hat)
    beta_hat = point_estimate(spec, y, winner.gamma_hat)
    return SelectionResult(
        gamma_hat=winner.gamma_hat,
        score=score,
        contraction=cr,
        beta_hat=beta_hat,
        table=tuple(table),
    )
