"""Simulation designs used by the command-line tool and the test harness.

Each design returns the noiseless truth; ``simulate`` adds seeded Gaussian
noise around it.  Designs:

- ``chain_signal``: piecewise-constant signals on a linear chain with
  evenly, unevenly, or very unevenly spaced change points.
- ``grid_signal``: the 21 x 21 lattice signal
  ceil(2.8 cos(sqrt(i^2 + j^2) / (2 pi)) - 0.2), which takes 5 levels.
- ``checkerboard_signal``: an n1 x n2 matrix with equal 6 x 6 blocks of
  values 2 (u + v - 6) for block indices u, v in 1..6.
- ``anchor_signal``: on an arbitrary graph, pick 4 anchor nodes uniformly
  at random and label every node by its nearest anchor (shortest-path
  distance); the signal is the anchor index, giving 4 clusters.
- ``clustering_toy``: the separable 4-point clustering example
  (4, 2, -2, -4) whose true partition is {1, 2} / {3, 4}.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import shortest_path

from . import graphs as gr
from .errors import ConfigError

__all__ = [
    "chain_signal",
    "grid_signal",
    "checkerboard_signal",
    "anchor_signal",
    "clustering_toy",
    "simulate",
]


def chain_signal(n: int, pieces: int = 4, spacing: str = "even", gap: float = 2.0) -> np.ndarray:
    """Piecewise-constant signal on a chain of length n with the given
    number of pieces. Levels alternate 0, gap, 0, ... so consecutive
    pieces always differ. "uneven" shrinks one piece to ~n/100 nodes,
    "very-uneven" to 2 nodes."""
    if pieces < 1 or pieces > n:
        raise ConfigError(f"pieces must be in [1, n], got {pieces}")
    if spacing == "even":
        bounds = np.linspace(0, n, pieces + 1).astype(int)
    elif spacing in ("uneven", "very-uneven"):
        short = 2 if spacing == "very-uneven" else max(2, n // 100)
        rest = np.linspace(0, n - short, pieces).astype(int)
        bounds = np.concatenate([rest, [n]])
    else:
        raise ConfigError(f"unknown spacing {spacing!r}")
    beta = np.zeros(n)
    for j in range(pieces):
        beta[bounds[j] : bounds[j + 1]] = gap * (j % 2)
    return beta


def grid_signal(kappa: float = 1.0) -> np.ndarray:
    """The 21 x 21 lattice signal; piecewise constant with exactly 5 levels.

    The bracket is the integer part (truncation toward zero): truncation
    yields the documented 5 levels {-2, ..., 2}, a true ceiling would give 6.
    """
    i = np.arange(1, 22)[:, None]
    j = np.arange(1, 22)[None, :]
    mu = np.trunc(2.8 * np.cos(np.sqrt(i**2 + j**2) / (2.0 * np.pi)) - 0.2)
    return kappa * mu


def checkerboard_signal(n1: int, n2: int = 12, blocks: int = 6) -> np.ndarray:
    """Equal-block checkerboard matrix: theta[i, j] = 2 (u + v - 6) where
    u, v in 1..blocks index the row and column blocks."""
    if n1 % blocks or n2 % blocks:
        raise ConfigError(f"block count {blocks} must divide n1={n1} and n2={n2}")
    u = 1 + np.repeat(np.arange(blocks), n1 // blocks)
    v = 1 + np.repeat(np.arange(blocks), n2 // blocks)
    return 2.0 * (u[:, None] + v[None, :] - 6.0)


def anchor_signal(g: gr.Graph, seed: int = 0, anchors: int = 4) -> np.ndarray:
    """Nearest-anchor cluster signal on a generic graph: each node gets the
    index (1-based) of its closest of ``anchors`` uniformly chosen nodes."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(g.p, size=anchors, replace=False)
    adj = np.zeros((g.p, g.p))
    for (i, j) in g.edges:
        adj[i, j] = adj[j, i] = 1.0
    dist = shortest_path(adj, method="D", unweighted=True, indices=idx)
    return np.argmin(dist, axis=0).astype(float) + 1.0


def clustering_toy() -> np.ndarray:
    """Four separable points whose true 2-cluster partition is {1,2}/{3,4}."""
    return np.array([4.0, 2.0, -2.0, -4.0])


def simulate(design: str, sigma: float = 1.0, seed: int = 0, **kw):
    """Generate (y, truth) for a named design with N(truth, sigma^2) noise.

    Designs: "chain" (kw: n, pieces, spacing, gap), "grid" (kw: kappa),
    "checkerboard" (kw: n1, n2, blocks), "anchor" (kw: graph, kappa,
    anchors), "clustering-toy".
    """
    if design == "chain":
        truth = chain_signal(
            int(kw.get("n", 200)),
            int(kw.get("pieces", 4)),
            kw.get("spacing", "even"),
            float(kw.get("gap", 2.0)),
        )
    elif design == "grid":
        truth = grid_signal(float(kw.get("kappa", 1.0)))
    elif design == "checkerboard":
        truth = checkerboard_signal(
            int(kw.get("n1", 24)), int(kw.get("n2", 12)), int(kw.get("blocks", 6))
        )
    elif design == "anchor":
        if "graph" not in kw:
            raise ConfigError("anchor design needs a graph")
        truth = float(kw.get("kappa", 1.0)) * anchor_signal(
            kw["graph"], seed=seed, anchors=int(kw.get("anchors", 4))
        )
    elif design == "clustering-toy":
        truth = clustering_toy()
    else:
        raise ConfigError(f"unknown design {design!r}")
    rng = np.random.default_rng(seed)
    y = truth + sigma * rng.normal(size=np.shape(truth))
    return y, truth
