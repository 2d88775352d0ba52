"""Base-graph representation, Laplacians, products, contraction, resistances.

All functions are pure; a Graph is an immutable value whose edge order is
fixed at construction and defines edge identity everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import GraphError

__all__ = [
    "Graph",
    "ContractionResult",
    "incidence",
    "laplacian",
    "spike_slab_weights",
    "effective_resistances",
    "weighted_tree_logsum",
    "cartesian_product",
    "kronecker_product",
    "contract",
    "star",
    "chain",
    "grid",
    "complete",
    "complete_bipartite",
    "from_edge_list",
]


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph: node count and an ordered edge list."""

    p: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.p < 1:
            raise GraphError("graph needs at least one node")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise GraphError(f"edge ({i},{j}) out of range for p={self.p}")
        edges = tuple((min(i, j), max(i, j)) for i, j in edges)
        if len(set(edges)) != len(edges):
            raise GraphError("duplicate edges")
        object.__setattr__(self, "edges", edges)
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(edges):
                raise GraphError("weights length must equal edge count")
            if any(x <= 0 for x in w):
                raise GraphError("edge weights must be positive")
            object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.m)
        return np.asarray(self.weights)


@dataclass(frozen=True)
class ContractionResult:
    """Components of the kept-edge subgraph, membership, and the quotient graph."""

    s: int
    membership: np.ndarray  # length p, values in [0, s)
    Z: np.ndarray  # p x s 0/1 membership matrix
    contracted: Graph  # s nodes, weights = crossing multiplicities
    sizes: np.ndarray  # component sizes


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def is_connected(g: Graph) -> bool:
    uf = _UnionFind(g.p)
    n_comp = g.p
    for i, j in g.edges:
        if uf.union(i, j):
            n_comp -= 1
    return n_comp == 1


def incidence(g: Graph) -> sp.csr_matrix:
    """Signed m x p incidence matrix; row e is +1 at i, -1 at j for e=(i,j)."""
    m = g.m
    rows = np.repeat(np.arange(m), 2)
    cols = np.array([v for e in g.edges for v in e], dtype=int)
    data = np.tile([1.0, -1.0], m)
    return sp.csr_matrix((data, (rows, cols)), shape=(m, g.p))


def laplacian(g: Graph, edge_weights=None) -> np.ndarray:
    """Weighted Laplacian L = D^T diag(weights) D as a dense array."""
    w = g.edge_weights() if edge_weights is None else np.asarray(edge_weights, dtype=float)
    if w.shape != (g.m,):
        raise GraphError(f"expected {g.m} edge weights, got {w.shape}")
    L = np.zeros((g.p, g.p))
    for (i, j), we in zip(g.edges, w):
        L[i, i] += we
        L[j, j] += we
        L[i, j] -= we
        L[j, i] -= we
    return L


def spike_slab_weights(gamma, v0: float, v1: float) -> np.ndarray:
    """Per-edge precision weights v0^{-1} gamma + v1^{-1} (1 - gamma).

    gamma may be 0/1 or fractional (posterior expectations)."""
    if not (0 < v0 <= v1):
        raise GraphError("need 0 < v0 <= v1")
    gamma = np.asarray(gamma, dtype=float)
    return gamma / v0 + (1.0 - gamma) / v1


def effective_resistances(g: Graph) -> np.ndarray:
    """Per-edge effective resistance r_e = (e_i - e_j)^T L^+ (e_i - e_j).

    Computed from the grounded (last node deleted) Laplacian by one Cholesky
    factorization and a batched solve. Requires a connected graph."""
    if not is_connected(g):
        raise GraphError("effective resistance requires a connected graph")
    if g.m == 0:
        return np.zeros(0)
    L = laplacian(g, np.ones(g.m))
    Lg = L[:-1, :-1]
    c, low = sla.cho_factor(Lg)
    Dg = incidence(g).toarray()[:, :-1]  # m x (p-1)
    X = sla.cho_solve((c, low), Dg.T)  # (p-1) x m
    r = np.einsum("ek,ke->e", Dg, X)
    return r


def weighted_tree_logsum(g: Graph, edge_weights=None) -> float:
    """log of the weighted spanning-tree sum, via a grounded Kirchhoff minor.

    Returns -inf for disconnected graphs (empty spanning-tree set)."""
    w = g.edge_weights() if edge_weights is None else np.asarray(edge_weights, dtype=float)
    if g.p == 1:
        return 0.0
    L = laplacian(g, w)
    Lg = L[:-1, :-1]
    try:
        c = sla.cholesky(Lg, lower=True)
    except sla.LinAlgError:
        return -np.inf
    d = np.diag(c)
    if np.any(d <= 0):
        return -np.inf
    return float(2.0 * np.sum(np.log(d)))


def cartesian_product(g1: Graph, g2: Graph) -> Graph:
    """Cartesian product; node (i,k) has index k*p1 + i.

    Satisfies L = L2 (x) I_{p1} + I_{p2} (x) L1."""
    p1 = g1.p
    edges = []
    for k in range(g2.p):
        for i, j in g1.edges:
            edges.append((k * p1 + i, k * p1 + j))
    for k, l in g2.edges:
        for i in range(p1):
            edges.append((k * p1 + i, l * p1 + i))
    return Graph(p1 * g2.p, tuple(edges))


def kronecker_product(g1: Graph, g2: Graph) -> Graph:
    """Kronecker (tensor) product; node (i,k) has index k*p1 + i.

    Adjacency satisfies A = A1 (x) A2 under this indexing; each pair of input
    edges yields two product edges (the two orientations)."""
    p1 = g1.p
    edges = []
    for x1, y1 in g1.edges:
        for x2, y2 in g2.edges:
            edges.append((x2 * p1 + x1, y2 * p1 + y1))
            edges.append((y2 * p1 + x1, x2 * p1 + y1))
    return Graph(p1 * g2.p, tuple(edges))


def contract(g: Graph, gamma) -> ContractionResult:
    """Collapse components of the gamma=1 subgraph into single nodes.

    Isolated nodes form singleton components; the contracted graph carries
    the crossing-edge multiplicities as weights."""
    gamma = np.asarray(gamma)
    if gamma.shape != (g.m,):
        raise GraphError(f"gamma must have length {g.m}")
    uf = _UnionFind(g.p)
    for e, (i, j) in enumerate(g.edges):
        if gamma[e] >= 0.5:
            uf.union(i, j)
    roots: dict[int, int] = {}
    membership = np.empty(g.p, dtype=int)
    for v in range(g.p):
        r = uf.find(v)
        if r not in roots:
            roots[r] = len(roots)
        membership[v] = roots[r]
    s = len(roots)
    Z = np.zeros((g.p, s))
    Z[np.arange(g.p), membership] = 1.0
    sizes = Z.sum(axis=0).astype(int)
    mult: dict[tuple[int, int], int] = {}
    for e, (i, j) in enumerate(g.edges):
        ki, kj = membership[i], membership[j]
        if ki != kj:
            key = (min(ki, kj), max(ki, kj))
            mult[key] = mult.get(key, 0) + 1
    items = sorted(mult.items())
    contracted = Graph(
        s,
        tuple(k for k, _ in items),
        tuple(float(v) for _, v in items) if items else None,
    )
    return ContractionResult(s=s, membership=membership, Z=Z, contracted=contracted, sizes=sizes)


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def star(p: int) -> Graph:
    return Graph(p, tuple((0, i) for i in range(1, p)))


def chain(p: int) -> Graph:
    return Graph(p, tuple((i, i + 1) for i in range(p - 1)))


def grid(n1: int, n2: int) -> Graph:
    return cartesian_product(chain(n1), chain(n2))


def complete(p: int) -> Graph:
    return Graph(p, tuple((i, j) for i in range(p) for j in range(i + 1, p)))


def complete_bipartite(p: int, k: int) -> Graph:
    return Graph(p + k, tuple((i, p + j) for i in range(p) for j in range(k)))


def from_edge_list(path) -> Graph:
    """Parse an edge-list text file: one "i j" pair per line, '#' comments,
    optional "p=<n>" header to set the node count explicitly."""
    p_decl = None
    edges = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("p="):
            p_decl = int(line[2:])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"bad edge line: {raw!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if not edges and p_decl is None:
        raise GraphError("empty edge list and no p= header")
    p = p_decl if p_decl is not None else max(max(e) for e in edges) + 1
    return Graph(p, tuple(edges))
