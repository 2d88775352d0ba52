import numpy as np
import pytest

import graphslab as gs
from graphslab import graphs as gr
from graphslab.errors import GraphError


def test_graph_validation():
    with pytest.raises(GraphError):
        gs.Graph(3, ((0, 0),))  # self-loop
    with pytest.raises(GraphError):
        gs.Graph(2, ((0, 2),))  # out of range
    with pytest.raises(GraphError):
        gs.Graph(3, ((0, 1), (1, 0)))  # duplicate after normalization
    g = gs.Graph(3, ((2, 0), (1, 2)))
    assert g.edges == ((0, 2), (1, 2))
    assert g.m == 2


def test_constructors_shapes():
    assert gs.chain(5).m == 4
    assert gs.star(5).m == 4
    assert gs.complete(6).m == 15
    assert gs.complete_bipartite(3, 4).m == 12
    assert gs.grid(3, 4).p == 12 and gs.grid(3, 4).m == 3 * 3 + 4 * 2


def test_laplacian_and_incidence():
    g = gs.chain(4)
    w = np.array([1.0, 2.0, 3.0])
    L = gs.laplacian(g, w)
    D = gs.incidence(g).toarray()
    assert np.allclose(L, D.T @ np.diag(w) @ D)
    assert np.allclose(L.sum(axis=1), 0.0)


def test_product_identities():
    g1, g2 = gs.chain(3), gs.star(4)
    L1, L2 = gs.laplacian(g1), gs.laplacian(g2)
    # node (i, k) maps to k*p1 + i, so the vec convention is
    # L = I_{p2} (x) L1 + L2 (x) I_{p1}
    Lc = gs.laplacian(gs.cartesian_product(g1, g2))
    assert np.allclose(Lc, np.kron(np.eye(g2.p), L1) + np.kron(L2, np.eye(g1.p)))
    # Kronecker: adjacency multiplies (same node indexing)
    def adjacency(g):
        A = np.zeros((g.p, g.p))
        for (i, j), w in zip(g.edges, g.edge_weights()):
            A[i, j] = A[j, i] = w
        return A
    Ak = adjacency(gs.kronecker_product(g1, g2))
    assert np.allclose(Ak, np.kron(adjacency(g2), adjacency(g1)))


def test_contract_multiplicities():
    g = gs.complete(4)
    gamma = np.array([(i, j) in (((0, 1)), ((2, 3))) for (i, j) in g.edges], dtype=float)
    cr = gs.contract(g, gamma)
    assert cr.s == 2
    assert tuple(cr.sizes) == (2, 2)
    assert cr.contracted.weights == (4.0,)  # four crossing edges collapse


def test_spike_slab_weights():
    gamma = np.array([0.0, 1.0, 0.25])
    w = gs.spike_slab_weights(gamma, 0.5, 10.0)
    assert np.allclose(w, gamma / 0.5 + (1 - gamma) / 10.0)


def test_weighted_tree_logsum_known_counts():
    # Cayley: complete(p) has p^(p-2) spanning trees
    for p in (3, 4, 5):
        val = gs.weighted_tree_logsum(gs.complete(p), np.ones(gs.complete(p).m))
        assert abs(val - (p - 2) * np.log(p)) < 1e-10
    assert abs(gs.weighted_tree_logsum(gs.chain(6), np.ones(5))) < 1e-12


def test_effective_resistance_sums_to_p_minus_1():
    g = gs.grid(4, 3)
    r = gs.effective_resistances(g)
    assert abs(r.sum() - (g.p - 1)) < 1e-10
    assert np.all((r > 0) & (r <= 1 + 1e-12))


def test_from_edge_list(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("# toy graph\np=4\n0 1\n1 2 # middle\n2 3\n")
    g = gs.from_edge_list(f)
    assert g.p == 4 and g.edges == ((0, 1), (1, 2), (2, 3))
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1 2\n")
    with pytest.raises(GraphError):
        gs.from_edge_list(bad)


def test_is_connected():
    assert gr.is_connected(gs.chain(5))
    assert not gr.is_connected(gs.Graph(4, ((0, 1), (2, 3))))
