import numpy as np
import pytest

import graphslab as gs
from graphslab import em, oracle as orc
from graphslab.errors import GraphError


def test_enumerate_spanning_trees_counts():
    assert len(orc.enumerate_spanning_trees(gs.chain(5))) == 1
    assert len(orc.enumerate_spanning_trees(gs.complete(4))) == 16  # 4^2
    assert len(orc.enumerate_spanning_trees(gs.complete(5))) == 125  # 5^3
    # cycle graph C_4 has 4 spanning trees
    c4 = gs.Graph(4, ((0, 1), (1, 2), (2, 3), (0, 3)))
    assert len(orc.enumerate_spanning_trees(c4)) == 4


def test_exact_log_partition_matches_direct_sum():
    rng = np.random.default_rng(0)
    g = gs.complete(4)
    gamma = rng.uniform(size=g.m)
    v0, v1 = 0.2, 30.0
    f1, f2 = orc.exact_log_partition(g, gamma, v0, v1)
    w = gs.spike_slab_weights(gamma, v0, v1)
    direct = np.log(sum(np.prod(w[list(t)]) for t in orc.enumerate_spanning_trees(g)))
    assert abs(f1 - direct) < 1e-10
    assert f2 <= f1 + 1e-12


def test_quadrature_marginal_size_guard():
    g = gs.complete(8)
    # proper Beta hyperparameters so the degenerate all-spike pattern is not
    # short-circuited to -inf before the size guard fires
    spec = em.ModelSpec(g=g, w=np.ones(8), v1=10.0, A=2.0, B=2.0)
    with pytest.raises(GraphError):
        orc.quadrature_marginal(spec, np.zeros(8), np.zeros(g.m))  # s = 8 > 5


def test_pava_properties():
    rng = np.random.default_rng(1)
    for _ in range(10):
        y = rng.normal(size=40)
        fit = orc.pava(y)
        assert np.all(np.diff(fit) >= -1e-12)  # monotone
        assert abs(fit.mean() - y.mean()) < 1e-10  # mean preserved
        # projection property: fit of the fit is itself
        assert np.abs(orc.pava(fit) - fit).max() < 1e-12
    # weighted case: pooling respects the weights
    y = np.array([2.0, 0.0])
    w = np.array([3.0, 1.0])
    assert np.allclose(orc.pava(y, w), [1.5, 1.5])


def test_pava_rejects_bad_weights():
    with pytest.raises(ValueError):
        orc.pava(np.zeros(3), np.array([1.0, -1.0, 1.0]))


def test_oracle_report_compare():
    rep = orc.OracleReport.compare("x", 1.0, 1.0 + 1e-12, 1e-10)
    assert rep.passed
    rep = orc.OracleReport.compare("x", 1.0, 1.1, 1e-10)
    assert not rep.passed
