import numpy as np
import pytest

from graphslab import isotonic as iso
from graphslab import oracle as orc
from graphslab.errors import ConfigError


def test_spec_validation():
    with pytest.raises(ConfigError):
        iso.IsoSpec(v1=-1.0)
    with pytest.raises(ConfigError):
        iso.IsoSpec(A=0.5)


def test_isotonic_qp_unpenalized_is_pava():
    rng = np.random.default_rng(0)
    for _ in range(10):
        y = rng.normal(size=30)
        y_c = y - y.mean()
        fit = iso.isotonic_qp(y_c, pen=np.zeros(29))
        ref = orc.pava(y_c)
        assert np.abs(fit - ref).max() < 1e-10


def test_isotonic_qp_kkt_against_dense():
    # with positive fusion penalties, the pooled solver must match the
    # generic dense QP fallback
    rng = np.random.default_rng(1)
    y = rng.normal(size=12)
    y_c = y - y.mean()
    pen = rng.uniform(0.1, 5.0, size=11)
    fast = iso.isotonic_qp(y_c, pen=pen)
    dense = iso._isotonic_qp_dense(y_c, np.ones(12), pen, np.ones(12), 1e-10)
    assert np.abs(fast - dense).max() < 1e-6
    assert np.all(np.diff(fast) >= -1e-10)


def test_em_fit_is_monotone_and_centered():
    rng = np.random.default_rng(2)
    y = np.sort(rng.normal(size=25)) * 2
    spec = iso.IsoSpec(v1=100.0)
    state, trace = iso.run_iso_em(y, spec, 0.1)
    assert np.all(np.diff(state.theta) >= -1e-10)
    assert abs(state.theta.sum()) < 1e-8
    t = np.asarray(trace)
    assert np.all(np.diff(t) >= -1e-9 * (1 + np.abs(t[:-1])))


def test_pava_limit():
    rng = np.random.default_rng(3)
    y = np.cumsum(rng.uniform(0, 0.5, size=60)) + rng.normal(0, 0.3, size=60)
    spec = iso.IsoSpec(v1=1e6)
    state, _ = iso.run_iso_em(y, spec, 1e-10)
    assert np.abs(state.alpha + state.theta - orc.pava(y)).max() < 1e-3


def test_iso_select_staircase():
    rng = np.random.default_rng(4)
    truth = np.repeat([0.0, 1.0, 2.0], 10)
    y = truth + rng.normal(0, 0.1, size=30)
    spec = iso.IsoSpec(v1=100.0)
    gamma, score, table = iso.iso_select(y, spec, iso.iso_path(y, spec))
    assert gamma.size + 1 - int(gamma.sum()) == 3
    assert np.isfinite(score)
    assert len(table) >= 1


def test_iso_path_grid_validation():
    spec = iso.IsoSpec(v1=10.0)
    with pytest.raises(ConfigError):
        iso.iso_path(np.zeros(5), spec, v0_grid=np.array([100.0]))
