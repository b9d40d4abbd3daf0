import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfaudit.diagnostics import (DiagnosticError, EpsilonPolicy, connectedness,
                                 default_epsilon, proximity, stability)
from cfaudit.neighbors import NOISE, DbscanParams, dbscan

from oracles import l2, proximity_scan, reachable_bfs


def test_proximity_zero_on_training_point():
    p = proximity([1.0, 2.0], np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 3.0]]))
    assert p.value == 0.0 and p.numerator == 0.0 and p.a0_index == 1


def test_proximity_1d_example():
    p = proximity([12.0], np.array([[0.0], [1.0], [10.0]]))
    assert p.a0_index == 2
    assert (p.numerator, p.denominator) == (2.0, 9.0)
    assert p.value == pytest.approx(2 / 9)


def test_proximity_skips_duplicates_of_a0():
    p = proximity([12.0], np.array([[10.0], [10.0], [1.0]]))
    assert p.denominator == 9.0


def test_proximity_needs_two_instances():
    with pytest.raises(DiagnosticError):
        proximity([0.0], np.array([[1.0]]))
    with pytest.raises(DiagnosticError):
        proximity([0.0], np.array([[1.0], [1.0]]))


def test_proximity_matches_double_scan(rng):
    for _ in range(200):
        n, d = rng.integers(2, 30), rng.integers(1, 4)
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
        e = rng.normal(size=d) * 3
        ours = proximity(e, X)
        value, a0, num, den = proximity_scan(e, X)
        assert ours.value == pytest.approx(value, rel=1e-9)
        assert ours.a0_index == a0


@given(st.floats(0.01, 100.0))
@settings(max_examples=50, deadline=None)
def test_proximity_scale_invariant(s):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(20, 2))
    e = rng.normal(size=2)
    assert proximity(e * s, X * s).value == pytest.approx(proximity(e, X).value, rel=1e-9)


def test_connectedness_direct_edge():
    r = connectedness([0.2], np.array([[0.0], [5.0]]), eps=0.5)
    assert r.connected and r.anchor_index == 0


@pytest.mark.parametrize("e,expected", [(2.9, True), (3.5, False)])
def test_connectedness_1d(e, expected):
    r = connectedness([e], np.array([[0.0], [1.0], [2.0]]), eps=1.0)
    assert r.connected is expected
    if expected:
        assert r.anchor_index == 2 and r.cluster_id >= 0
    else:
        assert r.cluster_id == NOISE and r.anchor_index is None


def brute_connected(e, X, eps):
    pts = [list(e)] + [list(x) for x in X]
    return len(reachable_bfs(pts, 0, eps)) > 1


def test_connectedness_matches_bfs_and_is_monotone(rng):
    for _ in range(50):
        X = rng.uniform(0, 10, size=(rng.integers(1, 25), 2))
        e = rng.uniform(-2, 12, size=2)
        prev = False
        for eps in (0.2, 0.5, 1.0, 2.0, 4.0, 8.0):
            c = connectedness(e, X, eps).connected
            assert c == brute_connected(e, X, eps)
            assert not (prev and not c)
            prev = c


def test_default_epsilon_examples():
    assert default_epsilon(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(2.0, abs=1e-8)
    assert default_epsilon(np.array([[0.0], [1.0], [3.0]])) > 2.0
    grid = np.array([[i * 0.3, j * 0.3] for i in range(5) for j in range(5)])
    assert default_epsilon(grid) == pytest.approx(0.3, abs=1e-8)


def test_default_epsilon_leaves_no_noise(rng):
    for _ in range(20):
        X = rng.normal(size=(rng.integers(2, 40), 2))
        eps = default_epsilon(X)
        assert not np.any(dbscan(X, DbscanParams(eps, 2)).noise)


def test_default_epsilon_needs_two():
    with pytest.raises(DiagnosticError):
        default_epsilon(np.array([[1.0]]))


def test_epsilon_policy():
    X = np.array([[0.0], [1.0], [3.0]])
    assert EpsilonPolicy("fixed", 0.7).resolve(X) == 0.7
    assert EpsilonPolicy().resolve(X) == default_epsilon(X)
    with pytest.raises(ValueError):
        EpsilonPolicy("fixed", -1)


def test_stability_constant_explainer_is_zero():
    X = np.array([[0.0], [0.3], [0.6]])
    s = stability([0.1], X, lambda j, p: np.array([7.0]), eps=1.0)
    assert s.value == 0.0 and s.n_neighbors == 3


def test_stability_single_ratio():
    X = np.array([[0.0], [0.5], [9.0]])
    table = {None: 2.0, 1: 3.0}
    s = stability([0.0], X, lambda j, p: np.array([table[j]]), eps=1.0)
    assert s.value == pytest.approx(2.0) and s.witness_index == 1 and s.n_neighbors == 1


def test_stability_empty_ball():
    with pytest.raises(DiagnosticError, match="undefined"):
        stability([0.0], np.array([[5.0]]), lambda j, p: p, eps=1.0)


def test_stability_failures_skipped():
    X = np.array([[0.1], [0.2], [0.3]])

    def explainer(j, p):
        if j == 1:
            raise RuntimeError("no counterfactual")
        return p * 2

    s = stability([0.0], X, explainer, eps=1.0)
    assert s.n_failed == 1 and s.n_neighbors == 3

    def always_fails(j, p):
        if j is None:
            return p
        raise RuntimeError("no counterfactual")

    with pytest.raises(DiagnosticError, match="every neighbour"):
        stability([0.0], X, always_fails, eps=1.0)


def test_stability_matches_full_scan(rng):
    for _ in range(100):
        X = rng.normal(size=(rng.integers(2, 30), 2))
        x = rng.normal(size=2)
        M = rng.normal(size=(2, 2))
        E = lambda p: np.tanh(M @ p) + np.sin(3 * p)
        explainer = lambda j, p: E(p)
        eps = rng.uniform(0.2, 2.0)
        best = None
        for xj in X:
            dj = np.linalg.norm(x - xj)
            if 0 < dj < eps:
                r = np.linalg.norm(E(x) - E(xj)) / dj
                best = r if best is None else max(best, r)
        if best is None:
            with pytest.raises(DiagnosticError):
                stability(x, X, explainer, eps)
        else:
            assert stability(x, X, explainer, eps).value == best
