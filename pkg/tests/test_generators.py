import dataclasses

import numpy as np
import pytest

from cfaudit.classifiers import FunctionClassifier, train_knn, KnnConfig, train_rbf_svm
from cfaudit.dataset import L0_TOLERANCE, distance, train_test_split
from cfaudit.generators import (GsConfig, HclsConfig, NoCounterfactualFound, WachterConfig,
                                gs_sparsify, growing_spheres, hcls, sample_layer, wachter)

from conftest import Instrumented, constant, threshold_1d, unit_disc


@pytest.mark.parametrize("d", [1, 2, 5])
def test_sample_layer_radii_and_density(d):
    rng = np.random.default_rng(0)
    x = np.full(d, 3.0)
    Z = sample_layer(rng, x, 1.0, 2.0, 20_000)
    r = np.linalg.norm(Z - x, axis=1)
    assert r.min() >= 1.0 - 1e-12 and r.max() <= 2.0 + 1e-12
    # CDF of the radius for a uniform layer: (r^d - a0^d) / (a1^d - a0^d)
    for q in (1.25, 1.5, 1.75):
        expected = (q**d - 1) / (2**d - 1)
        assert abs(np.mean(r <= q) - expected) < 0.015


def test_sample_layer_directions_isotropic():
    Z = sample_layer(np.random.default_rng(1), np.zeros(2), 0.0, 1.0, 40_000)
    ang = np.arctan2(Z[:, 1], Z[:, 0])
    counts, _ = np.histogram(ang, bins=8, range=(-np.pi, np.pi))
    assert np.all(np.abs(counts / len(Z) - 1 / 8) < 0.01)


def test_gs_1d_threshold():
    cfg = GsConfig(eta0=0.1, max_radius=5.0, seed=3)
    r = growing_spheres([0.0], threshold_1d(), cfg)
    lo, hi = r.details["layer"]
    assert 1.0 <= r.counterfactual[0] <= 1.0 + (hi - lo)
    assert r.counterfactual_label == 1 and r.source_label == 0


def test_gs_unit_circle():
    r = growing_spheres([0.0, 0.0], unit_disc(), GsConfig(eta0=0.1, seed=4))
    lo, hi = r.details["layer"]
    assert 1.0 <= np.linalg.norm(r.counterfactual) <= 1.0 + (hi - lo)


def test_gs_shrinks_from_a_large_start():
    r = growing_spheres([0.0, 0.0], unit_disc(), GsConfig(eta0=3.0, seed=5))
    assert r.details["eta"] <= 1.0
    assert 1.0 <= r.distance_l2 <= 1.1


def test_gs_constant_classifier_fails():
    with pytest.raises(NoCounterfactualFound) as info:
        growing_spheres([0.0, 0.0], constant(), GsConfig(eta0=0.5, max_radius=3.0))
    assert info.value.reached >= 3.0


@pytest.mark.parametrize("f,x", [(threshold_1d(), [0.0]), (unit_disc(), [0.0, 0.0])])
def test_gs_optimality_band(f, x):
    inside = 0
    for seed in range(100):
        dist = growing_spheres(x, f, GsConfig(eta0=0.1, seed=seed)).distance_l2
        inside += 1.0 <= dist <= 1.1
    assert inside >= 95


def test_sparsify_drops_irrelevant_coordinate():
    f = FunctionClassifier(lambda Z: np.column_stack([1 - Z[:, 0], Z[:, 0] - 1]), 2, 2)
    out = gs_sparsify([0.0, 0.0], [1.2, 0.1], f)
    np.testing.assert_array_equal(out, [1.2, 0.0])


def test_sparsify_keeps_essential_coordinate():
    f = threshold_1d()
    e = np.array([1.0 + 1e-3])
    np.testing.assert_array_equal(gs_sparsify([0.0], e, f), e)
    f2 = FunctionClassifier(lambda Z: np.column_stack([1 - Z[:, 0], Z[:, 0] - 1]), 2, 2)
    e2 = np.array([1.5, 0.0])
    np.testing.assert_array_equal(gs_sparsify([0.0, 0.0], e2, f2), e2)


def test_sparsify_invariants_on_iris(iris):
    split = train_test_split(iris, 0.7, 5)
    f = train_rbf_svm(split.train)
    cfg = GsConfig.for_data(split.train.X)
    for i, x in enumerate(split.test.X[:25]):
        e = growing_spheres(x, f, dataclasses.replace(cfg, seed=i)).counterfactual
        s = gs_sparsify(x, e, f)
        assert f.predict(s) == f.predict(e)
        assert distance("L0", x, s) <= distance("L0", x, e)
        assert distance("L2", x, s) <= distance("L2", x, e) + 1e-12
        changed = np.abs(s - e) > 0
        np.testing.assert_array_equal(s[changed], x[changed])


def test_gs_with_sparsify_flag(iris):
    split = train_test_split(iris, 0.7, 5)
    f = train_rbf_svm(split.train)
    x = split.test.X[0]
    cfg = GsConfig.for_data(split.train.X, sparsify=True, seed=1)
    r = growing_spheres(x, f, cfg)
    assert r.counterfactual_label != r.source_label
    assert np.sum(np.abs(r.counterfactual - x) > L0_TOLERANCE) <= 2


def test_hcls_goes_to_budget_sphere():
    r = hcls([0.0], threshold_1d(), HclsConfig(budget=2.0, max_budget=2.0, step_size=0.1, seed=0))
    assert r.counterfactual[0] == pytest.approx(2.0, abs=1e-9)


def test_hcls_infeasible_budget():
    with pytest.raises(NoCounterfactualFound):
        hcls([0.0], threshold_1d(), HclsConfig(budget=0.5, max_budget=0.5))


def test_hcls_respects_budget(iris):
    split = train_test_split(iris, 0.7, 5)
    f = train_rbf_svm(split.train)
    cfg = HclsConfig.for_data(split.train.X)
    for i, x in enumerate(split.test.X[:20]):
        r = hcls(x, f, dataclasses.replace(cfg, seed=i))
        assert r.distance_l2 <= r.details["budget"] + 1e-9
        assert r.details["budget"] <= cfg.max_budget


def test_wachter_1d_threshold():
    r = wachter([0.0], threshold_1d(), WachterConfig(seed=0))
    assert r.counterfactual[0] >= 1.0
    assert abs(r.counterfactual[0]) == pytest.approx(1.0, abs=1e-2)


def gaussian_bump():
    """Class 1 inside the unit circle, with a Gaussian-shaped score."""
    def fn(Z):
        sq = np.sum(Z**2, axis=1)
        return np.column_stack([np.zeros(len(Z)), 4 * (np.exp(-sq) - np.exp(-1.0))])
    return FunctionClassifier(fn, 2, 2)


def test_wachter_matches_grid_minimiser():
    f = gaussian_bump()
    x = np.array([0.3, 0.0])
    r = wachter(x, f, WachterConfig(seed=2))
    lam, target = r.details["lam"], r.details["target_class"]
    g = np.linspace(-1.5, 1.5, 601)
    G = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    obj = lam * (f.class_scores(G)[:, target] - 0.5) ** 2 + np.abs(G - x).sum(axis=1)
    best = G[np.argmin(obj)]
    assert np.linalg.norm(r.counterfactual - best) <= 0.1
    # nearest boundary from (0.3, 0) lies straight along +x at (1, 0)
    assert abs(r.counterfactual[1]) <= 0.1 and r.counterfactual[0] >= 0.9


def test_wachter_config_validation():
    with pytest.raises(ValueError):
        WachterConfig(lambda_schedule=(1.0, 1.0))
    with pytest.raises(ValueError):
        WachterConfig(target_score=0.0)


GENERATORS = [
    (growing_spheres, GsConfig.for_data),
    (hcls, HclsConfig.for_data),
    (wachter, WachterConfig.for_data),
]


@pytest.mark.parametrize("gen,make", GENERATORS)
def test_determinism_and_evaluation_count(gen, make, iris):
    split = train_test_split(iris, 0.7, 5)
    f = train_rbf_svm(split.train)
    cfg = make(split.train.X, seed=11)
    x = split.test.X[3]
    probe = Instrumented(f)
    a = gen(x, probe, cfg)
    b = gen(x, f, cfg)
    np.testing.assert_array_equal(a.counterfactual, b.counterfactual)
    assert a.evaluations == probe.points == b.evaluations
    assert a.config_hash == b.config_hash


@pytest.mark.parametrize("gen,make", GENERATORS)
def test_validity_with_knn(gen, make, iris):
    # vote-fraction scores are piecewise constant; failures are allowed, invalid output is not
    split = train_test_split(iris, 0.7, 1)
    f = train_knn(split.train, KnnConfig(k=5))
    cfg = make(split.train.X)
    produced = 0
    for i, x in enumerate(split.test.X[:10]):
        try:
            r = gen(x, f, dataclasses.replace(cfg, seed=i))
        except NoCounterfactualFound:
            continue
        produced += 1
        assert f.predict(r.counterfactual) != f.predict(x)
        assert r.distance_l2 == pytest.approx(np.linalg.norm(r.counterfactual - x))
    assert produced >= 3


def test_config_validation():
    with pytest.raises(ValueError):
        GsConfig(shrink_factor=1.0)
    with pytest.raises(ValueError):
        HclsConfig(budget=3.0, max_budget=2.0)
    with pytest.raises(ValueError):
        HclsConfig(budget_growth=1.0)
