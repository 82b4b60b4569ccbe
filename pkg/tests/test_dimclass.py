import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localas import benchmarks as bm
from localas.dataset import SampleSet, rescale_to_unit_cube
from localas.dimclass import (DegenerateLabelsError, LocalDimConfig, canonical_labels, cluster_output_components,
                              grassmann_matrix, knn_graph, label_components, local_as_dimension, local_dimensions,
                              mean_accuracy, output_subspaces, train_label_classifier)


def _sample(f, df, X, bounds):
    return SampleSet(X, f(X), df(X), bounds)


def test_linear_dimension_one(rng):
    X = rng.uniform(-1, 1, (30, 5))
    w = rng.normal(size=5)
    s = _sample(lambda X: X @ w, lambda X: np.tile(w, (len(X), 1)), X, [(-1, 1)] * 5)
    assert set(local_dimensions(s)) == {1}


@pytest.mark.parametrize("sign,expected", [(1.0, 1), (-1.0, 4)])
def test_paraboloid_deep_in_quadrant(rng, sign, expected):
    X = rng.uniform(-4, 4, (200, 6))
    X[:, :2] = sign * rng.uniform(0.5, 4.0, (200, 2))
    X[0] = [sign * 2.25, sign * 2.25, 0, 0, 0, 0]
    s = _sample(bm.hyper_paraboloid.evaluate, bm.hyper_paraboloid.gradient, X, bm.hyper_paraboloid.bounds)
    assert local_as_dimension(s, 0) == expected


def test_sum_of_squares_two(rng):
    X = np.array([0.7, -0.4, 0.2, 0.1]) + 0.3 * rng.normal(size=(30, 4))
    f = lambda X: X[:, 0] ** 2 + X[:, 1] ** 2
    df = lambda X: np.column_stack([2 * X[:, 0], 2 * X[:, 1], np.zeros(len(X)), np.zeros(len(X))])
    s = _sample(f, df, X, [(-3, 3)] * 4)
    # oracle: direct local eigendecomposition
    nb = np.argsort(np.linalg.norm(X - X[0], axis=1))[:6]
    lam = np.linalg.eigvalsh(df(X[nb]).T @ df(X[nb]))[::-1]
    expect = int(np.searchsorted(np.cumsum(lam) / lam.sum(), 0.999 - 1e-12) + 1)
    assert expect == 2
    assert local_as_dimension(s, 0) == expect


def test_config_invariants():
    with pytest.raises(ValueError):
        LocalDimConfig(energy=0.0)
    with pytest.raises(ValueError):
        LocalDimConfig(n_neighbors=4, max_dim=4)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_dimension_within_cap(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (25, 6))
    G = rng.normal(size=(25, 6))
    s = SampleSet(X, rng.normal(size=25), G, [(-1, 1)] * 6)
    d = local_dimensions(s, LocalDimConfig(max_dim=3, n_neighbors=6))
    assert d.min() >= 1 and d.max() <= 3


def test_components_single_when_dims_equal(rng):
    X = rng.uniform(0, 1, (60, 2))
    assert set(label_components(X, np.ones(60, int), 10)) == {0}


def test_components_two_blobs(rng):
    X = np.vstack([rng.normal(0, 0.1, (30, 2)), rng.normal(5, 0.1, (30, 2))])
    dims = np.repeat([1, 2], 30)
    comps = label_components(X, dims, 5)
    assert len(set(comps)) == 2
    assert len(set(comps[:30])) == 1 and len(set(comps[30:])) == 1


def test_paraboloid_components_cover_all_dimensions():
    s = rescale_to_unit_cube(bm.hyper_paraboloid.sample(500, seed=0))
    dims = local_dimensions(s)
    comps = label_components(s, dims, 10)
    sizes = np.bincount(comps)
    assert len(sizes) >= 4
    big = np.argsort(sizes)[::-1][:4]
    dominant = {int(np.bincount(dims[comps == c]).argmax()) for c in big}
    assert dominant == {1, 2, 3, 4}


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=30))
def test_canonical_labels(labels):
    c = canonical_labels(labels)
    assert c[0] == 0
    seen = -1
    for v in c:
        assert v <= seen + 1
        seen = max(seen, v)
    # same partition
    labels = np.asarray(labels)
    assert np.array_equal(labels[:, None] == labels[None, :], c[:, None] == c[None, :])


def test_knn_graph_edges_unique(rng):
    E = knn_graph(rng.normal(size=(20, 2)), 3)
    assert np.all(E[:, 0] < E[:, 1])
    assert len(np.unique(E, axis=0)) == len(E)


def test_classifier_examples(rng):
    X = np.vstack([rng.normal(0, 0.1, (10, 1)), rng.normal(5, 0.1, (10, 1))])
    y = np.repeat([0, 1], 10)
    clf = train_label_classifier(X, y, k=1)
    np.testing.assert_array_equal(clf.predict(X), y)
    assert train_label_classifier(X, y, k=5).predict([[4.8]])[0] == 1
    with pytest.raises(DegenerateLabelsError):
        train_label_classifier(X, np.zeros(20, int))


def test_classifier_tie_goes_to_smallest_label():
    clf = train_label_classifier(np.array([[-1.0], [1.0]]), np.array([1, 0]), k=2)
    assert clf.predict([[0.0]])[0] == 0


def test_accuracy_examples():
    assert mean_accuracy([1, 2, 3], [1, 2, 3]) == 1
    assert mean_accuracy([0, 0], [1, 1]) == 0
    assert mean_accuracy([1, 1, 1, 0], [1, 1, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        mean_accuracy([1], [1, 2])


def _vector(F, G, X):
    return SampleSet(X, F, G, [(-1, 1)] * X.shape[1])


def test_duplicated_component_same_cluster(rng):
    X = rng.uniform(-1, 1, (50, 3))
    g1 = np.column_stack([np.cos(X[:, 0]), np.zeros(50), np.zeros(50)])
    g2 = np.column_stack([np.zeros(50), np.ones(50), np.zeros(50)])
    G = np.stack([g1, g1, g2], axis=1)
    s = _vector(np.column_stack([np.sin(X[:, 0]), np.sin(X[:, 0]), X[:, 1]]), G, X)
    D = grassmann_matrix(output_subspaces(s))
    assert D[0, 1] == pytest.approx(0.0, abs=1e-12)
    labels = cluster_output_components(s, k_graph=1)
    assert labels[0] == labels[1] != labels[2]


def test_block_vector_two_clusters():
    bench = bm.block_vector_benchmark()
    s = bench.sample(200, seed=0)
    D = grassmann_matrix(output_subspaces(s))
    # oracle: blocks live on e1 and e2, at distance pi/2
    assert D[0, 3] == pytest.approx(np.pi / 2, abs=1e-8)
    assert D[0, 1] == pytest.approx(0.0, abs=1e-8)
    labels = cluster_output_components(s)
    assert len(set(labels)) == 2
    assert len(set(labels[:3])) == 1 and len(set(labels[3:])) == 1


def test_scaled_components_one_cluster(rng):
    X = rng.uniform(-1, 1, (40, 2))
    g = np.column_stack([2 * X[:, 0], 3 * X[:, 1] ** 2])
    s = _vector(np.column_stack([X[:, 0] ** 2 + X[:, 1] ** 3, 5 * (X[:, 0] ** 2 + X[:, 1] ** 3)]),
                np.stack([g, 5 * g], axis=1), X)
    assert set(cluster_output_components(s)) == {0}
