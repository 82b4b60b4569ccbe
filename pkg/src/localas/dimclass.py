"""Local active-subspace dimension, region labelling and label classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .dataset import SampleSet
from .metrics import DistanceSpec, grassmann_distance
from .subspace import eigendecompose, second_moment_matrix, select_dimension


class DegenerateLabelsError(ValueError):
    pass


@dataclass(frozen=True)
class LocalDimConfig:
    energy: float = 0.999
    n_neighbors: int = 6
    max_dim: int = 4

    def __post_init__(self):
        if not 0 < self.energy <= 1:
            raise ValueError("energy threshold must lie in (0, 1]")
        if self.max_dim < 1 or self.n_neighbors < self.max_dim + 1:
            raise ValueError("need n_neighbors >= max_dim + 1 >= 2")


def _dim_from_gradients(G: np.ndarray, cfg: LocalDimConfig) -> int:
    lam = eigendecompose(second_moment_matrix(G)).eigenvalues
    if not np.any(lam > 0):
        return 1
    return int(min(select_dimension(lam, "energy", cfg.energy), cfg.max_dim))


def _space(X, spec: DistanceSpec | None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X if spec is None else spec.transform(X)


def local_as_dimension(s: SampleSet, i: int, cfg: LocalDimConfig = LocalDimConfig(),
                       spec: DistanceSpec | None = None) -> int:
    """Energy-threshold dimension of the gradients of the ``n_neighbors``
    samples nearest to sample ``i`` (itself included).

    Neighbours are Euclidean unless ``spec`` gives another metric.
    """
    G = s.require_gradients()
    if s.N < cfg.n_neighbors:
        raise ValueError(f"need at least {cfg.n_neighbors} samples, got {s.N}")
    Z = _space(s.inputs, spec)
    _, nb = cKDTree(Z).query(Z[i], k=cfg.n_neighbors)
    return _dim_from_gradients(G[np.atleast_1d(nb)], cfg)


def local_dimensions(s: SampleSet, cfg: LocalDimConfig = LocalDimConfig(),
                     spec: DistanceSpec | None = None) -> np.ndarray:
    G = s.require_gradients()
    if s.N < cfg.n_neighbors:
        raise ValueError(f"need at least {cfg.n_neighbors} samples, got {s.N}")
    Z = _space(s.inputs, spec)
    _, nb = cKDTree(Z).query(Z, k=cfg.n_neighbors)
    nb = nb.reshape(s.N, -1)
    return np.array([_dim_from_gradients(G[row], cfg) for row in nb], dtype=int)


def local_dimensions_at(X, reference: SampleSet, gradients, cfg: LocalDimConfig = LocalDimConfig(),
                        spec: DistanceSpec | None = None) -> np.ndarray:
    """Local dimensions of new points given their own gradients, using the
    ``n_neighbors - 1`` nearest reference samples as neighbourhood."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    G = np.asarray(gradients, dtype=float).reshape(len(X), -1, reference.n)
    Gref = reference.require_gradients()
    _, nb = cKDTree(_space(reference.inputs, spec)).query(_space(X, spec), k=cfg.n_neighbors - 1)
    nb = nb.reshape(len(X), -1)
    return np.array([_dim_from_gradients(np.concatenate([G[[k]], Gref[nb[k]]]), cfg)
                     for k in range(len(X))], dtype=int)


def canonical_labels(labels) -> np.ndarray:
    """Relabel so ids appear in first-occurrence order starting at 0."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=int)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inverse]


def knn_graph(X: np.ndarray, k: int):
    """Symmetric k-nearest-neighbour edge list (i < j)."""
    X = np.atleast_2d(X)
    k = min(k, len(X) - 1)
    if k < 1:
        return np.empty((0, 2), dtype=int)
    _, nb = cKDTree(X).query(X, k=k + 1)
    rows = np.repeat(np.arange(len(X)), k)
    cols = nb[:, 1:].ravel()
    edges = np.column_stack([np.minimum(rows, cols), np.maximum(rows, cols)])
    edges = edges[edges[:, 0] != edges[:, 1]]
    return np.unique(edges, axis=0)


def _components(n: int, edges: np.ndarray) -> np.ndarray:
    if len(edges) == 0:
        return np.arange(n)
    A = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = connected_components(A, directed=False)
    return canonical_labels(labels)


def label_components(s: SampleSet | np.ndarray, dims, k_graph: int = 10,
                     spec: DistanceSpec | None = None) -> np.ndarray:
    """Connected components of the k-NN graph restricted to edges joining
    samples of equal local dimension."""
    if k_graph < 1:
        raise ValueError("k_graph must be >= 1")
    X = s.inputs if isinstance(s, SampleSet) else np.atleast_2d(np.asarray(s, dtype=float))
    dims = np.asarray(dims)
    edges = knn_graph(_space(X, spec), k_graph)
    edges = edges[dims[edges[:, 0]] == dims[edges[:, 1]]]
    return _components(len(X), edges)


@dataclass(frozen=True)
class KNNClassifier:
    """Majority-vote k-nearest-neighbour classifier; vote ties go to the
    smallest label."""

    points: np.ndarray
    labels: np.ndarray
    k: int = 5
    spec: DistanceSpec = DistanceSpec()

    def predict(self, X) -> np.ndarray:
        Z = self.spec.transform(np.atleast_2d(np.asarray(X, dtype=float)))
        k = min(self.k, len(self.points))
        _, nb = cKDTree(self.spec.transform(self.points)).query(Z, k=k)
        nb = nb.reshape(len(Z), -1)
        votes = self.labels[nb]
        classes = np.unique(self.labels)
        counts = (votes[:, :, None] == classes[None, None, :]).sum(axis=1)
        return classes[np.argmax(counts, axis=1)]


def train_label_classifier(X, labels, k: int = 5, spec: DistanceSpec | None = None) -> KNNClassifier:
    X = X.inputs if isinstance(X, SampleSet) else np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(np.unique(labels)) < 2:
        raise DegenerateLabelsError("need at least two distinct labels")
    return KNNClassifier(X.copy(), labels.copy(), k, spec or DistanceSpec())


def mean_accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("length mismatch")
    if pred.size == 0:
        raise ValueError("empty label vectors")
    return float(np.mean(pred == truth))


def output_subspaces(s: SampleSet, r_cmp: int = 1) -> list[np.ndarray]:
    """Leading ``r_cmp`` active directions of every output component."""
    G = s.require_gradients()
    return [eigendecompose(second_moment_matrix(G[:, j, :])).basis[:, :r_cmp] for j in range(s.p)]


def grassmann_matrix(bases) -> np.ndarray:
    p = len(bases)
    D = np.zeros((p, p))
    for a in range(p):
        for b in range(a + 1, p):
            D[a, b] = D[b, a] = grassmann_distance(bases[a], bases[b])
    return D


def cluster_output_components(s: SampleSet, k_graph: int = 3, r_cmp: int = 1,
                              threshold: float | None = None) -> np.ndarray:
    """Group output components whose active subspaces are close.

    Edges join each component to its ``k_graph`` nearest components in
    Grassmann distance, kept only when the distance is at most
    ``threshold`` (default: the 25th percentile of all pairwise distances).
    """
    if s.p < 2:
        raise ValueError("need a vector output (p >= 2)")
    D = grassmann_matrix(output_subspaces(s, r_cmp))
    off = D[np.triu_indices(s.p, 1)]
    theta = float(np.percentile(off, 25)) if threshold is None else float(threshold)
    theta += 1e-8
    k = min(k_graph, s.p - 1)
    edges = []
    for a in range(s.p):
        order = [b for b in np.argsort(D[a], kind="stable") if b != a][:k]
        edges += [(min(a, b), max(a, b)) for b in order if D[a, b] <= theta]
    edges = np.unique(np.array(edges, dtype=int).reshape(-1, 2), axis=0)
    return _components(s.p, edges)
