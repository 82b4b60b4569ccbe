"""K-means, PAM K-medoids and hierarchical top-down refinement with local
active subspaces."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import metrics
from .dataset import SampleSet, Split
from .metrics import DistanceSpec
from .regression import RidgeSurrogate, fit_ridge_surrogate, r2_score
from .subspace import ActiveSubspace, eigendecompose, second_moment_matrix, select_dimension

log = logging.getLogger(__name__)


class ClusteringError(ValueError):
    pass


class SurrogateFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Clustering:
    """Flat partition. ``representatives`` are centroids (K-means) or the
    medoid points (K-medoids), in the coordinates the clustering was run in."""

    labels: np.ndarray
    representatives: np.ndarray
    spec: DistanceSpec = field(default_factory=DistanceSpec)
    medoid_idx: np.ndarray | None = None
    objective: float = float("nan")
    history: tuple = ()

    @property
    def K(self) -> int:
        return self.representatives.shape[0]

    def assign_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.representatives.shape[1]:
            raise ValueError(f"expected dimension {self.representatives.shape[1]}, got {X.shape[1]}")
        return np.argmin(metrics.cross(self.spec, X, self.representatives), axis=1)


def assign(c: Clustering, x) -> int:
    return int(c.assign_many(np.asarray(x, dtype=float).reshape(1, -1))[0])


def _check_k(N: int, K: int) -> None:
    if K < 1 or K > N:
        raise ClusteringError(f"need 1 <= K <= N, got K={K}, N={N}")


def within_ss(Z: np.ndarray, labels: np.ndarray, K: int) -> float:
    return float(sum(np.sum((Z[labels == j] - Z[labels == j].mean(axis=0)) ** 2)
                     for j in range(K) if np.any(labels == j)))


def _kmeanspp(Z: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    N = len(Z)
    centers = [int(rng.integers(N))]
    d2 = np.sum((Z - Z[centers[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(N), centers)
            nxt = int(remaining[0])
        else:
            nxt = int(rng.choice(N, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((Z - Z[nxt]) ** 2, axis=1))
    return Z[centers].copy()


def _lloyd(Z, K, rng, max_iter):
    C = _kmeanspp(Z, K, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = np.sum((Z[:, None, :] - C[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)
        for j in range(K):
            if not np.any(new == j):
                # reseed an empty cluster with the point farthest from its centre
                far = int(np.argmax(d2[np.arange(len(Z)), new]))
                new[far] = j
                d2[far] = 0.0
        C = np.array([Z[new == j].mean(axis=0) for j in range(K)])
        history.append(within_ss(Z, new, K))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return new, C, history


def kmeans(X, K: int, seed: int = 0, max_iter: int = 300, spec: DistanceSpec | None = None,
           n_init: int = 1) -> Clustering:
    """Lloyd iterations from k-means++ seeding.

    With an ``as_weighted`` spec the iterations run in the mapped space
    ``diag(lam) W^T x``; centroids are still reported in input coordinates.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_k(len(X), K)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    spec = spec or DistanceSpec()
    Z = spec.transform(X)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        labels, _, history = _lloyd(Z, K, rng, max_iter)
        wt = within_ss(Z, labels, K)
        if best is None or wt < best[0] - 1e-12:
            best = (wt, labels, history)
    wt, labels, history = best
    centroids = np.array([X[labels == j].mean(axis=0) for j in range(K)])
    c = Clustering(labels, centroids, spec, objective=wt, history=tuple(history))
    # ensure labels agree with nearest-representative routing
    relabel = c.assign_many(X)
    if not np.array_equal(relabel, labels) and all(np.any(relabel == j) for j in range(K)):
        c = Clustering(relabel, centroids, spec, objective=within_ss(Z, relabel, K), history=c.history)
    return c


def pam_objective(D: np.ndarray, medoids) -> float:
    return float(D[:, list(medoids)].min(axis=1).sum())


def kmedoids(X, K: int, spec: DistanceSpec | None = None, seed: int = 0, max_iter: int = 100,
             D: np.ndarray | None = None) -> Clustering:
    """Partitioning around medoids: greedy BUILD, then best-improvement SWAP
    passes until no swap lowers the absolute-error criterion."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = len(X)
    _check_k(N, K)
    spec = spec or DistanceSpec()
    if D is None:
        D = metrics.pairwise(spec, X)
    # BUILD
    medoids = [int(np.argmin(D.sum(axis=0)))]
    nearest = D[:, medoids[0]].copy()
    for _ in range(1, K):
        gain = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        cand = int(np.argmax(gain))
        medoids.append(cand)
        nearest = np.minimum(nearest, D[:, cand])
    history = [pam_objective(D, medoids)]
    # SWAP
    for _ in range(max_iter):
        Dm = D[:, medoids]
        order = np.argsort(Dm, axis=1, kind="stable")
        d1 = Dm[np.arange(N), order[:, 0]]
        d2 = Dm[np.arange(N), order[:, 1]] if K > 1 else np.full(N, np.inf)
        best_delta, best_swap = -1e-12 * max(history[-1], 1.0), None
        is_medoid = np.zeros(N, dtype=bool)
        is_medoid[medoids] = True
        for i in range(K):
            owned = order[:, 0] == i
            fallback = np.where(owned, d2, d1)  # distance if medoid i is removed
            new = np.minimum(fallback[:, None], D)  # column h: candidate h added
            delta = new.sum(axis=0) - d1.sum()
            delta[is_medoid] = np.inf
            h = int(np.argmin(delta))
            if delta[h] < best_delta:
                best_delta, best_swap = delta[h], (i, h)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        obj = pam_objective(D, medoids)
        if obj > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise AssertionError("PAM objective increased")
        history.append(obj)
    medoids_arr = np.array(medoids, dtype=int)
    labels = np.argmin(D[:, medoids_arr], axis=1)
    return Clustering(labels, X[medoids_arr].copy(), spec, medoids_arr, history[-1], tuple(history))


# ---------------------------------------------------------------------------
# hierarchical top-down refinement


@dataclass
class TopDownConfig:
    K_max: int = 2
    n_child_min: int = 2
    n_child_max: int = 2
    n_el: int = 10
    r_min: int = 1
    r_max: int = 1
    score_tolerance: float = 0.0
    inner_method: str = "kmedoids"
    inner_metric: str = "as_weighted"
    normalization: str = "uniform"
    metric_source: str = "local"
    dim_energy: float = 0.95
    gp_restarts: int = 2
    kmeans_n_init: int = 4
    seed: int = 0

    def validate(self, n: int | None = None) -> "TopDownConfig":
        if not 2 <= self.n_child_min <= self.n_child_max:
            raise ValueError("need 2 <= n_child_min <= n_child_max")
        if not 1 <= self.r_min <= self.r_max or (n is not None and self.r_max > n):
            raise ValueError("need 1 <= r_min <= r_max <= n")
        if self.n_el <= self.r_max:
            raise ValueError("n_el must exceed r_max")
        if self.K_max < 1:
            raise ValueError("K_max must be >= 1")
        if self.K_max > 1 and self.K_max < self.n_child_min:
            raise ValueError("K_max must be >= n_child_min")
        if self.inner_method not in ("kmeans", "kmedoids"):
            raise ValueError(f"unknown inner method {self.inner_method!r}")
        if self.inner_metric not in ("euclidean", "as_weighted"):
            raise ValueError(f"unknown inner metric {self.inner_metric!r}")
        if self.normalization not in ("uniform", "standardize"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.metric_source not in ("local", "global"):
            raise ValueError(f"unknown metric source {self.metric_source!r}")
        return self


@dataclass(frozen=True)
class Normalization:
    """Affine map ``z = (x - shift) / scale`` onto the node's reference box."""

    kind: str
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, kind: str = "uniform") -> "Normalization":
        X = np.atleast_2d(X)
        if kind == "uniform":
            lo, hi = X.min(axis=0), X.max(axis=0)
            shift, scale = (lo + hi) / 2.0, (hi - lo) / 2.0
        elif kind == "standardize":
            shift, scale = X.mean(axis=0), X.std(axis=0)
        else:
            raise ValueError(f"unknown normalization {kind!r}")
        scale = np.where(scale > 0, scale, 1.0)
        return cls(kind, shift, scale)

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.shift) / self.scale

    def apply_gradients(self, G) -> np.ndarray:
        return np.asarray(G, dtype=float) * self.scale


@dataclass(eq=False)
class RefinementNode:
    sample_idx: np.ndarray
    normalization: Normalization
    local_as: ActiveSubspace
    surrogate: RidgeSurrogate | None = None
    score: float = float("nan")
    children: list = field(default_factory=list)
    clustering: Clustering | None = None  # routes points among the children
    indicator: float = float("nan")

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def r(self) -> int:
        return self.local_as.r

    def predict(self, X) -> np.ndarray:
        if self.surrogate is None:
            raise SurrogateFitError("node has no surrogate")
        return self.surrogate.predict(self.normalization.apply(X))


@dataclass(eq=False)
class RefinementTree:
    root: RefinementNode
    config: TopDownConfig
    history: list = field(default_factory=list)
    unmet: list = field(default_factory=list)

    def leaves(self) -> list[RefinementNode]:
        return [node for _, node in self.walk() if node.is_leaf]

    def walk(self) -> Iterator[tuple[tuple, RefinementNode]]:
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop(0)
            yield path, node
            stack.extend((path + (i,), c) for i, c in enumerate(node.children))

    def route(self, X) -> np.ndarray:
        """Leaf index (position in ``leaves()``) for every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        leaf_ids = {id(leaf): k for k, leaf in enumerate(self.leaves())}
        out = np.empty(len(X), dtype=int)
        for i, x in enumerate(X):
            out[i] = leaf_ids[id(assign_tree(self, x))]
        return out

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        leaves = self.leaves()
        which = self.route(X)
        out = None
        for k, leaf in enumerate(leaves):
            mask = which == k
            if not np.any(mask):
                continue
            pred = leaf.predict(X[mask])
            if out is None:
                out = np.empty((len(X), pred.shape[1]))
            out[mask] = pred
        return out


def assign_tree(tree: RefinementTree, x) -> RefinementNode:
    x = np.asarray(x, dtype=float).ravel()
    node = tree.root
    if x.shape[0] != node.normalization.shift.shape[0]:
        raise ValueError("dimension mismatch")
    while node.children:
        z = node.normalization.apply(x)
        node = node.children[assign(node.clustering, z)]
    return node


def _local_subspace(G: np.ndarray, cfg: TopDownConfig) -> ActiveSubspace:
    sub = eigendecompose(second_moment_matrix(G))
    n = sub.n
    if np.any(sub.eigenvalues > 0):
        r = select_dimension(sub.eigenvalues, "energy", cfg.dim_energy)
    else:
        r = cfg.r_min
    return sub.with_dimension(int(np.clip(r, cfg.r_min, min(cfg.r_max, n))))


def _make_node(data: SampleSet, idx: np.ndarray, cfg: TopDownConfig) -> RefinementNode:
    norm = Normalization.fit(data.inputs[idx], cfg.normalization)
    G = norm.apply_gradients(data.require_gradients()[idx])
    return RefinementNode(np.asarray(idx, dtype=int), norm, _local_subspace(G, cfg))


def refinement_indicator(G: np.ndarray, labels: np.ndarray, cfg: TopDownConfig) -> tuple[float, list]:
    """Sum over clusters of the squared gradient residuals outside each
    cluster's own active subspace (gradients given in one common frame)."""
    total, subs = 0.0, []
    for j in range(labels.max() + 1):
        Gj = G[labels == j]
        sub = _local_subspace(Gj, cfg)
        resid = Gj - np.einsum("kpi,ij->kpj", Gj, sub.projector)
        total += float(np.sum(resid**2))
        subs.append(sub)
    return total, subs


def _inner_spec(node: RefinementNode, cfg: TopDownConfig, global_as: ActiveSubspace | None) -> DistanceSpec:
    if cfg.inner_metric == "euclidean":
        return DistanceSpec()
    sub = global_as if (cfg.metric_source == "global" and global_as is not None) else node.local_as
    return DistanceSpec.from_subspace(sub)


def _cluster(Z, k, cfg, spec, seed, D=None) -> Clustering:
    if cfg.inner_method == "kmeans":
        return kmeans(Z, k, seed=seed, spec=spec, n_init=cfg.kmeans_n_init)
    return kmedoids(Z, k, spec=spec, seed=seed, D=D)


def refine_node(node: RefinementNode, data: SampleSet, cfg: TopDownConfig, n_leaves: int = 1,
                global_as: ActiveSubspace | None = None) -> list[RefinementNode]:
    """Try every admissible number of children and keep the feasible split
    with the smallest refinement indicator (ties: fewer children)."""
    idx = node.sample_idx
    if len(idx) < 2 * cfg.n_el:
        return []
    Z = node.normalization.apply(data.inputs[idx])
    G = node.normalization.apply_gradients(data.require_gradients()[idx])
    spec = _inner_spec(node, cfg, global_as)
    D = metrics.pairwise(spec, Z) if cfg.inner_method == "kmedoids" else None
    best = None
    # indicators closer than roundoff of the node's gradient energy are ties
    tie = 1e-12 * float(np.sum(G**2))
    for k in range(cfg.n_child_min, cfg.n_child_max + 1):
        if n_leaves - 1 + k > cfg.K_max or k * cfg.n_el > len(idx):
            continue
        c = _cluster(Z, k, cfg, spec, cfg.seed, D)
        sizes = np.bincount(c.labels, minlength=k)
        if sizes.min() < cfg.n_el:
            continue
        ind, _ = refinement_indicator(G, c.labels, cfg)
        if best is None or ind < best[0] - tie:
            best = (ind, c)
    if best is None:
        return []
    ind, c = best
    node.clustering = c
    node.indicator = ind
    return [_make_node(data, idx[c.labels == j], cfg) for j in range(c.K)]


def _fit_leaf(node: RefinementNode, data: SampleSet, cfg: TopDownConfig, path=()) -> None:
    idx = node.sample_idx
    try:
        node.surrogate = fit_ridge_surrogate(node.normalization.apply(data.inputs[idx]), data.outputs[idx],
                                             node.local_as, restarts=cfg.gp_restarts, seed=cfg.seed)
    except Exception as exc:  # annotate with the node path
        raise SurrogateFitError(f"surrogate fit failed at node {list(path)}: {exc}") from exc


def _safe_r2(y, yhat) -> float:
    if len(y) < 2 or np.all(np.ptp(y, axis=0) == 0):
        return float("nan")
    return r2_score(y, yhat)


def score_leaves(tree: RefinementTree, data: SampleSet, eval_idx) -> float:
    """Pooled R^2 on ``eval_idx``; also stores each leaf's local score."""
    eval_idx = np.asarray(eval_idx, dtype=int)
    if len(eval_idx) == 0:
        return float("nan")
    X, F = data.inputs[eval_idx], data.outputs[eval_idx]
    which = tree.route(X)
    pred = np.empty_like(F)
    for k, leaf in enumerate(tree.leaves()):
        mask = which == k
        if np.any(mask):
            pred[mask] = leaf.predict(X[mask])
        leaf.score = _safe_r2(F[mask], pred[mask]) if np.any(mask) else float("nan")
    return _safe_r2(F, pred)


def build_tree(data: SampleSet, split: Split, cfg: TopDownConfig) -> RefinementTree:
    """Breadth-first refinement from the root until the leaf budget, the
    score tolerance or the queue runs out."""
    cfg.validate(data.n)
    train = np.asarray(split.train_idx, dtype=int)
    if len(train) == 0:
        raise ValueError("empty training split")
    val = np.asarray(split.validation_idx, dtype=int)
    use_tol = cfg.score_tolerance > 0
    if use_tol and len(val) == 0:
        raise ValueError("score tolerance needs a validation split")
    root = _make_node(data, train, cfg)
    tree = RefinementTree(root, cfg)
    _fit_leaf(root, data, cfg)
    global_as = root.local_as
    score = score_leaves(tree, data, val) if len(val) else float("nan")
    tree.history.append({"leaves": 1, "validation_r2": score})
    queue = deque([((), root)])
    n_leaves = 1
    while queue and n_leaves < cfg.K_max:
        if use_tol and score >= 1.0 - cfg.score_tolerance:
            break
        path, node = queue.popleft()
        children = refine_node(node, data, cfg, n_leaves, global_as)
        if not children:
            continue
        node.children = children
        node.surrogate = None
        n_leaves += len(children) - 1
        for i, child in enumerate(children):
            _fit_leaf(child, data, cfg, path + (i,))
            queue.append((path + (i,), child))
        score = score_leaves(tree, data, val) if len(val) else float("nan")
        tree.history.append({"leaves": n_leaves, "validation_r2": score})
        log.debug("refined node %s into %d children; validation R2 %.4f", list(path), len(children), score)
    return tree


def flat_tree(data: SampleSet, train_idx, method: str, K: int, cfg: TopDownConfig | None = None) -> RefinementTree:
    """Depth-one tree from a single K-means or K-medoids clustering of the
    training set, with one local ridge surrogate per cluster."""
    cfg = cfg or TopDownConfig()
    train = np.asarray(train_idx, dtype=int)
    root = _make_node(data, train, cfg)
    tree = RefinementTree(root, cfg)
    if K == 1:
        _fit_leaf(root, data, cfg)
        return tree
    Z = root.normalization.apply(data.inputs[train])
    if method == "kmeans":
        c = kmeans(Z, K, seed=cfg.seed, n_init=cfg.kmeans_n_init)
    elif method in ("kmedoids", "kmedoids-as"):
        spec = DistanceSpec.from_subspace(root.local_as) if method == "kmedoids-as" else DistanceSpec()
        c = kmedoids(Z, K, spec=spec, seed=cfg.seed)
    else:
        raise ValueError(f"unknown flat method {method!r}")
    root.clustering = c
    root.children = [_make_node(data, train[c.labels == j], cfg) for j in range(K)]
    for i, child in enumerate(root.children):
        _fit_leaf(child, data, cfg, (i,))
    return tree


def refine_dimensions(tree: RefinementTree, data: SampleSet, validation_idx, threshold: float = 0.95,
                      r_max: int | None = None) -> RefinementTree:
    """Raise the active dimension of leaves whose validation R^2 misses
    ``threshold``, one step at a time, refitting their surrogates."""
    val = np.asarray(validation_idx, dtype=int)
    if len(val) == 0:
        raise ValueError("validation split is empty")
    r_max = data.n if r_max is None else int(r_max)
    leaves = tree.leaves()
    which = tree.route(data.inputs[val])
    counts = np.bincount(which, minlength=len(leaves))
    tree.unmet = []
    for k in sorted(range(len(leaves)), key=lambda k: (-counts[k], k)):
        leaf = leaves[k]
        vk = val[which == k]
        score = _safe_r2(data.outputs[vk], leaf.predict(data.inputs[vk])) if len(vk) else float("nan")
        while np.isfinite(score) and score < threshold and leaf.r < r_max:
            leaf.local_as = leaf.local_as.with_dimension(leaf.r + 1)
            _fit_leaf(leaf, data, tree.config)
            score = _safe_r2(data.outputs[vk], leaf.predict(data.inputs[vk]))
        leaf.score = score
        if not (np.isfinite(score) and score >= threshold):
            tree.unmet.append(k)
    return tree
