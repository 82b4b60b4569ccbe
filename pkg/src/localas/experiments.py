"""Benchmark pipelines: data generation, method fitting, sweeps and studies."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import benchmarks as bm
from .clustering import RefinementTree, TopDownConfig, build_tree, flat_tree, score_leaves
from .dataset import SampleSet, Split, rescale_to_unit_cube
from .dimclass import (LocalDimConfig, cluster_output_components, label_components, local_dimensions,
                       mean_accuracy, train_label_classifier)
from .metrics import DistanceSpec
from .regression import fit_ridge_surrogate, r2_score
from .subspace import eigendecompose, estimate, second_moment_matrix, subspace_distance

log = logging.getLogger(__name__)

METHODS = ("global-as", "kmeans", "kmedoids-as", "topdown")


def make_data(bench: bm.Benchmark, n_train: int, n_test: int, n_val: int = 0, seed: int = 0,
              kind: str = "uniform-pseudo") -> tuple[SampleSet, Split]:
    """Independent train/validation/test draws, concatenated and rescaled
    to the unit cube."""
    parts = [bench.sample(N, kind=kind, seed=seed + 7919 * i) for i, N in enumerate((n_train, n_val, n_test)) if N]
    s = SampleSet(np.vstack([p.inputs for p in parts]), np.vstack([p.outputs for p in parts]),
                  np.vstack([p.gradients for p in parts]), bench.bounds)
    edges = np.cumsum([0, n_train, n_val, n_test])
    split = Split(np.arange(edges[0], edges[1]), np.arange(edges[1], edges[2]), np.arange(edges[2], edges[3]))
    return rescale_to_unit_cube(s), split


def fit_method(data: SampleSet, split: Split, method: str, K: int, cfg: TopDownConfig | None = None) -> RefinementTree:
    cfg = cfg or TopDownConfig()
    if method == "global-as" or K == 1:
        return flat_tree(data, split.train_idx, "kmeans", 1, cfg)
    if method in ("kmeans", "kmedoids-as", "kmedoids"):
        return flat_tree(data, split.train_idx, method, K, cfg)
    if method == "topdown":
        return build_tree(data, split, replace(cfg, K_max=K))
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def test_score(tree: RefinementTree, data: SampleSet, idx) -> float:
    return score_leaves(tree, data, idx)


def _sweep_cell(args):
    data, split, method, K, cfg = args
    t0 = time.perf_counter()
    try:
        tree = fit_method(data, split, method, K, cfg)
        r2 = test_score(tree, data, split.test_idx)
        return {"K": K, "method": method, "r2": r2, "leaves": len(tree.leaves()),
                "seconds": time.perf_counter() - t0, "error": None}
    except Exception as exc:  # recorded in the table, sweep continues
        return {"K": K, "method": method, "r2": float("nan"), "leaves": 0,
                "seconds": time.perf_counter() - t0, "error": f"{type(exc).__name__}: {exc}"}


def sweep_clusters(data: SampleSet, split: Split, methods, Ks, cfg: TopDownConfig | None = None,
                   jobs: int = 1) -> list[dict]:
    """One fit per (method, K) on a shared split; failures are recorded per cell."""
    cfg = cfg or TopDownConfig()
    cells = [(data, split, m, int(K), cfg) for m in methods for K in Ks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(c) for c in cells]


# presets matching the per-benchmark hyper-parameters of the experiments

def preset(name: str) -> tuple[bm.Benchmark, dict, TopDownConfig]:
    if name == "quartic":
        return bm.quartic, {"n_train": 400, "n_test": 600}, TopDownConfig(
            n_child_min=3, n_child_max=3, n_el=10, r_max=1, inner_method="kmedoids",
            inner_metric="as_weighted", normalization="uniform")
    if name == "radial-cosine":
        return bm.radial_cosine, {"n_train": 500, "n_test": 500}, TopDownConfig(
            n_child_min=2, n_child_max=2, n_el=10, r_max=1, inner_method="kmeans",
            inner_metric="euclidean", normalization="uniform")
    if name == "ebola":
        return bm.ebola, {"n_train": 300, "n_test": 500}, TopDownConfig(
            n_child_min=2, n_child_max=10, n_el=10, r_max=1, inner_method="kmedoids",
            inner_metric="as_weighted", normalization="uniform")
    raise KeyError(f"no preset for {name!r}")


def topdown_config_for(name: str, K: int, cfg: TopDownConfig) -> TopDownConfig:
    """Ebola's top-down runs let the children range reach the total budget."""
    if name == "ebola":
        return replace(cfg, K_max=K, n_child_max=max(K, cfg.n_child_min))
    return replace(cfg, K_max=K)


# classification by local dimension

def label_dataset(train: SampleSet, cfg: LocalDimConfig = LocalDimConfig(), k_graph: int = 10, k: int = 5,
                  metric: str = "as_weighted") -> dict:
    """Local dimensions and same-dimension graph components of a training
    set, with k-NN classifiers for both label kinds."""
    if metric not in ("as_weighted", "euclidean"):
        raise ValueError(f"unknown metric {metric!r}")
    spec = DistanceSpec.from_subspace(estimate(train)) if metric == "as_weighted" else DistanceSpec()
    dims = local_dimensions(train, cfg, spec)
    comps = label_components(train, dims, k_graph, spec)
    out = {"dims": dims, "components": comps, "spec": spec, "dim_classifier": None, "component_classifier": None}
    if len(np.unique(dims)) > 1:
        out["dim_classifier"] = train_label_classifier(train.inputs, dims, k, spec)
    if len(np.unique(comps)) > 1:
        out["component_classifier"] = train_label_classifier(train.inputs, comps, k, spec)
    return out


def predict_labels(clf, labels, X):
    """Classifier prediction; a single-label training set predicts that label."""
    return np.full(len(X), labels[0]) if clf is None else clf.predict(X)


def classification_study(n_train: int, n_test: int = 1000, seed: int = 0,
                         cfg: LocalDimConfig = LocalDimConfig(), k_graph: int = 10, k: int = 5,
                         metric: str = "as_weighted") -> dict:
    """Label hyper-paraboloid samples by local dimension and graph component,
    train k-NN classifiers and score them on the true pieces of the domain.

    On this benchmark the piece index equals the local dimension. Component
    labels are mapped to the piece holding most of their training members
    before scoring.
    """
    bench = bm.hyper_paraboloid
    train = rescale_to_unit_cube(bench.sample(n_train, seed=seed))
    test = rescale_to_unit_cube(bench.sample(n_test, seed=seed + 104_729))
    lab = label_dataset(train, cfg, k_graph, k, metric)
    dims, comps = lab["dims"], lab["components"]
    true_train = bm.paraboloid_case(train.inputs)
    true_test = bm.paraboloid_case(test.inputs)
    comp_piece = {c: int(np.bincount(true_train[comps == c]).argmax()) for c in np.unique(comps)}
    comp_pred = np.array([comp_piece[c] for c in predict_labels(lab["component_classifier"], comps, test.inputs)])
    return {
        "n_train": n_train,
        "dim_accuracy": mean_accuracy(predict_labels(lab["dim_classifier"], dims, test.inputs), true_test),
        "component_accuracy": mean_accuracy(comp_pred, true_test),
        "train_dim_accuracy": mean_accuracy(dims, true_train),
        "n_components": int(comps.max() + 1),
        "dims": dims,
        "components": comps,
    }


# Monte Carlo convergence of the active subspace

def subspace_convergence(bench: bm.Benchmark, Ns=(250, 500, 1000, 2000, 4000), n_seeds: int = 20,
                         reference_N: int = 100_000, r: int = 1, seed: int = 0) -> dict:
    """Distance between the r-dimensional active subspace estimated from N
    samples and a large-sample reference, for pseudo-random and Halton
    designs; returns per-N medians and the log-log slope of the pseudo-random
    medians."""
    lo, hi = bench.bounds[:, 0], bench.bounds[:, 1]
    half = (hi - lo) / 2.0

    def w1(X):
        G = bench.gradient(X)[:, 0, :] * half
        return eigendecompose(second_moment_matrix(G)).basis[:, :r]

    ref = w1(bench.sample(reference_N, seed=seed + 1_000_003, gradients=False).inputs)
    out = {"N": list(Ns), "pseudo": [], "halton": []}
    for N in Ns:
        d_mc, d_qmc = [], []
        for s in range(n_seeds):
            X = bench.sample(N, seed=seed + 31 * s + 1, gradients=False).inputs
            d_mc.append(subspace_distance(w1(X), ref))
            Xh = bench.sample(N, kind="halton", seed=1 + s * 4099, gradients=False).inputs
            d_qmc.append(subspace_distance(w1(Xh), ref))
        out["pseudo"].append(float(np.median(d_mc)))
        out["halton"].append(float(np.median(d_qmc)))
    out["slope"] = float(np.polyfit(np.log(Ns), np.log(out["pseudo"]), 1)[0])
    return out


# vector outputs

def minimal_dimension(data: SampleSet, split: Split, outputs, threshold: float, r_max: int | None = None,
                      restarts: int = 1, seed: int = 0) -> int:
    """Smallest global AS dimension whose ridge surrogate reaches ``threshold``
    mean test R^2 on the selected output components."""
    outputs = list(outputs)
    tr, te = split.train_idx, split.test_idx
    G = data.require_gradients()[:, outputs, :]
    sub = eigendecompose(second_moment_matrix(G[tr]))
    r_max = data.n if r_max is None else r_max
    for r in range(1, r_max + 1):
        model = fit_ridge_surrogate(data.inputs[tr], data.outputs[np.ix_(tr, outputs)], sub, r,
                                    restarts=restarts, seed=seed)
        if r2_score(data.outputs[np.ix_(te, outputs)], model.predict(data.inputs[te])) >= threshold:
            return r
    return r_max


def vector_output_study(n_train: int = 200, n_test: int = 200, threshold: float = 0.95, seed: int = 0,
                        k_graph: int = 3) -> dict:
    bench = bm.block_vector_benchmark()
    data, split = make_data(bench, n_train, n_test, seed=seed)
    labels = cluster_output_components(data.subset(split.train_idx), k_graph=k_graph)
    without = minimal_dimension(data, split, range(data.p), threshold, seed=seed)
    per_cluster = {}
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        per_cluster[int(c)] = (len(members), minimal_dimension(data, split, members, threshold, seed=seed))
    weighted = sum(m * r for m, r in per_cluster.values()) / data.p
    return {"labels": labels, "n_clusters": int(labels.max() + 1), "dim_without": without,
            "dims_with": per_cluster, "weighted_dim_with": weighted}


# counterexample

def counterexample_study(eps: float = 1e-2, omega: float = 1e4, N: int = 1_000_000, seed: int = 0) -> dict:
    """Closed forms against Monte Carlo, the published conditions and the
    error/indicator comparison.

    The global matrix is estimated by stratified sampling: N uniform points
    in each of the three slabs, weighted by the slab measures.
    """
    bench = bm.counterexample_benchmark(eps, omega)
    exact = bm.counterexample_matrices(eps, omega)
    rng = np.random.default_rng(seed)
    slabs = {"A": (-1.0, -eps), "B": (-eps, eps), "C": (eps, 1.0)}
    mc = {}
    for name, (a, b) in slabs.items():
        X = np.column_stack([rng.uniform(a, b, N), rng.uniform(-1, 1, N)])
        mc[name] = second_moment_matrix(bench.gradient(X))
    weights = {"A": (1 - eps) / 2, "B": eps, "C": (1 - eps) / 2}
    mc["global"] = sum(weights[k] * mc[k] for k in slabs)
    return {"exact": exact, "mc": mc, "conditions": bm.counterexample_conditions(eps, omega),
            **bm.counterexample_errors(eps, omega)}
