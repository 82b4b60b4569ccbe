"""JSON documents for refinement trees and their surrogates.

Floats are written with ``repr`` precision so a load/dump cycle is
bit-exact; NaN is stored as ``null``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict

import numpy as np

from .clustering import Clustering, Normalization, RefinementNode, RefinementTree, TopDownConfig
from .metrics import DistanceSpec
from .regression import GpModel, Hyper, RidgeSurrogate
from .subspace import ActiveSubspace

SCHEMA_VERSION = 1


def _f(x):
    x = float(x)
    return None if math.isnan(x) else x


def _arr(a):
    return np.asarray(a).tolist()


def _nan(x):
    return float("nan") if x is None else float(x)


def _subspace(sub: ActiveSubspace) -> dict:
    return {"eigenvalues": _arr(sub.eigenvalues), "basis": _arr(sub.basis), "r": sub.r}


def _gp(g: GpModel) -> dict:
    return {
        "signal_variance": g.hyper.signal_variance,
        "lengthscales": _arr(g.hyper.lengthscales),
        "noise_variance": g.hyper.noise_variance,
        "log_likelihood": _f(g.log_likelihood),
        "mean": g.mean,
        "train_y_coords": _arr(g.train_y_coords),
        "train_targets": _arr(g.train_targets),
    }


def _spec(spec: DistanceSpec) -> dict:
    if spec.kind == "euclidean":
        return {"kind": "euclidean"}
    return {"kind": spec.kind, "W": _arr(spec.W), "eigenvalues": _arr(spec.eigenvalues)}


def _clustering(c: Clustering) -> dict:
    return {
        "labels": _arr(c.labels),
        "representatives": _arr(c.representatives),
        "spec": _spec(c.spec),
        "medoid_idx": None if c.medoid_idx is None else _arr(c.medoid_idx),
        "objective": _f(c.objective),
    }


def node_to_dict(node: RefinementNode) -> dict:
    return {
        "sample_idx": _arr(node.sample_idx),
        "normalization": {"kind": node.normalization.kind, "shift": _arr(node.normalization.shift),
                          "scale": _arr(node.normalization.scale)},
        "local_as": _subspace(node.local_as),
        "score": _f(node.score),
        "indicator": _f(node.indicator),
        "surrogate": None if node.surrogate is None else [_gp(g) for g in node.surrogate.gps],
        "clustering": None if node.clustering is None else _clustering(node.clustering),
        "children": [node_to_dict(c) for c in node.children],
    }


def tree_to_dict(tree: RefinementTree) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(tree.config),
        "root": node_to_dict(tree.root),
    }


def dumps_tree(tree: RefinementTree) -> str:
    return json.dumps(tree_to_dict(tree), indent=1)


def _load_subspace(d) -> ActiveSubspace:
    return ActiveSubspace(np.array(d["eigenvalues"], dtype=float), np.array(d["basis"], dtype=float), int(d["r"]))


def _load_spec(d) -> DistanceSpec:
    if d["kind"] == "euclidean":
        return DistanceSpec()
    return DistanceSpec(d["kind"], np.array(d["W"], dtype=float), np.array(d["eigenvalues"], dtype=float))


def _load_gp(d) -> GpModel:
    hyper = Hyper(float(d["signal_variance"]), np.array(d["lengthscales"], dtype=float), float(d["noise_variance"]))
    Y = np.array(d["train_y_coords"], dtype=float)
    t = np.array(d["train_targets"], dtype=float)
    return GpModel.from_hyper(Y.reshape(len(t), -1), t, hyper, _nan(d["log_likelihood"]), mean=float(d["mean"]))


def node_from_dict(d) -> RefinementNode:
    norm = d["normalization"]
    sub = _load_subspace(d["local_as"])
    surrogate = None
    if d["surrogate"] is not None:
        surrogate = RidgeSurrogate(sub, tuple(_load_gp(g) for g in d["surrogate"]))
    clustering = None
    if d["clustering"] is not None:
        c = d["clustering"]
        clustering = Clustering(
            np.array(c["labels"], dtype=int),
            np.array(c["representatives"], dtype=float),
            _load_spec(c["spec"]),
            None if c["medoid_idx"] is None else np.array(c["medoid_idx"], dtype=int),
            _nan(c["objective"]),
        )
    return RefinementNode(
        np.array(d["sample_idx"], dtype=int),
        Normalization(norm["kind"], np.array(norm["shift"], dtype=float), np.array(norm["scale"], dtype=float)),
        sub,
        surrogate,
        _nan(d["score"]),
        [node_from_dict(c) for c in d["children"]],
        clustering,
        _nan(d["indicator"]),
    )


def tree_from_dict(d) -> RefinementTree:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported tree schema {d.get('schema_version')!r}")
    return RefinementTree(node_from_dict(d["root"]), TopDownConfig(**d["config"]))


def loads_tree(text: str) -> RefinementTree:
    return tree_from_dict(json.loads(text))
