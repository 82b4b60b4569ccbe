"""Config-driven experiment runner.

Subcommands: ``sample``, ``run``, ``sweep``, ``classify-dim`` and
``export-plots``. Configs are YAML; see README.md for the grammar.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import benchmarks as bm
from . import experiments as ex
from .clustering import RefinementTree, TopDownConfig, refine_dimensions
from .dataset import SampleSet, Split, read_csv, rescale_to_unit_cube, split as make_split, write_csv
from .dimclass import LocalDimConfig, mean_accuracy
from .sampling import SequenceKind
from .serialize import SCHEMA_VERSION, dumps_tree, loads_tree

log = logging.getLogger("localas")

# exit codes, one per pipeline stage
EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_REDUCE = 5
EXIT_CLUSTER = 6
EXIT_FIT = 7
EXIT_SCORE = 8
EXIT_EXPORT = 9

STAGE_CODES = {"config": EXIT_CONFIG, "data": EXIT_DATA, "reduce": EXIT_REDUCE, "cluster": EXIT_CLUSTER,
               "fit": EXIT_FIT, "score": EXIT_SCORE, "export": EXIT_EXPORT}

# report keys that legitimately differ between identical runs
VOLATILE_KEYS = ("created", "timing")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage} stage failed: {message}")
        self.stage = stage
        self.code = STAGE_CODES[stage]


class UnsupportedPlotError(ValueError):
    pass


@contextlib.contextmanager
def stage(name: str, timing: dict | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        if timing is not None:
            timing[name] = timing.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class ExperimentConfig:
    benchmark: str | None = None
    dataset: str | None = None
    bounds: list | None = None
    sampling: str = "uniform-pseudo"
    n_train: int = 400
    n_val: int = 0
    n_test: int = 600
    fractions: list = field(default_factory=lambda: [0.4, 0.0, 0.6])
    seed: int = 0
    method: str = "global-as"
    K: int = 1
    sweep_methods: list = field(default_factory=lambda: ["global-as", "kmeans", "kmedoids-as", "topdown"])
    sweep_K: list = field(default_factory=lambda: list(range(1, 11)))
    refine_threshold: float | None = None
    refine_r_max: int | None = None
    topdown: TopDownConfig = field(default_factory=TopDownConfig)
    localdim: LocalDimConfig = field(default_factory=LocalDimConfig)
    k_graph: int = 10
    k_classifier: int = 5
    label_metric: str = "as_weighted"
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        if (self.benchmark is None) == (self.dataset is None):
            raise ValueError("exactly one of 'benchmark' and 'dataset' must be set")
        if self.benchmark is not None:
            bench = bm.get(self.benchmark)
            n = bench.n
            if min(self.n_train, self.n_test) < 1 or self.n_val < 0:
                raise ValueError("n_train and n_test must be positive, n_val non-negative")
        else:
            if self.bounds is None:
                raise ValueError("a dataset source needs 'bounds'")
            n = len(self.bounds)
            if len(self.fractions) != 3 or any(f < 0 for f in self.fractions) or sum(self.fractions) > 1 + 1e-12:
                raise ValueError("fractions must be three non-negative numbers summing to at most 1")
        SequenceKind(self.sampling)
        if self.method not in ex.METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {ex.METHODS}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        bad = [m for m in self.sweep_methods if m not in ex.METHODS]
        if bad:
            raise ValueError(f"unknown sweep methods {bad}")
        if any(int(k) < 1 for k in self.sweep_K):
            raise ValueError("sweep K values must be >= 1")
        # the leaf budget of a run is K; K_max only matters inside sweeps
        k_max = self.K if self.method == "topdown" else max(self.topdown.K_max, self.topdown.n_child_min)
        replace(self.topdown, K_max=k_max).validate(n)
        if self.refine_threshold is not None and not 0 < self.refine_threshold <= 1:
            raise ValueError("refine_threshold must lie in (0, 1]")
        if self.refine_threshold is not None and self.n_val < 1 and self.dataset is None:
            raise ValueError("refine_threshold needs a validation split (n_val > 0)")
        if self.label_metric not in ("as_weighted", "euclidean"):
            raise ValueError(f"unknown label_metric {self.label_metric!r}")
        if self.k_graph < 1 or self.k_classifier < 1:
            raise ValueError("k_graph and k_classifier must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep_K"] = [int(k) for k in self.sweep_K]
        return d


def _build(cls, d: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ValueError(f"unknown keys in {where}: {unknown}")
    return cls(**d)


def config_from_dict(d: dict | None) -> ExperimentConfig:
    d = dict(d or {})
    td = d.pop("topdown", None) or {}
    ld = d.pop("localdim", None) or {}
    cfg = _build(ExperimentConfig, d, "config")
    cfg.topdown = _build(TopDownConfig, td, "topdown")
    cfg.localdim = _build(LocalDimConfig, ld, "localdim")
    return cfg


def load_config(path: str | None, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    d = {}
    if path is not None:
        with open(path) as fh:
            d = yaml.safe_load(fh) or {}
        if not isinstance(d, dict):
            raise ValueError("config file must hold a mapping")
    cfg = config_from_dict(d)
    if seed is not None:
        cfg.seed = seed
        cfg.topdown = replace(cfg.topdown, seed=seed)
    if out is not None:
        cfg.out = out
    return cfg.validate()


def load_data(cfg: ExperimentConfig) -> tuple[SampleSet, Split]:
    """Rescaled samples and the split; benchmarks draw each part independently."""
    if cfg.benchmark is not None:
        return ex.make_data(bm.get(cfg.benchmark), cfg.n_train, cfg.n_test, cfg.n_val, cfg.seed, cfg.sampling)
    s = read_csv(cfg.dataset, np.asarray(cfg.bounds, dtype=float))
    return rescale_to_unit_cube(s), make_split(s.N, tuple(cfg.fractions), cfg.seed)


def _node_rows(tree: RefinementTree) -> list[dict]:
    rows = []
    for path, node in tree.walk():
        rows.append({
            "path": list(path),
            "leaf": node.is_leaf,
            "size": int(len(node.sample_idx)),
            "r": int(node.r),
            "eigenvalues": [float(v) for v in node.local_as.eigenvalues],
            "score": None if np.isnan(node.score) else float(node.score),
            "indicator": None if np.isnan(node.indicator) else float(node.indicator),
        })
    return rows


def write_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _report(kind: str, cfg: ExperimentConfig, body: dict, timing: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, "config": cfg.to_dict(),
            "created": datetime.now(timezone.utc).isoformat(), "timing": timing, **body}


def strip_volatile(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k not in VOLATILE_KEYS}


def export_summary_plot_data(tree: RefinementTree, data: SampleSet, path, idx=None) -> int:
    """Write ``y1[,y2],f,cluster`` rows for the samples in ``idx`` (default:
    the training samples held by the tree), one row per sample.

    Active coordinates are taken in the frame of the leaf each sample is
    routed to. Returns the number of rows.
    """
    leaves = tree.leaves()
    r = max(leaf.r for leaf in leaves)
    if r > 2:
        raise UnsupportedPlotError(f"summary plots need r <= 2, model has r = {r}")
    idx = np.sort(tree.root.sample_idx) if idx is None else np.asarray(idx, dtype=int)
    X = data.inputs[idx]
    route = tree.route(X)
    header = [f"y{i + 1}" for i in range(r)] + ["f", "cluster"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, (x, leaf_id) in enumerate(zip(X, route)):
            leaf = leaves[leaf_id]
            y = leaf.normalization.apply(x[None, :]) @ leaf.local_as.W1
            y = np.pad(y.ravel(), (0, r - leaf.r), constant_values=0.0)
            w.writerow([repr(float(v)) for v in y] + [repr(float(data.outputs[idx[k], 0])), int(leaf_id)])
    return len(idx)


def write_labels(path, dims, comps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "dim", "component"])
        for i, (d, c) in enumerate(zip(dims, comps)):
            w.writerow([i, int(d), int(c)])


def cmd_sample(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    timing: dict = {}
    with stage("data", timing):
        if cfg.benchmark is None:
            raise ValueError("sampling needs a benchmark source")
        bench = bm.get(cfg.benchmark)
        s = bench.sample(cfg.n_train + cfg.n_val + cfg.n_test, kind=cfg.sampling, seed=cfg.seed)
    with stage("export", timing):
        out.mkdir(parents=True, exist_ok=True)
        write_csv(s, out / "samples.csv")
        write_json(_report("sample", cfg, {"N": s.N, "n": s.n, "p": s.p,
                                           "bounds": bench.bounds.tolist()}, timing), out / "report.json")
    return EXIT_OK


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Sample, reduce, cluster, fit, score and write report, tree and plot data."""
    out = Path(cfg.out)
    timing: dict = {}
    with stage("data", timing):
        data, split = load_data(cfg)
    with stage("fit", timing):
        tree = ex.fit_method(data, split, cfg.method, cfg.K, cfg.topdown)
    with stage("score", timing):
        score_before = ex.test_score(tree, data, split.test_idx)
        refined = None
        if cfg.refine_threshold is not None:
            refine_dimensions(tree, data, split.validation_idx, cfg.refine_threshold, cfg.refine_r_max)
            refined = ex.test_score(tree, data, split.test_idx)
    body = {
        "method": cfg.method,
        "K": cfg.K,
        "n_leaves": len(tree.leaves()),
        "r2_test": float(refined if refined is not None else score_before),
        "r2_test_before_refinement": float(score_before),
        "leaf_dims": [int(leaf.r) for leaf in tree.leaves()],
        "cluster_sizes": [int(len(leaf.sample_idx)) for leaf in tree.leaves()],
        "global_eigenvalues": [float(v) for v in tree.root.local_as.eigenvalues],
        "unmet_leaves": [int(k) for k in tree.unmet],
        "nodes": _node_rows(tree),
        "summary_plot": None,
    }
    with stage("export", timing):
        out.mkdir(parents=True, exist_ok=True)
        (out / "tree.json").write_text(dumps_tree(tree) + "\n")
        write_csv(data, out / "data.csv")
        write_json({"train": split.train_idx.tolist(), "validation": split.validation_idx.tolist(),
                    "test": split.test_idx.tolist()}, out / "split.json")
        try:
            export_summary_plot_data(tree, data, out / "summary_plot.csv")
            body["summary_plot"] = "summary_plot.csv"
        except UnsupportedPlotError as exc:
            log.warning("%s", exc)
        report = _report("run", cfg, body, timing)
        write_json(report, out / "report.json")
    return report


def cmd_run(cfg: ExperimentConfig, args) -> int:
    report = run_experiment(cfg)
    print(f"R2 test = {report['r2_test']:.4f} with {report['n_leaves']} leaves, dims {report['leaf_dims']}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    timing: dict = {}
    with stage("data", timing):
        data, split = load_data(cfg)
    with stage("fit", timing):
        rows = ex.sweep_clusters(data, split, cfg.sweep_methods, cfg.sweep_K, cfg.topdown, jobs=args.jobs)
    cells = [{k: v for k, v in row.items() if k != "seconds"} for row in rows]
    for c in cells:
        c["r2"] = None if np.isnan(c["r2"]) else float(c["r2"])
    timing["cells"] = [row["seconds"] for row in rows]
    with stage("export", timing):
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["K", "method", "r2", "leaves", "error"])
            for c in cells:
                w.writerow([c["K"], c["method"], "" if c["r2"] is None else repr(c["r2"]), c["leaves"],
                            c["error"] or ""])
        write_json(_report("sweep", cfg, {"cells": cells}, timing), out / "report.json")
    for c in cells:
        r2 = "failed" if c["r2"] is None else f"{c['r2']:.4f}"
        print(f"{c['method']:>12s} K={c['K']:<3d} R2={r2}")
    return EXIT_OK


def cmd_classify(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    timing: dict = {}
    with stage("data", timing):
        data, split = load_data(cfg)
        train = data.subset(split.train_idx)
    with stage("reduce", timing):
        lab = ex.label_dataset(train, cfg.localdim, cfg.k_graph, cfg.k_classifier, cfg.label_metric)
    body = {"n_train": int(train.N), "n_components": int(lab["components"].max() + 1),
            "dim_counts": {int(d): int(c) for d, c in zip(*np.unique(lab["dims"], return_counts=True))}}
    with stage("score", timing):
        if cfg.benchmark == "hyper-paraboloid" and len(split.test_idx):
            # the box is symmetric, so rescaling keeps the quadrant signs
            Xte = data.inputs[split.test_idx]
            truth = bm.paraboloid_case(Xte)
            dims, comps = lab["dims"], lab["components"]
            piece = bm.paraboloid_case(train.inputs)
            comp_piece = {c: int(np.bincount(piece[comps == c]).argmax()) for c in np.unique(comps)}
            comp_pred = [comp_piece[c] for c in ex.predict_labels(lab["component_classifier"], comps, Xte)]
            body["dim_accuracy"] = mean_accuracy(ex.predict_labels(lab["dim_classifier"], dims, Xte), truth)
            body["component_accuracy"] = mean_accuracy(np.array(comp_pred), truth)
    with stage("export", timing):
        out.mkdir(parents=True, exist_ok=True)
        write_labels(out / "labels.csv", lab["dims"], lab["components"])
        write_json(_report("classify-dim", cfg, body, timing), out / "report.json")
    msg = f"{body['n_components']} components, dims {body['dim_counts']}"
    if "dim_accuracy" in body:
        msg += f", test dimension accuracy {body['dim_accuracy']:.3f}"
    print(msg)
    return EXIT_OK


def cmd_export(cfg: ExperimentConfig, args) -> int:
    run_dir = Path(args.run)
    out = Path(args.out) if args.out else run_dir
    with stage("data"):
        tree = loads_tree((run_dir / "tree.json").read_text())
        data = read_csv(run_dir / "data.csv", np.tile([-1.0, 1.0], (tree.root.local_as.basis.shape[0], 1)))
    with stage("export"):
        out.mkdir(parents=True, exist_ok=True)
        rows = export_summary_plot_data(tree, data, out / "summary_plot.csv")
    print(f"wrote {rows} rows to {out / 'summary_plot.csv'}")
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "run": cmd_run, "sweep": cmd_sweep, "classify-dim": cmd_classify,
            "export-plots": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="localas", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--jobs", type=int, default=1, help="concurrent sweep cells")
        sp.add_argument("--out", help="output directory")
        if name == "export-plots":
            sp.add_argument("--run", required=True, help="directory written by 'run'")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("LAS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "export-plots":
            cfg = None
        else:
            with stage("config"):
                if args.jobs < 1:
                    raise ValueError("--jobs must be >= 1")
                cfg = load_config(args.config, args.seed, args.out)
        return COMMANDS[args.command](cfg, args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
