"""Local active subspaces: clustering-based localized ridge approximation."""

from .benchmarks import REGISTRY, Benchmark, get as get_benchmark
from .clustering import (RefinementTree, TopDownConfig, build_tree, flat_tree, kmeans, kmedoids,
                         refine_dimensions, score_leaves)
from .dataset import SampleSet, Split, read_csv, rescale_to_unit_cube, split, write_csv
from .dimclass import LocalDimConfig, cluster_output_components, label_components, local_dimensions
from .metrics import DistanceSpec, grassmann_distance, principal_angles
from .regression import fit_gp, fit_ridge_surrogate, r2_score
from .sampling import SequenceKind, halton, sample_hypercube, sobol
from .subspace import ActiveSubspace, estimate, second_moment_matrix, subspace_distance

__version__ = "0.1.0"

__all__ = [
    "ActiveSubspace", "Benchmark", "DistanceSpec", "LocalDimConfig", "REGISTRY", "RefinementTree",
    "SampleSet", "SequenceKind", "Split", "TopDownConfig", "build_tree", "cluster_output_components",
    "estimate", "fit_gp", "fit_ridge_surrogate", "flat_tree", "get_benchmark", "grassmann_distance",
    "halton", "kmeans", "kmedoids", "label_components", "local_dimensions", "principal_angles",
    "r2_score", "read_csv", "refine_dimensions", "rescale_to_unit_cube", "sample_hypercube",
    "score_leaves", "second_moment_matrix", "sobol", "split", "subspace_distance", "write_csv",
]
