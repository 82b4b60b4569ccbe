"""Euclidean and active-subspace-weighted distances, Grassmann distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .subspace import ActiveSubspace, ValidationError


@dataclass(frozen=True)
class DistanceSpec:
    """Metric in force for clustering.

    ``as_weighted`` measures ``||diag(lam) W^T (x - y)||``; the directions
    are weighted by squared eigenvalues.
    """

    kind: str = "euclidean"
    W: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "as_weighted"):
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if self.kind == "as_weighted":
            W = np.asarray(self.W, dtype=float)
            lam = np.asarray(self.eigenvalues, dtype=float)
            if W.ndim != 2 or W.shape[0] != W.shape[1] or lam.shape != (W.shape[0],):
                raise ValueError("as_weighted needs a square W and matching eigenvalues")
            if np.abs(W.T @ W - np.eye(W.shape[0])).max() > 1e-10:
                raise ValidationError("W is not orthogonal")
            if np.any(lam < 0):
                raise ValidationError("eigenvalues must be non-negative")
            object.__setattr__(self, "W", W)
            object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def from_subspace(cls, sub: ActiveSubspace) -> "DistanceSpec":
        return cls("as_weighted", sub.basis, sub.eigenvalues)

    @property
    def dim(self) -> int | None:
        return None if self.W is None else self.W.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Map points so that this metric becomes plain Euclidean distance."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "euclidean":
            return X
        if X.shape[1] != self.W.shape[0]:
            raise ValueError(f"expected dimension {self.W.shape[0]}, got {X.shape[1]}")
        return (X @ self.W) * self.eigenvalues


def distance(spec: DistanceSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or (spec.dim is not None and x.shape[0] != spec.dim):
        raise ValueError("dimension mismatch")
    d = x - y
    if spec.kind == "as_weighted":
        d = spec.eigenvalues * (spec.W.T @ d)
    return float(np.sqrt(d @ d))


def pairwise(spec: DistanceSpec, X: np.ndarray) -> np.ndarray:
    Z = spec.transform(X)
    D = cdist(Z, Z)
    D = np.triu(D, 1)
    return D + D.T


def cross(spec: DistanceSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return cdist(spec.transform(X), spec.transform(Y))


def principal_angles(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=float).reshape(np.shape(U)[0], -1)
    V = np.asarray(V, dtype=float).reshape(np.shape(V)[0], -1)
    if U.shape != V.shape:
        raise ValueError("bases must have equal shapes")
    for name, A in (("U", U), ("V", V)):
        if np.abs(A.T @ A - np.eye(A.shape[1])).max() > 1e-8:
            raise ValidationError(f"{name} does not have orthonormal columns")
    C = U.T @ V
    cosines = np.clip(np.linalg.svd(C, compute_uv=False), 0.0, 1.0)
    # sines from the orthogonal residual keep small angles accurate
    sines = np.clip(np.sort(np.linalg.svd(V - U @ C, compute_uv=False)), 0.0, 1.0)
    return np.arctan2(sines, cosines)


def grassmann_distance(U: np.ndarray, V: np.ndarray) -> float:
    """Geodesic distance: root sum of squared principal angles."""
    theta = principal_angles(U, V)
    return float(np.sqrt(np.sum(theta**2)))
