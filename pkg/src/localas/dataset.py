"""Sample containers, rescaling, splitting and CSV ingestion."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

BOUNDS_SLACK = 1e-12


class DatasetError(ValueError):
    """Base class for malformed sample sets."""


class InvalidDomainError(DatasetError):
    pass


class MissingGradientsError(DatasetError):
    """An operation needs gradients but the sample set has none."""


class SplitSizeError(DatasetError):
    pass


class EvaluationError(DatasetError):
    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class SampleSet:
    """Inputs, outputs and (optionally) gradients of ``N`` samples.

    Parameters
    ----------
    inputs : (N, n) array
    outputs : (N, p) array; a 1-D array is promoted to a single column.
    gradients : (N, p, n) array or None
        ``gradients[k, j, i]`` is the derivative of output ``j`` w.r.t.
        input ``i`` at sample ``k``.
    bounds : (n, 2) array of ``(lo, hi)`` pairs.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    gradients: np.ndarray | None = None
    bounds: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if X.ndim != 2:
            raise DatasetError("inputs must be a matrix")
        N, n = X.shape
        F = np.asarray(self.outputs, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.ndim != 2 or F.shape[0] != N:
            raise DatasetError(f"outputs must have {N} rows, got shape {F.shape}")
        p = F.shape[1]
        if N < 1 or n < 1 or p < 1:
            raise DatasetError("need N, n, p >= 1")
        G = None
        if self.gradients is not None:
            G = np.asarray(self.gradients, dtype=float)
            if G.ndim == 2 and p == 1:
                G = G[:, None, :]
            if G.shape != (N, p, n):
                raise DatasetError(f"gradients must have shape {(N, p, n)}, got {G.shape}")
        if self.bounds is None:
            B = np.column_stack([X.min(axis=0), X.max(axis=0)])
        else:
            B = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if B.shape != (n, 2):
            raise DatasetError(f"bounds must have shape {(n, 2)}, got {B.shape}")
        if np.any(B[:, 0] >= B[:, 1]):
            raise InvalidDomainError("every bound needs lo < hi")
        if np.any(X < B[:, 0] - BOUNDS_SLACK) or np.any(X > B[:, 1] + BOUNDS_SLACK):
            raise InvalidDomainError("inputs lie outside the bounds")
        for name, arr in (("inputs", X), ("outputs", F), ("gradients", G), ("bounds", B)):
            if arr is not None:
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.outputs.shape[1]

    @property
    def has_gradients(self) -> bool:
        return self.gradients is not None

    def require_gradients(self) -> np.ndarray:
        if self.gradients is None:
            raise MissingGradientsError("this operation requires gradients")
        return self.gradients

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx, dtype=int)
        G = None if self.gradients is None else self.gradients[idx]
        return SampleSet(self.inputs[idx], self.outputs[idx], G, self.bounds)


@dataclass(frozen=True)
class Split:
    train_idx: np.ndarray
    validation_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        sets = [set(map(int, a)) for a in (self.train_idx, self.validation_idx, self.test_idx)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise SplitSizeError("split index sets overlap")


def _check_bounds(bounds: np.ndarray) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise InvalidDomainError("degenerate bound: hi must exceed lo")
    return bounds


def to_unit_cube(X, bounds) -> np.ndarray:
    bounds = _check_bounds(bounds)
    lo, hi = bounds[:, 0], bounds[:, 1]
    # centre/half-width form is exact on [-1, 1]
    return (np.asarray(X, dtype=float) - (lo + hi) / 2.0) / ((hi - lo) / 2.0)


def from_unit_cube(Z, bounds) -> np.ndarray:
    bounds = _check_bounds(bounds)
    lo, hi = bounds[:, 0], bounds[:, 1]
    return (lo + hi) / 2.0 + np.asarray(Z, dtype=float) * ((hi - lo) / 2.0)


def rescale_to_unit_cube(s: SampleSet) -> SampleSet:
    """Map the inputs affinely onto ``[-1, 1]^n``; gradients follow the chain rule."""
    bounds = _check_bounds(s.bounds)
    half = (bounds[:, 1] - bounds[:, 0]) / 2.0
    Z = to_unit_cube(s.inputs, bounds)
    G = None if s.gradients is None else s.gradients * half
    unit = np.tile([-1.0, 1.0], (s.n, 1))
    return SampleSet(np.clip(Z, -1.0, 1.0), s.outputs, G, unit)


def split(s: SampleSet | int, fractions: Sequence[float], seed: int) -> Split:
    """Shuffle and split sample indices into train/validation/test.

    Validation and test get ``floor(fraction * N)`` indices; train gets
    whatever the rounding leaves when the fractions sum to one.
    """
    N = s if isinstance(s, int) else s.N
    ftr, fva, fte = (float(f) for f in fractions)
    if min(ftr, fva, fte) < 0 or ftr + fva + fte > 1 + 1e-12:
        raise SplitSizeError("fractions must be nonnegative and sum to at most 1")
    n_va = int(np.floor(fva * N))
    n_te = int(np.floor(fte * N))
    if abs(ftr + fva + fte - 1.0) <= 1e-12:
        n_tr = N - n_va - n_te
    else:
        n_tr = int(np.floor(ftr * N))
    for frac, size, name in ((ftr, n_tr, "train"), (fva, n_va, "validation"), (fte, n_te, "test")):
        if frac > 0 and size == 0:
            raise SplitSizeError(f"{name} set is empty for N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    return Split(
        np.sort(perm[:n_tr]),
        np.sort(perm[n_tr:n_tr + n_va]),
        np.sort(perm[n_tr + n_va:n_tr + n_va + n_te]),
    )


def finite_difference_gradients(f: Callable[[np.ndarray], np.ndarray], s: SampleSet,
                                h: float = 1e-6) -> SampleSet:
    """Central-difference gradients of ``f`` at every sample.

    ``f`` maps a single point of shape (n,) to a scalar or a vector of
    length p. Stencil points are clipped to the bounds, with the divisor
    adjusted to the actual step taken.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    lo, hi = s.bounds[:, 0], s.bounds[:, 1]
    G = np.empty((s.N, s.p, s.n))
    for k, x in enumerate(s.inputs):
        for i in range(s.n):
            xp, xm = x.copy(), x.copy()
            xp[i] = min(x[i] + h, hi[i])
            xm[i] = max(x[i] - h, lo[i])
            fp = np.atleast_1d(np.asarray(f(xp), dtype=float))
            fm = np.atleast_1d(np.asarray(f(xm), dtype=float))
            if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
                raise EvaluationError(f"non-finite function value near sample {k}", k)
            G[k, :, i] = (fp - fm) / (xp[i] - xm[i])
    return replace(s, gradients=G)


_COLUMN = re.compile(r"^(x|f)(\d+)$|^g(\d+)_(\d+)$")


def read_csv(path, bounds=None) -> SampleSet:
    """Read a dataset CSV with columns ``x*``, ``f*`` and optional ``g{j}_{i}``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    xs, fs, gs = {}, {}, {}
    for col, name in enumerate(header):
        m = _COLUMN.match(name)
        if m is None:
            raise DatasetError(f"unrecognised column {name!r}")
        if m.group(1) == "x":
            xs[int(m.group(2))] = col
        elif m.group(1) == "f":
            fs[int(m.group(2))] = col
        else:
            gs[(int(m.group(3)), int(m.group(4)))] = col
    n, p = len(xs), len(fs)
    if sorted(xs) != list(range(n)) or sorted(fs) != list(range(p)):
        raise DatasetError("x and f columns must be numbered contiguously from 0")
    rows = rows.reshape(-1, len(header))
    X = rows[:, [xs[i] for i in range(n)]]
    F = rows[:, [fs[j] for j in range(p)]]
    G = None
    if gs:
        if len(gs) != n * p:
            raise DatasetError("gradient columns must cover every (output, input) pair")
        G = np.empty((len(rows), p, n))
        for (j, i), col in gs.items():
            G[:, j, i] = rows[:, col]
    return SampleSet(X, F, G, bounds)


def write_csv(s: SampleSet, path) -> None:
    header = [f"x{i}" for i in range(s.n)] + [f"f{j}" for j in range(s.p)]
    cols = [s.inputs, s.outputs]
    if s.gradients is not None:
        header += [f"g{j}_{i}" for j in range(s.p) for i in range(s.n)]
        cols.append(s.gradients.reshape(s.N, -1))
    data = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
