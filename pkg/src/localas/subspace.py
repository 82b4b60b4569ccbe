"""Active subspace estimation from sampled gradients."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import SampleSet


class SubspaceError(ValueError):
    pass


class ShapeError(SubspaceError):
    pass


class DegenerateSpectrumError(SubspaceError):
    pass


class ValidationError(SubspaceError):
    pass


@dataclass(frozen=True)
class ActiveSubspace:
    """Eigenpairs of a gradient second-moment matrix plus the chosen dimension.

    ``basis`` holds the eigenvectors as columns, sorted by non-increasing
    eigenvalue; the first ``r`` columns span the active subspace.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray
    r: int = field(default=0)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        W = np.asarray(self.basis, dtype=float)
        n = lam.shape[0]
        if W.shape != (n, n):
            raise ShapeError(f"basis must be {n}x{n}")
        r = n if self.r == 0 else int(self.r)
        if not 1 <= r <= n:
            raise ValueError(f"active dimension must be in [1, {n}], got {r}")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "basis", W)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def W1(self) -> np.ndarray:
        return self.basis[:, : self.r]

    @property
    def W2(self) -> np.ndarray:
        return self.basis[:, self.r:]

    @property
    def projector(self) -> np.ndarray:
        return self.W1 @ self.W1.T

    def with_dimension(self, r: int) -> "ActiveSubspace":
        return replace(self, r=int(r))

    def residual_energy(self) -> float:
        return residual_energy(self.eigenvalues, self.r)


def second_moment_matrix(s: SampleSet | np.ndarray, metric: np.ndarray | None = None,
                         weights: np.ndarray | None = None) -> np.ndarray:
    """Monte Carlo estimate of ``E[Df^T M Df]`` from the sample gradients.

    Accepts a SampleSet or a raw gradient array of shape (N, p, n) or (N, n).
    """
    G = s.require_gradients() if isinstance(s, SampleSet) else np.asarray(s, dtype=float)
    if G.ndim == 2:
        G = G[:, None, :]
    N, p, n = G.shape
    if N < 1:
        raise ShapeError("need at least one gradient sample")
    # unweighted sums are divided by N afterwards so exact inputs stay exact
    w = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    if metric is None:
        C = np.einsum("k,kji,kjl->il", w, G, G)
    else:
        M = np.atleast_2d(np.asarray(metric, dtype=float))
        if M.shape != (p, p):
            raise ShapeError(f"output metric must be {p}x{p}, got {M.shape}")
        C = np.einsum("k,kji,jm,kml->il", w, G, M, G)
    if weights is None:
        C = C / N
    return 0.5 * (C + C.T)


def _fix_signs(W: np.ndarray) -> np.ndarray:
    W = W.copy()
    for j in range(W.shape[1]):
        col = W[:, j]
        mag = np.abs(col)
        # lowest index among entries tied (to roundoff) for the largest magnitude
        i = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
        if col[i] < 0:
            W[:, j] = -col
    return W


def eigendecompose(sigma: np.ndarray, r: int | None = None) -> ActiveSubspace:
    """Full symmetric eigendecomposition with descending eigenvalues.

    Eigenvectors are sign-normalised so that their largest-magnitude entry
    is positive. A zero matrix yields the identity basis.
    """
    S = np.asarray(sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError("matrix must be square")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > 1e-8 * scale:
        raise ShapeError("matrix is not symmetric")
    n = S.shape[0]
    if not np.any(S):
        return ActiveSubspace(np.zeros(n), np.eye(n), r or n)
    lam, W = np.linalg.eigh(0.5 * (S + S.T))
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    W = _fix_signs(W[:, order])
    lam = np.where(lam < 0, 0.0, lam)
    return ActiveSubspace(lam, W, r or n)


def select_dimension(eigenvalues, strategy: str = "energy", value: float | int | None = None) -> int:
    """Pick the active dimension.

    strategy : ``"fixed"`` (``value`` is r), ``"energy"`` (``value`` is the
    cumulative-energy threshold) or ``"spectral_gap"``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.shape[0]
    if strategy == "fixed":
        r = int(value)
        if not 1 <= r <= n:
            raise ValueError(f"fixed dimension must be in [1, {n}]")
        return r
    total = lam.sum()
    if total <= 0:
        raise DegenerateSpectrumError("all-zero spectrum")
    if strategy == "energy":
        threshold = 0.95 if value is None else float(value)
        cum = np.cumsum(lam) / total
        return int(min(np.searchsorted(cum, threshold - 1e-12) + 1, n))
    if strategy == "spectral_gap":
        if n == 1:
            return 1
        num, den = lam[:-1], lam[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 1.0))
        return int(np.argmax(ratios)) + 1
    raise ValueError(f"unknown strategy {strategy!r}")


def estimate(s: SampleSet, metric=None, strategy: str = "energy", value=0.95) -> ActiveSubspace:
    sub = eigendecompose(second_moment_matrix(s, metric))
    if strategy != "fixed" and not np.any(sub.eigenvalues > 0):
        return sub.with_dimension(1)
    return sub.with_dimension(select_dimension(sub.eigenvalues, strategy, value))


def project_active(sub: ActiveSubspace, X: np.ndarray) -> np.ndarray:
    """Reduced coordinates ``W1^T x`` for every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != sub.n:
        raise ShapeError(f"expected {sub.n} columns, got {X.shape[1]}")
    return X @ sub.W1


def residual_energy(eigenvalues, r: int) -> float:
    lam = np.asarray(eigenvalues, dtype=float)
    if not 0 <= r <= lam.shape[0]:
        raise ValueError("r out of range")
    return float(lam[r:].sum())


def _check_orthonormal(U: np.ndarray, name: str) -> None:
    if np.abs(U.T @ U - np.eye(U.shape[1])).max() > 1e-8:
        raise ValidationError(f"{name} does not have orthonormal columns")


def subspace_distance(Wa: np.ndarray, Wb: np.ndarray, norm: str = "spectral") -> float:
    """Norm of the difference of the orthogonal projectors onto both spans.

    The spectral norm equals the sine of the largest principal angle.
    """
    Wa = np.asarray(Wa, dtype=float).reshape(np.shape(Wa)[0], -1)
    Wb = np.asarray(Wb, dtype=float).reshape(np.shape(Wb)[0], -1)
    if Wa.shape != Wb.shape:
        raise ShapeError("bases must have equal shapes")
    _check_orthonormal(Wa, "first basis")
    _check_orthonormal(Wb, "second basis")
    D = Wa @ Wa.T - Wb @ Wb.T
    if norm == "spectral":
        val = np.linalg.norm(D, 2)
    elif norm == "fro":
        val = np.linalg.norm(D, "fro")
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return float(min(val, 1.0) if norm == "spectral" else val)


def poincare_constant_bound(kind: int, *, D: float | None = None, delta: float | None = None,
                            diam: float | None = None, alpha: float | None = None) -> float:
    """Upper bound of the Poincare constant for the bounded-density (2) and
    uniformly log-concave (3) input distributions."""
    if kind == 2:
        if D is None or delta is None or diam is None:
            raise ValueError("class 2 needs D, delta and diam")
        if delta <= 0 or diam <= 0 or D < delta:
            raise ValueError("class 2 needs D >= delta > 0 and diam > 0")
        return D * diam / (np.pi * delta)
    if kind == 3:
        if alpha is None or alpha <= 0:
            raise ValueError("class 3 needs alpha > 0")
        return 1.0 / alpha
    raise ValueError("closed-form bounds exist only for classes 2 and 3")
