"""Gaussian process ridge surrogates and R^2 scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .subspace import ActiveSubspace, project_active

NOISE_FLOOR = 1e-10
MAX_JITTER = 1e-4


class ConditioningError(RuntimeError):
    pass


class DegenerateTargetError(ValueError):
    pass


@dataclass(frozen=True)
class Hyper:
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float

    def to_log(self) -> np.ndarray:
        return np.concatenate([[np.log(self.signal_variance)], np.log(self.lengthscales),
                               [np.log(self.noise_variance)]])

    @classmethod
    def from_log(cls, theta) -> "Hyper":
        theta = np.asarray(theta, dtype=float)
        return cls(float(np.exp(theta[0])), np.exp(theta[1:-1]),
                   max(float(np.exp(theta[-1])), NOISE_FLOOR))


def rbf_ard(A: np.ndarray, B: np.ndarray, signal_variance: float, lengthscales) -> np.ndarray:
    A = np.asarray(A, float) / lengthscales
    B = np.asarray(B, float) / lengthscales
    sq = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2.0 * A @ B.T
    return signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0))


def _factor(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor of ``K`` with escalating diagonal jitter."""
    m = K.shape[0]
    base = float(np.trace(K)) / m
    jitter = 0.0
    while True:
        try:
            L = linalg.cholesky(K + jitter * np.eye(m), lower=True, check_finite=False)
            return L, jitter
        except linalg.LinAlgError:
            if jitter >= MAX_JITTER * base:
                raise ConditioningError("kernel matrix is not positive definite after jitter") from None
            jitter = 1e-10 * base if jitter == 0.0 else jitter * 10.0


def log_marginal_likelihood(theta, Y, t, *, with_grad: bool = True):
    """Log marginal likelihood of centered targets ``t`` and its gradient
    with respect to the log hyper-parameters ``(log sf2, log ell_1..r, log sn2)``."""
    hyp = Hyper.from_log(theta)
    m = len(t)
    Kf = rbf_ard(Y, Y, hyp.signal_variance, hyp.lengthscales)
    K = Kf + hyp.noise_variance * np.eye(m)
    L, _ = _factor(K)
    alpha = linalg.cho_solve((L, True), t, check_finite=False)
    lml = -0.5 * t @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * m * np.log(2 * np.pi)
    if not with_grad:
        return lml
    Kinv = linalg.cho_solve((L, True), np.eye(m), check_finite=False)
    Q = np.outer(alpha, alpha) - Kinv
    grad = np.empty(len(theta))
    grad[0] = 0.5 * np.sum(Q * Kf)
    for d, ell in enumerate(hyp.lengthscales):
        diff2 = (Y[:, d][:, None] - Y[:, d][None, :]) ** 2 / ell**2
        grad[1 + d] = 0.5 * np.sum(Q * Kf * diff2)
    grad[-1] = 0.5 * np.trace(Q) * hyp.noise_variance
    return lml, grad


@dataclass(frozen=True)
class GpModel:
    """Trained GP with RBF-ARD kernel and a constant prior mean.

    The prior mean is the training-target mean unless given explicitly
    (``mean=0.0`` gives the plain zero-mean GP).
    """

    train_y_coords: np.ndarray
    train_targets: np.ndarray
    hyper: Hyper
    mean: float
    factor: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    log_likelihood: float = float("nan")

    @property
    def r(self) -> int:
        return self.train_y_coords.shape[1]

    @classmethod
    def from_hyper(cls, Y, t, hyper: Hyper, log_likelihood: float = float("nan"),
                   mean: float | None = None) -> "GpModel":
        Y = np.asarray(Y, dtype=float).reshape(len(t), -1)
        t = np.asarray(t, dtype=float)
        mean = float(t.mean()) if mean is None else float(mean)
        K = rbf_ard(Y, Y, hyper.signal_variance, hyper.lengthscales)
        K[np.diag_indices_from(K)] += max(hyper.noise_variance, NOISE_FLOOR)
        L, _ = _factor(K)
        alpha = linalg.cho_solve((L, True), t - mean, check_finite=False)
        return cls(Y, t, hyper, mean, L, alpha, log_likelihood)

    def predict(self, Ystar, return_var: bool = True):
        Ystar = np.atleast_2d(np.asarray(Ystar, dtype=float))
        if Ystar.shape[1] != self.r:
            if self.r == 1 and Ystar.shape[0] == 1:
                Ystar = Ystar.T
            else:
                raise ValueError(f"query must have {self.r} columns, got {Ystar.shape[1]}")
        Ks = rbf_ard(Ystar, self.train_y_coords, self.hyper.signal_variance, self.hyper.lengthscales)
        mean = self.mean + Ks @ self.alpha
        if not return_var:
            return mean
        v = linalg.solve_triangular(self.factor, Ks.T, lower=True, check_finite=False)
        var = self.hyper.signal_variance - np.sum(v**2, axis=0)
        return mean, np.maximum(var, 0.0)


def predict_gp(g: GpModel, Ystar):
    return g.predict(Ystar)


def _search_box(Y, t):
    span = np.ptp(Y, axis=0)
    span = np.where(span > 0, span, 1.0)
    var = float(np.var(t))
    var = var if var > 0 else 1.0
    lo = np.concatenate([[np.log(1e-2 * var)], np.log(1e-2 * span), [np.log(1e-8 * var)]])
    hi = np.concatenate([[np.log(1e2 * var)], np.log(1e1 * span), [np.log(1e-1 * var)]])
    return lo, hi


def fit_gp(Y, t, restarts: int = 5, seed: int = 0, noise_floor: float = NOISE_FLOOR,
           center: bool = True) -> GpModel:
    """Maximise the log marginal likelihood over log hyper-parameters.

    ``restarts`` L-BFGS-B runs start from log-uniform draws in the search
    box (the first from its centre); the best likelihood wins, ties going
    to the earlier restart. With ``center`` the prior mean is the target
    mean, otherwise zero.
    """
    t = np.asarray(t, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).reshape(len(t), -1)
    m, r = Y.shape
    if m < 2 or r < 1:
        raise ValueError("need at least 2 training points and 1 coordinate")
    mean = float(t.mean()) if center else 0.0
    tc = t - mean
    if np.ptp(t) == 0 and center:
        # nothing left to explain: signal variance at the noise scale
        hyp = Hyper(noise_floor, np.ones(r), noise_floor)
        return GpModel.from_hyper(Y, t, hyp, mean=mean)
    lo, hi = _search_box(Y, tc)
    lo[-1] = max(lo[-1], np.log(noise_floor))
    hi[-1] = max(hi[-1], lo[-1])
    bounds = list(zip(lo - 2.0, hi + 2.0))
    bounds[-1] = (np.log(noise_floor), hi[-1] + 2.0)
    rng = np.random.default_rng(seed)
    best = None
    for k in range(max(1, restarts)):
        x0 = 0.5 * (lo + hi) if k == 0 else rng.uniform(lo, hi)

        def objective(theta):
            try:
                val, grad = log_marginal_likelihood(theta, Y, tc)
            except ConditioningError:
                return 1e25, np.zeros_like(theta)
            return -val, -grad

        res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": 200})
        if not np.isfinite(res.fun) or res.fun >= 1e25:
            continue
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x)
    if best is None:
        raise ConditioningError("every restart failed to factorise the kernel matrix")
    hyp = Hyper.from_log(best[1])
    return GpModel.from_hyper(Y, t, hyp, -float(best[0]), mean=mean)


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination; mean over columns for vector outputs."""
    y = np.asarray(y_true, dtype=float)
    yh = np.asarray(y_pred, dtype=float)
    if y.shape != yh.shape:
        raise ValueError("shape mismatch")
    if y.ndim == 1:
        y, yh = y[:, None], yh[:, None]
    if y.shape[0] < 2:
        raise ValueError("need at least two samples")
    ss_tot = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    if np.any(ss_tot <= 0):
        raise DegenerateTargetError("target has zero variance")
    ss_res = np.sum((y - yh) ** 2, axis=0)
    return float(np.mean(1.0 - ss_res / ss_tot))


def aggregate_local_r2(per_cluster, global_stats) -> float:
    """Combine per-cluster R^2 scores into the score over the union.

    per_cluster : iterable of ``(r2_l, N_l, var_l)``, variances with the
    ``N_l - 1`` convention. Clusters with a single sample contribute 0.
    global_stats : ``(var, N)``.
    """
    var, N = global_stats
    rows = list(per_cluster)
    if sum(int(n) for _, n, _ in rows) != int(N):
        raise ValueError("cluster sizes do not add up to N")
    total = 0.0
    for r2_l, n_l, var_l in rows:
        if n_l < 2:
            continue
        total += var_l / var * (1.0 - r2_l) * (n_l - 1) / (N - 1)
    return float(1.0 - total)


@dataclass(frozen=True)
class RidgeSurrogate:
    """One GP per output component on the active coordinates of a subspace."""

    subspace: ActiveSubspace
    gps: tuple

    @property
    def r(self) -> int:
        return self.subspace.r

    def predict(self, X, return_var: bool = False):
        Y = project_active(self.subspace, X)
        out = [gp.predict(Y) for gp in self.gps]
        mean = np.column_stack([o[0] for o in out])
        if return_var:
            return mean, np.column_stack([o[1] for o in out])
        return mean


def fit_ridge_surrogate(X, F, subspace: ActiveSubspace, r: int | None = None,
                        restarts: int = 5, seed: int = 0) -> RidgeSurrogate:
    """Fit GPs on ``(W1^T x, f(x))`` pairs; ``X`` must already be normalised."""
    sub = subspace if r is None else subspace.with_dimension(r)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    F = np.asarray(F, dtype=float).reshape(len(X), -1)
    if len(X) < sub.r + 2:
        raise ValueError(f"need at least r+2={sub.r + 2} samples, got {len(X)}")
    Y = project_active(sub, X)
    gps = tuple(fit_gp(Y, F[:, j], restarts=restarts, seed=seed + j) for j in range(F.shape[1]))
    return RidgeSurrogate(sub, gps)
