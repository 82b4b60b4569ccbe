"""Analytic test functions with exact gradients.

Every benchmark evaluates batches: ``evaluate(X)`` returns (N, p) outputs
and ``gradient(X)`` returns (N, p, n) Jacobians, both in the original
(unscaled) input coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import SampleSet
from .sampling import sample_hypercube


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Benchmark:
    name: str
    n: int
    p: int
    bounds: np.ndarray
    _f: Callable[[np.ndarray], np.ndarray]
    _df: Callable[[np.ndarray], np.ndarray]

    def _check(self, X, check_domain: bool = True) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise DomainError(f"{self.name} expects {self.n} inputs, got {X.shape[1]}")
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if check_domain and (np.any(X < lo - 1e-12) or np.any(X > hi + 1e-12)):
            raise DomainError(f"point outside the {self.name} domain")
        return X

    def evaluate(self, X, check_domain: bool = True) -> np.ndarray:
        X = self._check(X, check_domain)
        return np.asarray(self._f(X), dtype=float).reshape(len(X), self.p)

    def gradient(self, X, check_domain: bool = True) -> np.ndarray:
        X = self._check(X, check_domain)
        return np.asarray(self._df(X), dtype=float).reshape(len(X), self.p, self.n)

    def __call__(self, x):
        out = self.evaluate(np.atleast_2d(x))
        return out[0, 0] if out.shape == (1, 1) else out.squeeze(0)

    def sample(self, N: int, kind: str = "uniform-pseudo", seed: int = 0,
               gradients: bool = True) -> SampleSet:
        X = sample_hypercube(kind, N, self.n, self.bounds, seed)
        return SampleSet(X, self.evaluate(X), self.gradient(X) if gradients else None, self.bounds)


def _box(lo, hi, n):
    return np.tile([float(lo), float(hi)], (n, 1))


# quartic: x1^4 - x2^4 on [0,1]^2

def _quartic(X):
    return X[:, 0] ** 4 - X[:, 1] ** 4


def _quartic_grad(X):
    return np.column_stack([4 * X[:, 0] ** 3, -4 * X[:, 1] ** 3])


quartic = Benchmark("quartic", 2, 1, _box(0, 1, 2), _quartic, _quartic_grad)


def _radial(X):
    return np.cos(np.sum(X**2, axis=1))


def _radial_grad(X):
    return -2.0 * np.sin(np.sum(X**2, axis=1))[:, None] * X


radial_cosine = Benchmark("radial-cosine", 2, 1, _box(-3, 3, 2), _radial, _radial_grad)


def paraboloid_case(X) -> np.ndarray:
    """Index 1..4 of the active piece; on a seam the first listed case wins."""
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    case = np.where(x1 >= 0, np.where(x2 >= 0, 1, 3), np.where(x2 >= 0, 2, 4))
    return case


_CASE_TO_ACTIVE = {1: 1, 2: 2, 3: 3, 4: 4}


def _paraboloid_mask(X):
    k = np.vectorize(_CASE_TO_ACTIVE.get)(paraboloid_case(X))
    return (np.arange(X.shape[1])[None, :] < k[:, None]).astype(float)


def _paraboloid(X):
    return np.sum(_paraboloid_mask(X) * X**2, axis=1)


def _paraboloid_grad(X):
    return 2.0 * _paraboloid_mask(X) * X


hyper_paraboloid = Benchmark("hyper-paraboloid", 6, 1, _box(-4, 4, 6), _paraboloid, _paraboloid_grad)


EBOLA_PARAMETERS = ("beta1", "beta2", "beta3", "rho1", "gamma1", "gamma2", "omega", "psi")
# ranges of the Liberia SEIR data set commonly used for this model
EBOLA_BOUNDS = np.array([
    [0.1, 0.4], [0.1, 0.4], [0.05, 0.2], [0.41, 1.0],
    [0.0276, 0.1702], [0.081, 0.21], [0.25, 0.5], [0.0833, 0.7],
])


def _ebola(X):
    b1, b2, b3, r1, g1, g2, om, psi = X.T
    if np.any(g1 + psi == 0) or np.any(om == 0) or np.any(g2 == 0):
        raise DomainError("ebola R0 has a zero denominator")
    return (b1 + b2 * r1 * g1 / om + b3 * psi / g2) / (g1 + psi)


def _ebola_grad(X):
    b1, b2, b3, r1, g1, g2, om, psi = X.T
    den = g1 + psi
    num = b1 + b2 * r1 * g1 / om + b3 * psi / g2
    R0 = num / den
    return np.column_stack([
        1.0 / den,
        r1 * g1 / (om * den),
        psi / (g2 * den),
        b2 * g1 / (om * den),
        b2 * r1 / (om * den) - R0 / den,
        -b3 * psi / (g2**2 * den),
        -b2 * r1 * g1 / (om**2 * den),
        b3 / (g2 * den) - R0 / den,
    ])


def ebola_benchmark(bounds=None) -> Benchmark:
    return Benchmark("ebola", 8, 1, EBOLA_BOUNDS.copy() if bounds is None else np.asarray(bounds, float),
                     _ebola, _ebola_grad)


ebola = ebola_benchmark()


def ebola_r0(x) -> float:
    """R0 of the SEIR model at a single parameter vector (no range check)."""
    return float(_ebola(np.atleast_2d(np.asarray(x, dtype=float)))[0])


def ebola_r0_gradient(x) -> np.ndarray:
    return _ebola_grad(np.atleast_2d(np.asarray(x, dtype=float)))[0]


def counterexample_h1(x1, eps):
    return x1 * (x1 + eps) * (x1 - eps)


def counterexample_benchmark(eps: float = 1e-2, omega: float = 1e4) -> Benchmark:
    """Piecewise function whose refined AS ridge error exceeds the global one.

    Outer slabs carry ``x1 + eps`` (left) and ``x1 - eps`` (right); the
    middle slab ``|x1| <= eps`` carries ``h1(x1) cos(omega x2)``.
    """
    if not 0 < eps < 1 or omega <= 0:
        raise DomainError("need 0 < eps < 1 and omega > 0")

    def f(X):
        x1, x2 = X[:, 0], X[:, 1]
        mid = counterexample_h1(x1, eps) * np.cos(omega * x2)
        return np.where(x1 < -eps, x1 + eps, np.where(x1 > eps, x1 - eps, mid))

    def df(X):
        x1, x2 = X[:, 0], X[:, 1]
        inner = np.abs(x1) <= eps
        g1 = np.where(inner, (3 * x1**2 - eps**2) * np.cos(omega * x2), 1.0)
        g2 = np.where(inner, -omega * counterexample_h1(x1, eps) * np.sin(omega * x2), 0.0)
        return np.column_stack([g1, g2])

    return Benchmark("counterexample", 2, 1, _box(-1, 1, 2), f, df)


def counterexample_region(X, eps: float) -> np.ndarray:
    """0 for A (left slab), 1 for B (middle), 2 for C (right)."""
    x1 = np.atleast_2d(X)[:, 0]
    return np.where(x1 < -eps, 0, np.where(x1 > eps, 2, 1))


def _sinc2(omega):
    return np.sin(2 * omega) / (2 * omega)


def counterexample_matrices(eps: float, omega: float) -> dict[str, np.ndarray]:
    """Exact gradient second-moment matrices under the uniform measure.

    ``B`` is normalised by the middle slab's own measure, ``global`` by the
    whole square; ``A`` and ``C`` are ``diag(1, 0)``.
    """
    s = _sinc2(omega)
    b11 = 0.4 * eps**4 * (1 + s)
    b22 = 4.0 / 105.0 * omega**2 * eps**6 * (1 - s)
    mu_b = eps  # |B| / |X| = (2 eps * 2) / 4
    mu_ac = 1.0 - eps
    e1 = np.diag([1.0, 0.0])
    return {
        "global": mu_b * np.diag([b11, b22]) + mu_ac * e1,
        "A": e1.copy(),
        "B": np.diag([b11, b22]),
        "C": e1.copy(),
    }


def counterexample_conditions(eps: float, omega: float) -> tuple[bool, bool]:
    """The two inequalities that make the global active direction e1 while
    the middle slab's is e2, in their published form."""
    first = (0.4 * eps**5 * (1 + _sinc2(omega)) + 4 * (1 - eps)
             >= 4.0 / 105.0 * omega**2 * eps**7 * (1 - np.cos(2 * omega) / (2 * omega)))
    second = (1.6 * eps**4 * (1 + _sinc2(omega))
              <= 16.0 / 105.0 * omega**2 * eps**6 * (1 - np.cos(2 * omega) / (2 * omega)))
    return bool(first), bool(second)


def counterexample_errors(eps: float, omega: float) -> dict[str, float]:
    """Closed-form L2 errors of optimal-profile ridge approximations and the
    gradient-residual indicators, global (projector e1) vs refined A/B/C
    (projectors e1, e2, e1).

    Only the middle slab contributes to either error:
    ``refined = E[h1^2 cos^2]`` since the profile ``E[f|x2]`` vanishes
    there (h1 is odd), and ``global = E[h1^2 (cos - mean cos)^2]``.
    """
    h1_sq = 16.0 / 105.0 * eps**7          # int_{-eps}^{eps} h1^2 dx1
    cos_sq = 1.0 + _sinc2(omega)           # int_{-1}^{1} cos^2(omega x2) dx2
    cos_int = 2.0 * np.sin(omega) / omega  # int_{-1}^{1} cos(omega x2) dx2
    area = 4.0
    refined = h1_sq * cos_sq / area
    global_ = h1_sq * (cos_sq - cos_int**2 / 2.0) / area
    mats = counterexample_matrices(eps, omega)
    mu_b = eps
    return {
        "global_error": float(global_),
        "refined_error": float(refined),
        "global_indicator": float(mats["global"][1, 1]),
        "refined_indicator": float(mu_b * mats["B"][0, 0]),
    }


REGISTRY: dict[str, Callable[[], Benchmark]] = {
    "quartic": lambda: quartic,
    "radial-cosine": lambda: radial_cosine,
    "hyper-paraboloid": lambda: hyper_paraboloid,
    "ebola": lambda: ebola,
    "counterexample": counterexample_benchmark,
}


def get(name: str, **kwargs) -> Benchmark:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**kwargs) if kwargs else factory()


def block_vector_benchmark(p_per_block: int = 3, n: int = 4) -> Benchmark:
    """Vector output whose first block depends on x1 only and second on x2 only."""
    scales = 1.0 + np.arange(p_per_block)

    def f(X):
        a = np.sin(X[:, [0]] * scales)
        b = np.exp(0.5 * X[:, [1]] * scales / p_per_block)
        return np.hstack([a, b])

    def df(X):
        N = len(X)
        G = np.zeros((N, 2 * p_per_block, n))
        G[:, :p_per_block, 0] = np.cos(X[:, [0]] * scales) * scales
        G[:, p_per_block:, 1] = 0.5 * scales / p_per_block * np.exp(0.5 * X[:, [1]] * scales / p_per_block)
        return G

    return Benchmark("block-vector", n, 2 * p_per_block, _box(-1, 1, n), f, df)


REGISTRY["block-vector"] = block_vector_benchmark
