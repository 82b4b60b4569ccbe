import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from localas import benchmarks as bm
from localas.subspace import second_moment_matrix


def _fd(bench, x, h=1e-6):
    x = np.asarray(x, float)
    lo, hi = bench.bounds[:, 0], bench.bounds[:, 1]
    g = np.empty((bench.p, bench.n))
    for i in range(bench.n):
        xp, xm = x.copy(), x.copy()
        xp[i] = min(x[i] + h, hi[i])
        xm[i] = max(x[i] - h, lo[i])
        g[:, i] = (bench.evaluate(xp[None])[0] - bench.evaluate(xm[None])[0]) / (xp[i] - xm[i])
    return g


def test_quartic_examples():
    f, g = bm.quartic.evaluate, bm.quartic.gradient
    assert f([[0, 0]])[0, 0] == 0
    assert f([[1, 0]])[0, 0] == 1
    np.testing.assert_allclose(g([[1, 0]])[0, 0], [4, 0])
    assert f([[0.5, 0.5]])[0, 0] == 0
    np.testing.assert_allclose(g([[0.5, 0.5]])[0, 0], [0.5, -0.5])


def test_radial_examples():
    f, g = bm.radial_cosine.evaluate, bm.radial_cosine.gradient
    assert f([[0, 0]])[0, 0] == 1
    np.testing.assert_array_equal(g([[0, 0]])[0, 0], [0, 0])
    assert f([[1, 0]])[0, 0] == pytest.approx(np.cos(1.0))
    np.testing.assert_allclose(g([[1, 0]])[0, 0], [-2 * np.sin(1.0), 0])


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2 * np.pi))
def test_radial_rotation_invariance(a, b, t):
    R = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    x = np.array([a, b])
    y = np.clip(R @ x, -3, 3)
    if np.allclose(np.linalg.norm(y), np.linalg.norm(x)):
        assert bm.radial_cosine.evaluate(y[None])[0, 0] == pytest.approx(bm.radial_cosine.evaluate(x[None])[0, 0],
                                                                          abs=1e-12)


def test_paraboloid_examples():
    # some example points leave the sampling box, so evaluate the formula unchecked
    f = lambda x: bm.hyper_paraboloid.evaluate(x, check_domain=False)
    g = lambda x: bm.hyper_paraboloid.gradient(x, check_domain=False)
    assert f([[1, 1, 9, 9, 0, 0]])[0, 0] == 1
    assert f([[-1, -1, 1, 1, 5, 5]])[0, 0] == 4
    np.testing.assert_allclose(g([[1, -1, 2, 7, 0, 0]])[0, 0], [2, -2, 4, 0, 0, 0])


def test_paraboloid_case_matches_active_count(rng):
    X = rng.uniform(-4, 4, (200, 6))
    G = bm.hyper_paraboloid.gradient(X)[:, 0, :]
    active = np.sum(G != 0, axis=1)
    np.testing.assert_array_equal(active, bm.paraboloid_case(X))


def test_ebola_examples():
    x = np.ones(8)
    assert bm.ebola_r0(x) == pytest.approx(1.5)
    y = x.copy()
    y[[1, 2, 7]] = 0.0  # beta2 = beta3 = psi = 0
    assert bm.ebola_r0(y) == pytest.approx(y[0] / y[4])


@settings(max_examples=25)
@given(st.integers(0, 10**6))
def test_ebola_gradient_quotient_rule(seed):
    rng = np.random.default_rng(seed)
    lo, hi = bm.EBOLA_BOUNDS.T
    x = rng.uniform(lo, hi)
    g = bm.ebola_r0_gradient(x)
    b1, b2, b3, r1, g1, g2, om, psi = x
    assert g[0] == pytest.approx(1 / (g1 + psi), rel=1e-12)
    np.testing.assert_allclose(g, _fd(bm.ebola, x)[0], rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("bench", [bm.quartic, bm.radial_cosine, bm.hyper_paraboloid, bm.block_vector_benchmark()])
def test_gradients_match_finite_differences(bench, rng):
    lo, hi = bench.bounds.T
    for x in rng.uniform(lo + 1e-3, hi - 1e-3, (10, bench.n)):
        if bench is bm.hyper_paraboloid and np.min(np.abs(x[:2])) < 1e-3:
            continue
        np.testing.assert_allclose(bench.gradient(x[None])[0], _fd(bench, x), rtol=1e-5, atol=1e-6)


def test_domain_checked():
    with pytest.raises(bm.DomainError):
        bm.quartic.evaluate([[2.0, 0.0]])


def test_registry():
    assert set(bm.REGISTRY) >= {"quartic", "radial-cosine", "hyper-paraboloid", "ebola", "counterexample",
                                "block-vector"}
    with pytest.raises(KeyError):
        bm.get("nope")


# counterexample

EPS, OMEGA = 1e-2, 1e4


def test_counterexample_seam_and_zero():
    c = bm.counterexample_benchmark(EPS, OMEGA)
    assert c.evaluate([[-EPS, 0.0]])[0, 0] == pytest.approx(0.0, abs=1e-18)
    assert bm.counterexample_h1(-EPS, EPS) == pytest.approx(0.0, abs=1e-18)
    assert c.evaluate([[0.005, np.pi / (2 * OMEGA)]])[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_counterexample_gradient_on_outer_slabs(rng):
    c = bm.counterexample_benchmark(EPS, OMEGA)
    X = np.column_stack([rng.uniform(-1, -2 * EPS, 20), rng.uniform(-1, 1, 20)])
    np.testing.assert_array_equal(c.gradient(X)[:, 0, :], np.tile([1.0, 0.0], (20, 1)))


def test_counterexample_conditions_hold():
    assert bm.counterexample_conditions(EPS, OMEGA) == (True, True)


def test_sinc_limit():
    for w in (1e-4, 1e-6):
        m = bm.counterexample_matrices(1.0, w)
        assert 1 + np.sin(2 * w) / (2 * w) == pytest.approx(2.0, abs=1e-7)
        assert m["B"][0, 0] == pytest.approx(0.8, abs=1e-6)


def test_middle_slab_matrix_monte_carlo():
    c = bm.counterexample_benchmark(EPS, OMEGA)
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.uniform(-EPS, EPS, 1_000_000), rng.uniform(-1, 1, 1_000_000)])
    S = second_moment_matrix(c.gradient(X))
    exact = bm.counterexample_matrices(EPS, OMEGA)["B"]
    scale = np.sqrt(np.outer(np.diag(exact), np.diag(exact)))
    assert np.all(np.abs(S - exact) <= 0.01 * scale)


def test_counterexample_matrices_by_quadrature():
    # moderate omega so adaptive quadrature resolves the oscillation
    eps, w = 0.1, 7.0
    c = bm.counterexample_benchmark(eps, w)

    def g(i, j):
        def integrand(x2, x1):
            G = c.gradient(np.array([[x1, x2]]))[0, 0]
            return G[i] * G[j]
        return integrate.dblquad(integrand, -eps, eps, -1, 1, epsabs=1e-14)[0] / (4 * eps)

    exact = bm.counterexample_matrices(eps, w)["B"]
    np.testing.assert_allclose([g(0, 0), g(1, 1)], np.diag(exact), rtol=1e-7)
    assert abs(g(0, 1)) < 1e-12


def test_counterexample_errors_by_quadrature():
    eps, w = 0.1, 7.0
    c = bm.counterexample_benchmark(eps, w)
    f = lambda x1, x2: c.evaluate(np.array([[x1, x2]]))[0, 0]
    # optimal global profile E[f | x1] and middle-slab profile E[f | x2]
    prof_g = lambda x1: 0.5 * integrate.quad(lambda x2: f(x1, x2), -1, 1, limit=200)[0]
    prof_b = lambda x2: integrate.quad(lambda x1: f(x1, x2), -eps, eps)[0] / (2 * eps)
    glob = integrate.dblquad(lambda x2, x1: (f(x1, x2) - prof_g(x1)) ** 2, -1, 1, -1, 1, epsabs=1e-16)[0] / 4
    ref = integrate.dblquad(lambda x2, x1: (f(x1, x2) - prof_b(x2)) ** 2, -eps, eps, -1, 1, epsabs=1e-16)[0] / 4
    errs = bm.counterexample_errors(eps, w)
    assert errs["global_error"] == pytest.approx(glob, rel=1e-5)
    assert errs["refined_error"] == pytest.approx(ref, rel=1e-5)
