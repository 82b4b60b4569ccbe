import time

import numpy as np
import pytest

from localas import benchmarks as bm
from localas import experiments as ex

# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE = []
SUITE_BUDGET_S = 600.0
_START = time.perf_counter()

EBOLA_SEEDS = range(5)
EBOLA_K = range(2, 11)


@pytest.fixture(scope="session")
def quartic_data():
    """400 train / 600 test quartic samples, rescaled to [-1, 1]^2."""
    return ex.make_data(bm.quartic, 400, 600, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ebola_runs():
    """Test R^2 of global AS, K-medoids-AS and top-down on 300/500 Ebola
    splits for five seeds and K = 2..10."""
    _, _, cfg = ex.preset("ebola")
    runs = {}
    for seed in EBOLA_SEEDS:
        data, split = ex.make_data(bm.ebola, 300, 500, seed=seed)
        score = lambda m, K, c: ex.test_score(ex.fit_method(data, split, m, K, c), data, split.test_idx)
        runs[seed] = {
            "global": score("global-as", 1, cfg),
            "kmedoids-as": {K: score("kmedoids-as", K, cfg) for K in EBOLA_K},
            "topdown": {K: score("topdown", K, ex.topdown_config_for("ebola", K, cfg)) for K in EBOLA_K},
        }
    return runs


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.perf_counter() - _START
    if ACCEPTANCE:
        tr = terminalreporter
        tr.section("acceptance criteria")
        for name, ok, detail in ACCEPTANCE:
            tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        ok = elapsed < SUITE_BUDGET_S
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] suite runtime: {elapsed:.0f} s (budget {SUITE_BUDGET_S:.0f} s)")


def pytest_sessionfinish(session, exitstatus):
    if ACCEPTANCE and time.perf_counter() - _START >= SUITE_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1
