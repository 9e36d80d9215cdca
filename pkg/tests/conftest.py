import numpy as np
import pytest

from bartviz.agnostic import friedman_data
from bartviz.core import ColumnMeta, Dataset, IterationDraw, PosteriorEnsemble, TreeDraw
from bartviz.sampler import SamplerConfig, fit_regression

ACCEPTANCE_LINES: list[str] = []


class FitCache:
    """Friedman fits shared across test modules, computed on first use."""

    def __init__(self):
        self._fits = {}

    def get(self, seed, m, total_iters=1000, burn_in=100):
        key = (seed, m, total_iters, burn_in)
        if key not in self._fits:
            data = friedman_data(rng=seed)
            rep = fit_regression(data, SamplerConfig(m=m, total_iters=total_iters, burn_in=burn_in, seed=seed))
            self._fits[key] = (data, rep)
        return self._fits[key]


@pytest.fixture(scope="session")
def fits():
    return FitCache()


@pytest.fixture(scope="session")
def small_fit():
    """A quick m=10 regression fit used for plumbing tests."""
    data = friedman_data(n=80, p=6, rng=11)
    rep = fit_regression(data, SamplerConfig(m=10, total_iters=80, burn_in=20, seed=11))
    return data, rep


def hand_ensemble(data=None):
    """Three iterations of two trees on variables a, b, c.

    iteration 0: T1 splits a then b under its left child; T2 is a stump
    iteration 1: T1 splits a; T2 splits c
    iteration 2: both stumps
    """
    cols = tuple(ColumnMeta(n) for n in ("a", "b", "c"))
    t_ab = TreeDraw.from_nested((0, 0.5, (1, 0.5, 1.0, 2.0), 3.0), tree_index=1)
    t_a = TreeDraw.from_nested((0, 0.25, -1.0, 1.0), tree_index=1)
    t_c = TreeDraw.from_nested((2, 0.75, 0.5, -0.5), tree_index=2)
    s1, s2 = TreeDraw.stump(0.0, tree_index=1), TreeDraw.stump(0.1, tree_index=2)
    its = (IterationDraw((t_ab, s2), 1.0), IterationDraw((t_a, t_c), 0.9), IterationDraw((s1, s2), 1.1))
    return PosteriorEnsemble(its, burn_in=0, m=2, task="regression", columns=cols, data=data)


def hand_data():
    X = np.array([[0.1, 0.2, 0.9], [0.4, 0.7, 0.1], [0.6, 0.3, 0.8], [0.9, 0.9, 0.5]])
    return Dataset(X, np.array([1.0, 2.0, 3.0, 4.0]), tuple(ColumnMeta(n) for n in ("a", "b", "c")))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
