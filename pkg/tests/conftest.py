import numpy as np
import pytest

from aggremc.data import AttributedGraph, CategoryDomain, ObservationSplit


def make_graph(n, edges, kappa=2, features=None):
    return AttributedGraph(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                           CategoryDomain(tuple(f"c{i}" for i in range(kappa))), features)


def random_graph(rng, n, p, kappa):
    edges = [(i, j) if rng.random() < 0.5 else (j, i)
             for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return make_graph(n, edges, kappa)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (2, 0)])


def split_of(labels, observed):
    return ObservationSplit.from_nodes(observed, labels)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Log one acceptance verdict; the terminal summary prints them in order."""
    def _record(criterion, passed, detail):
        ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'} - {detail}")
