import numpy as np
import pytest
from hypothesis import settings

from speclab.graph import graph_from_arrays, two_block_graph

settings.register_profile("speclab", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("speclab")


@pytest.fixture
def g0():
    return two_block_graph()


def random_kernel(rng, n_nat, n_vert, density=0.5):
    K = rng.uniform(size=(n_nat, n_vert)) * (rng.uniform(size=(n_nat, n_vert)) < density)
    K[np.arange(n_nat), rng.integers(n_vert, size=n_nat)] += 0.1
    K[rng.integers(n_nat, size=n_vert), np.arange(n_vert)] += 0.05
    return K / K.sum(axis=1, keepdims=True)


@pytest.fixture
def small_random():
    rng = np.random.default_rng(5)
    K = random_kernel(rng, 5, 12)
    probs = rng.dirichlet(np.ones(5))
    labels = np.array([0, 1, 0, 1, 1])
    return graph_from_arrays(probs, labels, K)


def perturbed_g0(leak=0.01):
    """G0 with ``leak`` of each natural's augmentation mass moved to the other block."""
    K = np.array([[0.5 - leak / 2, 0.5 - leak / 2, leak, 0.0],
                  [0.0, leak, 0.5 - leak / 2, 0.5 - leak / 2]])
    return graph_from_arrays([0.5, 0.5], [0, 1], K)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail, gated=True):
    status = ("PASS" if passed else "FAIL") if gated else "REPORT"
    line = f"criterion {number:>2}: {status}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
