import numpy as np
import pytest

from partdd.graph import erdos_renyi, path_graph
from partdd.oracle import solve_centralized
from partdd.scenarios import generate_random_qp


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture(scope="session")
def qp2():
    """Two scalar nodes on a path; one general row of node 0 is active at the optimum."""
    return generate_random_qp(path_graph(2), 0, sizes=(1, 1))


@pytest.fixture(scope="session")
def qp2_star(qp2):
    return solve_centralized(qp2)


@pytest.fixture(scope="session")
def qp6():
    return generate_random_qp(erdos_renyi(6, 0.5, 1), 1)


@pytest.fixture(scope="session")
def qp6_star(qp6):
    return solve_centralized(qp6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
