import math

import numpy as np
import pytest

from gapnls.graphs import KIRCHHOFF, MetricGraph, graph_eigenbasis
from gapnls.solver import SolverConfig, outer_minimize
from gapnls.spectral import PowerNonlinearity
from gapnls.torus import torus_eigenbasis


@pytest.fixture(scope="session")
def interval_basis():
    """Dirichlet interval of length pi, 24 modes, 257 nodes."""
    return graph_eigenbasis(MetricGraph.interval(math.pi), 24, nodes_per_edge=257)


@pytest.fixture(scope="session")
def neumann_basis():
    g = MetricGraph.interval(math.pi, KIRCHHOFF, KIRCHHOFF)
    return graph_eigenbasis(g, 12, nodes_per_edge=64)


@pytest.fixture(scope="session")
def interval_nl(interval_basis):
    return PowerNonlinearity.uniform(interval_basis, 4.0)


@pytest.fixture(scope="session")
def interval_states(interval_basis, interval_nl):
    cfg = SolverConfig()
    return {lam: outer_minimize(interval_basis, lam, 1, interval_nl, cfg) for lam in (1.5, 2.5, 3.5)}


@pytest.fixture(scope="session")
def small_torus():
    return torus_eigenbasis(2, max_j=10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
