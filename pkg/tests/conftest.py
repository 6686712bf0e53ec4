"""Shared fixtures for the test suite."""

import os

import numpy as np
import pytest

from blockfw.matrix import DistanceMatrix, generate_graph
from blockfw.models import GraphSpec

INF = np.inf


def pytest_collection_modifyitems(config, items):
    if os.getenv("BLOCKFW_RUN_PERF") == "1":
        return
    skip_perf = pytest.mark.skip(reason="set BLOCKFW_RUN_PERF=1 to run performance checks")
    for item in items:
        if "perf" in item.keywords:
            item.add_marker(skip_perf)


@pytest.fixture
def three_vertex():
    """0 -> 1 (3), 1 -> 2 (5), no direct 0 -> 2 edge."""
    return DistanceMatrix([[0.0, 3.0, INF], [INF, 0.0, 5.0], [INF, INF, 0.0]], copy=False)


@pytest.fixture
def graph64():
    return generate_graph(GraphSpec(n=64, seed=11))


@pytest.fixture
def graph32():
    return generate_graph(GraphSpec(n=32, seed=5))
