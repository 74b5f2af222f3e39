import numpy as np
import pytest

from nsexplain.graphs import SparseGraph, build_instance
from nsexplain.model import init_params


@pytest.fixture(scope="session")
def tiny_model():
    """Fixed random 4-feature, 2-class network; big enough to be nonlinear."""
    return init_params(4, 2, np.random.default_rng(0)).freeze()


def _toy_graph():
    # 5 nodes, 6 edges: a triangle hanging off a path
    return SparseGraph(5, [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)])


@pytest.fixture()
def graph_instance(tiny_model):
    rng = np.random.default_rng(1)
    g = _toy_graph()
    return build_instance(g, rng.normal(size=(5, 4)), "graph", tiny_model, label=1)


@pytest.fixture()
def node_instance(tiny_model):
    rng = np.random.default_rng(2)
    g = _toy_graph()
    return build_instance(
        g, rng.normal(size=(5, 4)), "node", tiny_model, label=0, target_node=1
    )
