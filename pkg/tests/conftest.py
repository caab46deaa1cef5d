import numpy as np
import pytest

from poanet.latency import LatencyFunction, bpr
from poanet.network import DemandVector, FlowVector, build_network

from netgen import corridor_instance
from oracles import route_based_equilibrium


@pytest.fixture
def pigou():
    """Two parallel links plus a return link; demand 1 gives the classic 8/7."""
    network = build_network(
        [("o", "d", 1.0, 1.0), ("o", "d", 2.0, 1e9), ("d", "o", 1.0, 1.0)],
        [("o", "d")],
    )
    return network, DemandVector([1.0]), LatencyFunction((1.0, 1.0))


@pytest.fixture
def symmetric_pair():
    network = build_network(
        [("o", "d", 1.0, 2.0), ("o", "d", 1.0, 2.0), ("d", "o", 1.0, 2.0)],
        [("o", "d")],
    )
    return network, DemandVector([2.0]), LatencyFunction((1.0, 1.0))


@pytest.fixture(scope="session")
def corridor_observations():
    """Near-exact equilibria of the corridor network under the quartic factor.

    Session-scoped because the route-flow optimization is the slow part.
    """
    network, base = corridor_instance()
    f_true = bpr()
    flows, demands = [], []
    for scale in (0.55, 0.9, 1.3, 1.75):
        dem = DemandVector(base * scale)
        x, _, _, _ = route_based_equilibrium(network, dem, f_true)
        flows.append(FlowVector(x))
        demands.append(dem)
    return network, flows, demands, f_true
