"""Price-of-anarchy estimation toolkit for road networks.

Submodules
----------
network      directed-graph model, routes, all-or-nothing assignment
latency      shared polynomial latency family
equilibrium  user/social assignment solvers, PoA and gap measures
qp           convex quadratic-program subsolver
inverse_vi   latency-function recovery from observed flows
od_estimate  generalized-least-squares initial demand estimation
od_adjust    bilevel demand adjustment
sensitivity  objective sensitivities, link rankings, congestion metrics
tntp         standard network/trips file parsing
observations speed ingestion and flow observation files
reports      deterministic JSON/CSV emission
figures      matplotlib renderings of report data
cli          command-line interface
"""

from .equilibrium import (EquilibriumResult, SolverSettings, price_of_anarchy,
                          relative_gap, solve_so, solve_ue, total_latency,
                          wardrop_epsilon)
from .latency import LatencyFunction, beckmann_term, bpr, evaluate_f, link_latency, marginal_latency
from .network import (DemandVector, FlowVector, Link, Network, Route, RouteSet,
                      assign_all_or_nothing, build_network, enumerate_route_set,
                      enumerate_routes, fastest_route, link_route_incidence)

__version__ = "0.1.0"
