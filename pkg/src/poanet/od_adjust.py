"""Bilevel adjustment of an initial OD demand estimate against observed flows.

The outer objective penalizes the squared distance between assigned and
observed link flows (optionally plus the squared move away from the initial
demand). Each outer iteration re-solves the assignment problem, approximates
the flow-demand Jacobian by fastest-route indicators at the current travel
times, masks the descent direction to preserve nonnegativity, and picks the
step from a geometric ladder. Because zero is always a candidate step and the
inner solver is deterministic, the objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .equilibrium import SolverSettings, link_latencies, solve_ue
from .errors import NotConverged
from .latency import LatencyFunction
from .network import DemandVector, FlowVector, Network, _lex_shortest

__all__ = [
    "AdjustSettings",
    "AdjustTrace",
    "bilevel_objective",
    "route_jacobian",
    "gradient_objective",
    "adjust_demand",
]

_DEFAULT_TAP = SolverSettings(max_iterations=4000, rel_gap_tol=1e-5,
                              step_rule="exact_line_search")


@dataclass(frozen=True)
class AdjustSettings:
    """Controls for the demand-adjustment loop.

    ``step_divisor`` and ``ladder_depth`` define the candidate steps
    theta_max / step_divisor**j for j = 0..ladder_depth, plus zero.
    ``demand_floor`` is the threshold under which a demand entry only moves
    if its descent component is positive. The loop stops when the per-
    iteration objective drop, relative to the starting objective, falls
    below ``stop_tol``.
    """

    demand_weight: float = 0.0
    flow_weight: float = 1.0
    step_divisor: int = 2
    ladder_depth: int = 10
    demand_floor: float = 0.0
    stop_tol: float = 1e-20
    max_outer_iterations: int = 50
    tap_settings: SolverSettings = _DEFAULT_TAP

    def __post_init__(self):
        if self.demand_weight < 0 or self.flow_weight < 0:
            raise ValueError("objective weights must be nonnegative")
        if int(self.step_divisor) < 2:
            raise ValueError("step_divisor must be an integer of at least 2")
        if int(self.ladder_depth) < 1:
            raise ValueError("ladder_depth must be a positive integer")
        if self.demand_floor < 0:
            raise ValueError("demand_floor must be nonnegative")
        if not (self.stop_tol > 0):
            raise ValueError("stop_tol must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")


@dataclass
class AdjustTrace:
    """Per-iteration objective, chosen step, and distance from the start."""

    objectives: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    demand_shifts: list = field(default_factory=list)

    def record(self, objective, step, shift):
        self.objectives.append(float(objective))
        self.steps.append(None if step is None else float(step))
        self.demand_shifts.append(float(shift))

    def to_csv_rows(self):
        rows = []
        for i, (obj, step, shift) in enumerate(zip(self.objectives, self.steps,
                                                   self.demand_shifts)):
            rows.append([i, obj, "" if step is None else step, shift])
        return rows


def bilevel_objective(demand, initial_demand, assigned_flows, observed_flows,
                      demand_weight: float, flow_weight: float) -> float:
    """Weighted squared demand drift plus squared flow mismatch."""
    g = np.asarray(demand, dtype=float)
    g0 = np.asarray(initial_demand, dtype=float)
    x = assigned_flows.values if isinstance(assigned_flows, FlowVector) else np.asarray(assigned_flows, dtype=float)
    xt = observed_flows.values if isinstance(observed_flows, FlowVector) else np.asarray(observed_flows, dtype=float)
    return float(demand_weight * np.sum((g - g0) ** 2)
                 + flow_weight * np.sum((x - xt) ** 2))


def route_jacobian(network: Network, flows, f: LatencyFunction) -> sp.csc_matrix:
    """0/1 approximation of d(link flow)/d(OD demand) at the current flows.

    Entry (a, i) is 1 exactly when link a lies on OD i's fastest route under
    the travel times induced by ``flows``. Zero-demand ODs get a column too;
    the indicator does not depend on the demand itself.
    """
    t = link_latencies(network, flows, f)
    rows = []
    cols = []
    for origin_idx in sorted(network._ods_by_origin):
        targets = {dest for _, dest in network._ods_by_origin[origin_idx]}
        settled = _lex_shortest(network, t, origin_idx, targets=targets)
        for od_idx, dest in network._ods_by_origin[origin_idx]:
            for lid in settled[dest][1]:
                rows.append(lid)
                cols.append(od_idx)
    data = np.ones(len(rows))
    return sp.csc_matrix((data, (rows, cols)),
                         shape=(network.n_links, len(network.od_pairs)))


def gradient_objective(demand, initial_demand, assigned_flows, observed_flows,
                       jacobian, demand_weight: float, flow_weight: float) -> np.ndarray:
    """Gradient of the bilevel objective under the indicator Jacobian."""
    g = np.asarray(demand, dtype=float)
    g0 = np.asarray(initial_demand, dtype=float)
    x = assigned_flows.values if isinstance(assigned_flows, FlowVector) else np.asarray(assigned_flows, dtype=float)
    xt = observed_flows.values if isinstance(observed_flows, FlowVector) else np.asarray(observed_flows, dtype=float)
    return 2.0 * demand_weight * (g - g0) + 2.0 * flow_weight * (jacobian.T @ (x - xt))


def _tap_flows(network, demand_arr, f, settings):
    try:
        result = solve_ue(network, DemandVector(demand_arr), f, settings)
    except NotConverged as exc:
        result = exc.result
    return result.flows.values


def adjust_demand(network: Network, f: LatencyFunction, observed_flows, initial_demand,
                  settings: AdjustSettings = AdjustSettings()) -> tuple[DemandVector, AdjustTrace]:
    """Iteratively move the demand so assigned flows approach observed flows.

    Every candidate step is evaluated with a fresh deterministic assignment
    solve; the zero step is always a candidate, so the objective sequence is
    non-increasing. Demands stay nonnegative throughout.
    """
    g0 = initial_demand.values if isinstance(initial_demand, DemandVector) else np.asarray(initial_demand, dtype=float)
    xt = observed_flows.values if isinstance(observed_flows, FlowVector) else np.asarray(observed_flows, dtype=float)
    if np.any(g0 < 0) or np.any(xt < 0):
        raise ValueError("initial demand and observed flows must be nonnegative")

    gw = settings.demand_weight
    fw = settings.flow_weight
    divisor = int(settings.step_divisor)
    depth = int(settings.ladder_depth)

    trace = AdjustTrace()
    g = g0.copy()
    x = _tap_flows(network, g, f, settings.tap_settings)
    obj = bilevel_objective(g, g0, x, xt, gw, fw)
    trace.record(obj, None, 0.0)
    if obj == 0.0:
        return DemandVector(g), trace
    obj0 = obj

    for _ in range(settings.max_outer_iterations):
        jac = route_jacobian(network, x, f)
        descent = -gradient_objective(g, g0, x, xt, jac, gw, fw)
        masked = np.where((g > settings.demand_floor) | (descent > 0.0), descent, 0.0)

        if not np.any(masked):
            trace.record(obj, 0.0, float(np.linalg.norm(g - g0)))
            break

        negative = masked < 0
        if negative.any():
            theta_max = float(np.min(-g[negative] / masked[negative]))
        else:
            theta_max = 1.0  # positivity never binds along this direction

        candidates = [theta_max / divisor ** j for j in range(depth + 1)] + [0.0]
        values = []
        flows_at = []
        for theta in candidates:
            if theta == 0.0:
                values.append(obj)
                flows_at.append(x)
                continue
            g_cand = np.maximum(g + theta * masked, 0.0)
            x_cand = _tap_flows(network, g_cand, f, settings.tap_settings)
            values.append(bilevel_objective(g_cand, g0, x_cand, xt, gw, fw))
            flows_at.append(x_cand)

        pick = int(np.argmin(values))
        theta = candidates[pick]
        g = np.maximum(g + theta * masked, 0.0)
        x = flows_at[pick]
        new_obj = values[pick]
        trace.record(new_obj, theta, float(np.linalg.norm(g - g0)))

        drop = (obj - new_obj) / obj0
        obj = new_obj
        if drop < settings.stop_tol:
            break

    return DemandVector(g), trace
