"""Sensitivity of the assignment objective to link parameters, plus the
meta-analysis metrics used to compare routing policies.

The objective here is the user-assignment value (the flow integral of the
latencies at equilibrium). Analytic partial derivatives come from the closed
polynomial forms; the finite-difference variants re-solve the assignment with
one link's free-flow time or capacity perturbed and report the objective
drop, which is what ranks links for interventions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .equilibrium import SolverSettings, solve_ue
from .errors import MissingZoneLabels, NonPositivePerturbedTime, NotConverged
from .latency import LatencyFunction
from .network import DemandVector, FlowVector, Network

__all__ = [
    "SensitivityReport",
    "FlowExtremes",
    "analytic_sensitivities",
    "delta_v_freeflow",
    "delta_v_capacity",
    "sensitivity_report",
    "rank_links",
    "congestion_metric",
    "zone_costs",
    "flow_extremes",
]

_DEFAULT_SETTINGS = SolverSettings(max_iterations=10000, rel_gap_tol=1e-7,
                                   step_rule="exact_line_search")


def _flow_array(flows):
    return flows.values if isinstance(flows, FlowVector) else np.asarray(flows, dtype=float)


def analytic_sensitivities(network: Network, ue_flows, f: LatencyFunction):
    """Closed-form partials of the assignment objective at equilibrium flows.

    Returns (d_obj/d_free_flow_time, d_obj/d_capacity), one entry per link.
    The free-flow partial is the flow integral of the latency factor; the
    capacity partial is nonpositive since widening a link can only help.
    """
    x = _flow_array(ue_flows)
    t0 = network.free_flow_times
    cap = network.capacities
    z = x / cap
    dv_dt0 = cap * f.integral(z)
    # integral of s * f'(s/m) over [0, x], folded into powers of z
    coeffs = np.zeros(f.degree + 2)
    for i in range(1, f.degree + 1):
        coeffs[i + 1] = f.coefficients[i] * i / (i + 1)
    dv_dm = -t0 * np.polynomial.polynomial.polyval(z, coeffs)
    return dv_dt0, dv_dm


def _objective_value(network, demand, f, settings):
    try:
        return solve_ue(network, demand, f, settings).objective
    except NotConverged as exc:  # identical budgets on both sides of a difference
        return exc.result.objective


def delta_v_freeflow(network: Network, demand, f: LatencyFunction, link_id: int,
                     delta_t0: float | None = None,
                     settings: SolverSettings = _DEFAULT_SETTINGS) -> float:
    """Objective drop when one link's free-flow time moves by ``delta_t0``.

    Default perturbation is minus one fifth of the smallest free-flow time.
    Positive output means the change helps (shorter travel times).
    """
    if delta_t0 is None:
        delta_t0 = -0.2 * float(network.free_flow_times.min())
    t0 = network.links[link_id].free_flow_time
    if t0 + delta_t0 <= 0:
        raise NonPositivePerturbedTime(
            f"link {link_id}: perturbed free-flow time {t0 + delta_t0} is not positive"
        )
    base = _objective_value(network, demand, f, settings)
    perturbed = network.with_link_params(link_id, free_flow_time=t0 + delta_t0)
    return base - _objective_value(perturbed, demand, f, settings)


def delta_v_capacity(network: Network, demand, f: LatencyFunction, link_id: int,
                     delta_m: float | None = None,
                     settings: SolverSettings = _DEFAULT_SETTINGS) -> float:
    """Objective drop when one link's capacity moves by ``delta_m``.

    Default perturbation is plus one fifth of the smallest capacity.
    """
    if delta_m is None:
        delta_m = 0.2 * float(network.capacities.min())
    m = network.links[link_id].capacity
    if m + delta_m <= 0:
        raise ValueError(f"link {link_id}: perturbed capacity {m + delta_m} is not positive")
    base = _objective_value(network, demand, f, settings)
    perturbed = network.with_link_params(link_id, capacity=m + delta_m)
    return base - _objective_value(perturbed, demand, f, settings)


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    """Per-link analytic partials and finite-difference objective drops."""

    dv_dt0: np.ndarray
    dv_dm: np.ndarray
    delta_v_t0: np.ndarray
    delta_v_m: np.ndarray
    delta_t0_used: float
    delta_m_used: float

    def to_csv_rows(self):
        rows = []
        for a in range(len(self.dv_dt0)):
            rows.append([a, self.dv_dt0[a], self.dv_dm[a],
                         self.delta_v_t0[a], self.delta_v_m[a]])
        return rows


def sensitivity_report(network: Network, demand, f: LatencyFunction,
                       settings: SolverSettings = _DEFAULT_SETTINGS,
                       delta_t0: float | None = None,
                       delta_m: float | None = None) -> SensitivityReport:
    """Full per-link sensitivity sweep: one base solve plus two per link."""
    if delta_t0 is None:
        delta_t0 = -0.2 * float(network.free_flow_times.min())
    if delta_m is None:
        delta_m = 0.2 * float(network.capacities.min())

    try:
        base_res = solve_ue(network, demand, f, settings)
    except NotConverged as exc:
        base_res = exc.result
    base = base_res.objective
    dv_dt0, dv_dm = analytic_sensitivities(network, base_res.flows, f)

    n = network.n_links
    dvt = np.zeros(n)
    dvm = np.zeros(n)
    for a in range(n):
        link = network.links[a]
        if link.free_flow_time + delta_t0 <= 0:
            raise NonPositivePerturbedTime(
                f"link {a}: perturbed free-flow time {link.free_flow_time + delta_t0}"
            )
        pert_t = network.with_link_params(a, free_flow_time=link.free_flow_time + delta_t0)
        dvt[a] = base - _objective_value(pert_t, demand, f, settings)
        pert_m = network.with_link_params(a, capacity=link.capacity + delta_m)
        dvm[a] = base - _objective_value(pert_m, demand, f, settings)
    return SensitivityReport(dv_dt0, dv_dm, dvt, dvm, float(delta_t0), float(delta_m))


def rank_links(report: SensitivityReport, by: str = "freeflow", top_k: int = 4):
    """Link ids sorted by descending objective drop; ties break on the id."""
    if by == "freeflow":
        values = report.delta_v_t0
    elif by == "capacity":
        values = report.delta_v_m
    else:
        raise ValueError("by must be 'freeflow' or 'capacity'")
    order = sorted(range(len(values)), key=lambda a: (-values[a], a))
    return order[:top_k]


def congestion_metric(network: Network, flows, f: LatencyFunction) -> np.ndarray:
    """Per-link ratio of travel time to free-flow travel time."""
    x = _flow_array(flows)
    return f.value(x / network.capacities)


def zone_costs(network: Network, flows, f: LatencyFunction) -> dict:
    """Per-zone total travel time over links touching the zone.

    A link whose endpoints sit in two different zones contributes its full
    cost to both zones, so zone costs may double-count relative to the
    network total.
    """
    if not network.zone_of:
        raise MissingZoneLabels("network has no zone map")
    x = _flow_array(flows)
    t = network.free_flow_times * f.value(x / network.capacities)
    costs: dict = {}
    for link in network.links:
        contribution = x[link.id] * t[link.id]
        zones = set()
        for node in (link.tail, link.head):
            if node not in network.zone_of:
                raise MissingZoneLabels(f"node {node!r} has no zone label")
            zones.add(network.zone_of[node])
        for zone in zones:
            costs[zone] = costs.get(zone, 0.0) + contribution
    return dict(sorted(costs.items(), key=lambda kv: str(kv[0])))


class FlowExtremes(NamedTuple):
    max_value: float
    max_link: int
    min_value: float
    min_link: int


def flow_extremes(flows) -> FlowExtremes:
    """Largest and smallest link flow with their (smallest) link ids."""
    x = _flow_array(flows)
    if x.size == 0:
        raise ValueError("flow vector is empty")
    return FlowExtremes(float(x.max()), int(np.argmax(x)),
                        float(x.min()), int(np.argmin(x)))
