"""Forward assignment solvers: user equilibrium, social optimum, and the
efficiency measures built on them.

Both solvers iterate all-or-nothing loading and averaging. The user solver
minimizes the flow integral of the latencies; the social solver runs the same
loop with marginal (externality-inclusive) latencies, which makes its fixed
point minimize total travel time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import InfeasibleDemand, NonConvexObjective, NotConverged, ZeroSocialCost
from .latency import LatencyFunction
from .network import DemandVector, FlowVector, Network, assign_all_or_nothing

__all__ = [
    "SolverSettings",
    "EquilibriumResult",
    "solve_ue",
    "solve_so",
    "total_latency",
    "price_of_anarchy",
    "relative_gap",
    "wardrop_epsilon",
    "link_latencies",
]

STEP_RULES = ("msa", "exact_line_search")


@dataclass(frozen=True)
class SolverSettings:
    """Assignment loop controls.

    ``step_rule`` is ``"msa"`` (averaging with step 1/k) or
    ``"exact_line_search"`` (step minimizing the objective along the
    all-or-nothing direction). ``track_route_flows`` keeps a per-OD route-flow
    decomposition of the iterate, at some memory cost. ``route_polish`` adds a
    final equilibration sweep over the tracked routes: averaging iterates can
    leave tiny stale shares on routes that stopped being attractive long ago,
    and the sweep drains them onto each OD's cheapest tracked route with an
    exact line search per move (implies tracking).
    """

    max_iterations: int = 5000
    rel_gap_tol: float = 1e-4
    step_rule: str = "msa"
    track_route_flows: bool = False
    route_polish: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not (self.rel_gap_tol > 0):
            raise ValueError("rel_gap_tol must be positive")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if self.route_polish and not self.track_route_flows:
            object.__setattr__(self, "track_route_flows", True)


@dataclass
class EquilibriumResult:
    """Solver output. ``objective`` is the flow integral of latencies for the
    user problem and the total travel time for the social problem."""

    flows: FlowVector
    iterations: int
    final_rel_gap: float
    objective: float
    converged: bool = True
    route_flows: dict | None = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "flows": list(self.flows.values),
            "iterations": self.iterations,
            "rel_gap": self.final_rel_gap,
            "objective": self.objective,
        }


def _demand_array(network: Network, demand) -> np.ndarray:
    dem = demand.values if isinstance(demand, DemandVector) else np.asarray(demand, dtype=float)
    if dem.shape != (len(network.od_pairs),):
        raise InfeasibleDemand(
            f"demand has {dem.shape} entries, network has {len(network.od_pairs)} OD pairs"
        )
    return dem


def link_latencies(network: Network, flows, f: LatencyFunction) -> np.ndarray:
    """Per-link travel times at the given flows."""
    x = flows.values if isinstance(flows, FlowVector) else np.asarray(flows, dtype=float)
    return network.free_flow_times * f.value(x / network.capacities)


def _exact_step(t0, cap, coeffs, x, d) -> float:
    """Step in [0, 1] minimizing the objective along direction d.

    The objective derivative along d is t(x + a d)' d, which is nondecreasing
    in a for a nondecreasing latency map, so bisection on its sign is exact.
    """

    def deriv(a):
        z = (x + a * d) / cap
        return float(np.dot(t0 * npoly.polyval(z, coeffs), d))

    if deriv(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if deriv(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _equilibrate_routes(network, x, route_flows, dem, t0, cap, coeffs,
                        sweeps: int = 40):
    """Drain each OD's costlier tracked routes onto its cheapest one.

    Every move is an exact-line-search descent step along the route-swap
    direction, so the iterate stays feasible (per-OD totals are preserved)
    and the objective never increases. Stops early once a full sweep moves
    nothing.
    """
    for _ in range(sweeps):
        moved = False
        for od_idx, by_route in route_flows.items():
            if len(by_route) < 2:
                continue
            t = t0 * npoly.polyval(x / cap, coeffs)
            costs = {r: sum(t[l] for l in r) for r in by_route}
            best = min(costs, key=lambda r: (costs[r], r))
            floor = 1e-12 * max(dem[od_idx], 1.0)
            for r in sorted(by_route, key=lambda r: -costs[r]):
                if r == best:
                    continue
                value = by_route[r]
                if value <= floor or costs[r] <= costs[best]:
                    continue
                direction = np.zeros_like(x)
                direction[list(best)] += value
                direction[list(r)] -= value
                alpha = _exact_step(t0, cap, coeffs, x, direction)
                if alpha <= 0.0:
                    continue
                x = x + alpha * direction
                shift = alpha * value
                by_route[r] = value - shift
                by_route[best] = by_route.get(best, 0.0) + shift
                if by_route[r] <= floor:
                    del by_route[r]
                moved = True
        if not moved:
            break
    return x


def _solve(network: Network, demand, f: LatencyFunction, settings: SolverSettings,
           use_marginal: bool) -> EquilibriumResult:
    dem = _demand_array(network, demand)
    demand_vec = DemandVector(dem)
    t0 = network.free_flow_times
    cap = network.capacities
    if use_marginal:
        coeffs = np.array([(i + 1) * b for i, b in enumerate(f.coefficients)])
    else:
        coeffs = np.asarray(f.coefficients)
    track = settings.track_route_flows

    x = np.zeros(network.n_links)
    route_flows: dict[int, dict[tuple, float]] = {} if track else None
    total_demand = float(dem.sum())

    gap = 0.0
    iterations = 0
    converged = total_demand == 0.0
    for k in range(1, settings.max_iterations + 1):
        t = t0 * npoly.polyval(x / cap, coeffs)
        if converged:
            break
        aon = assign_all_or_nothing(network, demand_vec, t, return_routes=track)
        if track:
            aon, aon_routes = aon
        y = aon.values
        tx = float(np.dot(t, x))
        ty = float(np.dot(t, y))
        gap = (tx - ty) / tx if tx > 0 else 0.0
        if k > 1 and gap <= settings.rel_gap_tol:
            converged = True
            break
        if k == 1:
            alpha = 1.0  # move to the first feasible point
        elif settings.step_rule == "msa":
            alpha = 1.0 / k
        else:
            alpha = _exact_step(t0, cap, coeffs, x, y - x)
        x = x + alpha * (y - x)
        iterations = k
        if track:
            for flows_by_route in route_flows.values():
                for r in flows_by_route:
                    flows_by_route[r] *= 1.0 - alpha
            for od_idx, route in aon_routes.items():
                by_route = route_flows.setdefault(od_idx, {})
                by_route[route] = by_route.get(route, 0.0) + alpha * dem[od_idx]
            for od_idx, flows_by_route in route_flows.items():
                floor = 1e-14 * dem[od_idx]
                for r in [r for r, v in flows_by_route.items() if v <= floor]:
                    del flows_by_route[r]

    if not converged:
        # One more gap evaluation after the final update.
        t = t0 * npoly.polyval(x / cap, coeffs)
        y = assign_all_or_nothing(network, demand_vec, t).values
        tx = float(np.dot(t, x))
        gap = (tx - float(np.dot(t, y))) / tx if tx > 0 else 0.0
        converged = gap <= settings.rel_gap_tol

    if settings.route_polish and converged and total_demand > 0:
        x = _equilibrate_routes(network, x, route_flows, dem, t0, cap, coeffs)
        t = t0 * npoly.polyval(x / cap, coeffs)
        y = assign_all_or_nothing(network, demand_vec, t).values
        tx = float(np.dot(t, x))
        gap = (tx - float(np.dot(t, y))) / tx if tx > 0 else 0.0
        converged = gap <= settings.rel_gap_tol

    if use_marginal:
        objective = float(np.dot(x, t0 * f.value(x / cap)))
    else:
        objective = float(np.sum(t0 * cap * f.integral(x / cap)))
    result = EquilibriumResult(FlowVector(x), iterations, gap, objective,
                               converged=converged, route_flows=route_flows)
    if not converged:
        raise NotConverged(
            f"relative gap {gap:.3e} above tolerance {settings.rel_gap_tol:.1e} "
            f"after {iterations} iterations",
            result=result,
        )
    return result


def solve_ue(network: Network, demand, f: LatencyFunction,
             settings: SolverSettings = SolverSettings()) -> EquilibriumResult:
    """Solve for the user (selfish-routing) equilibrium link flows.

    Returns flows whose relative gap is at or below ``settings.rel_gap_tol``;
    raises :class:`NotConverged` (with the best iterate attached) otherwise.
    """
    return _solve(network, demand, f, settings, use_marginal=False)


def solve_so(network: Network, demand, f: LatencyFunction,
             settings: SolverSettings = SolverSettings()) -> EquilibriumResult:
    """Solve for the socially optimal link flows (minimum total travel time).

    Runs the user solver with marginal latencies, after a numerical check
    that per-link total cost x*t(x) is convex on the reachable flow range.
    """
    dem = _demand_array(network, demand)
    z_hi = float(dem.sum() / network.capacities.min()) if len(dem) else 0.0
    if z_hi > 0:
        zs = np.linspace(0.0, z_hi, 256)
        vals = f.marginal_value(zs)
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.any(np.diff(vals) < -1e-9 * scale):
            raise NonConvexObjective(
                "per-link cost x*t(x) is not convex on the reachable flow range"
            )
    return _solve(network, demand, f, settings, use_marginal=True)


def total_latency(network: Network, flows, f: LatencyFunction) -> float:
    """Total travel time over all drivers (vehicle-hours)."""
    x = flows.values if isinstance(flows, FlowVector) else np.asarray(flows, dtype=float)
    return float(np.dot(x, link_latencies(network, x, f)))


def price_of_anarchy(network: Network, user_flows, social_flows, f: LatencyFunction) -> float:
    """Ratio of total travel time under selfish routing to the social optimum."""
    l_user = total_latency(network, user_flows, f)
    l_social = total_latency(network, social_flows, f)
    if l_social == 0.0:
        raise ZeroSocialCost("social total latency is zero; PoA undefined")
    return l_user / l_social


def relative_gap(network: Network, flows, demand, f: LatencyFunction) -> float:
    """Normalized distance from equilibrium at frozen latencies.

    Zero demand yields zero by convention.
    """
    x = flows.values if isinstance(flows, FlowVector) else np.asarray(flows, dtype=float)
    dem = _demand_array(network, demand)
    t = link_latencies(network, x, f)
    tx = float(np.dot(t, x))
    if tx <= 0.0:
        return 0.0
    y = assign_all_or_nothing(network, DemandVector(dem), t).values
    return (tx - float(np.dot(t, y))) / tx


def wardrop_epsilon(network: Network, flows, demand, f: LatencyFunction) -> float:
    """Tightest equilibrium-approximation constant for the given flows.

    Computed as t(x)'x minus the minimum of t(x)'y over feasible y, the
    minimum being attained by all-or-nothing loading at frozen latencies.
    """
    x = flows.values if isinstance(flows, FlowVector) else np.asarray(flows, dtype=float)
    dem = _demand_array(network, demand)
    t = link_latencies(network, x, f)
    y = assign_all_or_nothing(network, DemandVector(dem), t).values
    return float(np.dot(t, x) - np.dot(t, y))
