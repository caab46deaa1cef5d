"""Initial OD demand estimation by generalized least squares.

Observed link-flow samples are fitted by nonnegative route flows weighted by
the inverse sample covariance; the route flows then decompose into per-OD
demands and route-choice probabilities. The covariance weighting treats the
network as uncongested; the bilevel adjustment stage corrects for congestion
afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples
from .network import (DemandVector, FlowVector, Network, RouteSet,
                      enumerate_route_set, link_route_incidence)
from .qp import QuadraticProgram, solve_feasibility, solve_qp

__all__ = [
    "SampleStatistics",
    "RouteChoiceMatrix",
    "ODEstimate",
    "sample_statistics",
    "solve_p1",
    "solve_p2",
    "initial_demand",
]

_RIDGE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class SampleStatistics:
    """Mean, covariance, and regularized inverse covariance of flow samples."""

    mean: np.ndarray
    covariance: np.ndarray
    inverse: np.ndarray
    count: int
    ridge: float


@dataclass(frozen=True, eq=False)
class RouteChoiceMatrix:
    """Row-stochastic OD-by-route probabilities, zero outside each OD's routes."""

    matrix: np.ndarray          # (n OD pairs, n routes), OD-major route order
    support: np.ndarray         # boolean mask of allowed entries

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if np.any(m < -1e-12):
            raise ValueError("route-choice probabilities must be nonnegative")
        row_sums = m.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ValueError("route-choice rows must sum to one")
        if np.any(m[~np.asarray(self.support, dtype=bool)] != 0.0):
            raise ValueError("probability assigned outside the OD's route set")


def sample_statistics(flows) -> SampleStatistics:
    """Mean and unbiased covariance of K >= 2 flow observations.

    A singular covariance gets a diagonal ridge of 1e-8 * trace / n_links,
    floored at a tiny absolute value so that even an all-zero covariance
    (identical samples) stays invertible.
    """
    arrays = [f.values if isinstance(f, FlowVector) else np.asarray(f, dtype=float)
              for f in flows]
    if len(arrays) < 2:
        raise TooFewSamples("need at least two flow observations")
    X = np.vstack(arrays)
    k, n = X.shape
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (k - 1)
    cov = 0.5 * (cov + cov.T)

    eigs = np.linalg.eigvalsh(cov)
    ridge = 0.0
    if eigs[0] <= 1e-12 * max(1.0, eigs[-1]):
        ridge = max(1e-8 * float(np.trace(cov)) / n, _RIDGE_FLOOR)
        cov = cov + ridge * np.eye(n)
    inverse = np.linalg.inv(cov)
    inverse = 0.5 * (inverse + inverse.T)
    return SampleStatistics(mean, cov, inverse, k, ridge)


def solve_p1(incidence: np.ndarray, stats: SampleStatistics, flows) -> np.ndarray:
    """Nonnegative route flows minimizing the covariance-weighted fit error.

    ``incidence`` has one row per link and one column per route.
    """
    A = np.asarray(incidence, dtype=float)
    arrays = [f.values if isinstance(f, FlowVector) else np.asarray(f, dtype=float)
              for f in flows]
    k = len(arrays)
    Q = k * (A.T @ stats.inverse @ A)
    lin = -sum(A.T @ (stats.inverse @ x) for x in arrays)
    n_routes = A.shape[1]
    qp = QuadraticProgram(Q=Q, b=lin, lb=np.zeros(n_routes))
    return np.maximum(solve_qp(qp).x, 0.0)


def solve_p2(route_set: RouteSet, xi: np.ndarray,
             method: str = "construction") -> tuple[RouteChoiceMatrix, DemandVector]:
    """Split route flows into per-OD demands and route-choice probabilities.

    The demand of an OD is forced to the sum of its route flows (the
    row-stochastic constraint leaves no freedom), so the construction is
    always feasible: probabilities are flow shares, uniform when the OD's
    flow is zero. ``method="qp"`` instead recovers the probabilities through
    the linear feasibility solver with the demands fixed, as a cross-check.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise ValueError("route flows must be nonnegative")
    counts = route_set.counts()
    if xi.size != sum(counts):
        raise ValueError("route-flow length does not match the route set")

    n_od = len(counts)
    n_routes = xi.size
    support = np.zeros((n_od, n_routes), dtype=bool)
    start = 0
    demands = np.zeros(n_od)
    for i, cnt in enumerate(counts):
        support[i, start:start + cnt] = True
        demands[i] = xi[start:start + cnt].sum()
        start += cnt

    if method == "construction":
        P = np.zeros((n_od, n_routes))
        start = 0
        for i, cnt in enumerate(counts):
            block = xi[start:start + cnt]
            if demands[i] > 0:
                P[i, start:start + cnt] = block / demands[i]
            elif cnt:
                P[i, start:start + cnt] = 1.0 / cnt
            start += cnt
    elif method == "qp":
        # With g fixed, P'g = xi and the row sums are linear in P's entries.
        idx = {}
        cols = 0
        for i in range(n_od):
            for r in np.flatnonzero(support[i]):
                idx[(i, r)] = cols
                cols += 1
        rows_e = []
        rhs_e = []
        for r in range(n_routes):
            row = np.zeros(cols)
            i = int(np.flatnonzero(support[:, r])[0])
            row[idx[(i, r)]] = demands[i]
            rows_e.append(row)
            rhs_e.append(xi[r])
        for i in range(n_od):
            row = np.zeros(cols)
            for r in np.flatnonzero(support[i]):
                row[idx[(i, r)]] = 1.0
            rows_e.append(row)
            rhs_e.append(1.0)
        point = solve_feasibility(E=np.vstack(rows_e), e=np.asarray(rhs_e),
                                  bounds=(np.zeros(cols), np.full(cols, np.inf)))
        P = np.zeros((n_od, n_routes))
        for (i, r), j in idx.items():
            P[i, r] = max(point[j], 0.0)
        # normalize away solver roundoff
        P = P / P.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown method {method!r}")

    return RouteChoiceMatrix(P, support), DemandVector(demands)


@dataclass(frozen=True, eq=False)
class ODEstimate:
    """Initial-demand pipeline output with its intermediate artifacts.

    ``incidence_rank`` below the route count flags that the observed links
    cannot separate all route flows, so the demand split is not unique.
    """

    demand: DemandVector
    route_set: RouteSet
    route_flows: np.ndarray
    choice_matrix: RouteChoiceMatrix
    statistics: SampleStatistics
    incidence_rank: int = 0


def initial_demand(network: Network, flows, k_max: int = 3, length_ratio: float = 1.5,
                   single_route: bool = False, link_weights=None) -> ODEstimate:
    """Estimate per-OD demand from K >= 2 observed flow vectors.

    Enumerates candidate routes (free-flow weights by default), fits route
    flows by covariance-weighted least squares, and splits them into demands
    and route probabilities. With ``single_route`` each OD keeps only its
    fastest route, which pins the choice matrix to an identity pattern; this
    is the practical mode for large networks.
    """
    if single_route:
        route_set = enumerate_route_set(network, k_max=1, length_ratio=1.0,
                                        link_weights=link_weights)
    else:
        route_set = enumerate_route_set(network, k_max=k_max, length_ratio=length_ratio,
                                        link_weights=link_weights)
    incidence = link_route_incidence(route_set)
    stats = sample_statistics(flows)
    xi = solve_p1(incidence, stats, flows)
    choice, demand = solve_p2(route_set, xi)
    rank = int(np.linalg.matrix_rank(incidence))
    return ODEstimate(demand, route_set, xi, choice, stats, rank)
