"""Recovery of the shared latency function from observed equilibrium flows.

Each observed flow vector is treated as an approximate equilibrium of its
network; the estimator searches for polynomial coefficients making every
observation as close to an exact equilibrium as possible, trading the total
approximation slack against a kernel-weighted ridge penalty on the
coefficients. The search is a convex QP over the coefficients, per-OD node
potentials (dual prices), and per-observation slacks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp

from .equilibrium import total_latency, wardrop_epsilon
from .errors import EmptyObservations, InsufficientObservations
from .latency import LatencyFunction
from .network import DemandVector, FlowVector, Network
from .qp import QuadraticProgram, solve_qp

__all__ = [
    "ObservationSet",
    "InverseVIAssembly",
    "InverseVISolution",
    "CrossValidationResult",
    "assemble_invvi",
    "estimate_cost",
    "cross_validate",
    "kernel_ridge",
]

MAX_DEGREE = 8


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """K observed flow vectors with their networks and demand vectors.

    ``networks`` may hold a single shared network or one per observation.
    ``demands`` may be None for flow-only batches (for example freshly
    ingested speed data); the inverse problem requires them.
    """

    networks: tuple[Network, ...]
    flows: tuple[FlowVector, ...]
    demands: tuple[DemandVector, ...] | None = None
    labels: tuple[str, ...] | None = None
    meta: dict | None = None

    def __post_init__(self):
        flows = tuple(self.flows)
        if len(flows) == 0:
            raise EmptyObservations("observation set needs at least one flow vector")
        networks = tuple(self.networks)
        if len(networks) == 1:
            networks = networks * len(flows)
        if len(networks) != len(flows):
            raise ValueError("need one network (shared) or one per observation")
        for k, (net, fl) in enumerate(zip(networks, flows)):
            if len(fl) != net.n_links:
                raise ValueError(f"observation {k}: flow length {len(fl)} != {net.n_links} links")
        demands = self.demands
        if demands is not None:
            demands = tuple(demands)
            if len(demands) != len(flows):
                raise ValueError("need one demand vector per observation")
            for k, (net, dm) in enumerate(zip(networks, demands)):
                if len(dm) != len(net.od_pairs):
                    raise ValueError(f"observation {k}: demand length != OD pair count")
        object.__setattr__(self, "networks", networks)
        object.__setattr__(self, "flows", flows)
        object.__setattr__(self, "demands", demands)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(flows):
                raise ValueError("need one label per observation")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.flows)

    @classmethod
    def for_network(cls, network: Network, flows, demands=None, labels=None, meta=None):
        flows = tuple(FlowVector(np.asarray(x, dtype=float)) if not isinstance(x, FlowVector) else x
                      for x in flows)
        if demands is not None:
            demands = tuple(DemandVector(np.asarray(d, dtype=float)) if not isinstance(d, DemandVector) else d
                            for d in demands)
        return cls((network,), flows, demands, labels, meta)

    def subset(self, indices) -> "ObservationSet":
        idx = list(indices)
        return ObservationSet(
            tuple(self.networks[i] for i in idx),
            tuple(self.flows[i] for i in idx),
            None if self.demands is None else tuple(self.demands[i] for i in idx),
            None if self.labels is None else tuple(self.labels[i] for i in idx),
            self.meta,
        )


def kernel_ridge(beta, degree: int, kernel_offset: float) -> float:
    """Ridge value sum_i beta_i^2 / (C(degree, i) * kernel_offset^(degree - i))."""
    return float(sum(
        b * b / (math.comb(degree, i) * kernel_offset ** (degree - i))
        for i, b in enumerate(beta)
    ))


@dataclass(frozen=True, eq=False)
class InverseVIAssembly:
    """Assembled estimation QP plus the variable layout needed to read it."""

    qp: QuadraticProgram
    degree: int
    kernel_offset: float
    ridge_weight: float
    beta_slice: slice
    eps_slice: slice
    dual_slices: dict
    observed_ratios: np.ndarray
    n_dual_rows: int
    n_gap_rows: int
    n_monotonicity_rows: int


def _positive_ods(network: Network, demand: DemandVector):
    return [i for i in range(len(network.od_pairs)) if demand.values[i] > 0]


def assemble_invvi(observations: ObservationSet, degree: int, kernel_offset: float,
                   ridge_weight: float) -> InverseVIAssembly:
    """Build the estimation QP for the given hyperparameters.

    Rows: per (observation, positive-demand OD, link) dual-feasibility rows;
    one suboptimality-gap row per observation; one ordered-pair row for every
    pair of pooled distinct observed flow-to-capacity ratios; the constant
    coefficient pinned to 1; slacks bounded below by zero.
    """
    if not (1 <= degree <= MAX_DEGREE):
        raise ValueError(f"degree must be between 1 and {MAX_DEGREE}")
    if kernel_offset <= 0:
        raise ValueError("kernel offset must be positive")
    if ridge_weight <= 0:
        raise ValueError("ridge weight must be positive")
    if observations.demands is None:
        raise ValueError("observations need demand vectors for the inverse problem")

    K = len(observations)
    nb = degree + 1

    dual_slices = {}
    cursor = nb
    for k, (net, dem) in enumerate(zip(observations.networks, observations.demands)):
        for od_idx in _positive_ods(net, dem):
            dual_slices[(k, od_idx)] = slice(cursor, cursor + net.n_nodes)
            cursor += net.n_nodes
    eps_slice = slice(cursor, cursor + K)
    n_vars = cursor + K

    rows = []
    cols = []
    vals = []
    upper = []
    row = 0

    powers = np.arange(nb)

    def add_entry(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    n_dual_rows = 0
    for k, (net, dem, fl) in enumerate(zip(observations.networks, observations.demands,
                                           observations.flows)):
        z = fl.values / net.capacities
        zp = z[:, None] ** powers[None, :]  # (links, degree+1)
        t0 = net.free_flow_times
        for od_idx in _positive_ods(net, dem):
            ysl = dual_slices[(k, od_idx)]
            for a, link in enumerate(net.links):
                # potential difference head - tail <= latency at observed flow
                add_entry(row, ysl.start + net.node_index(link.head), 1.0)
                add_entry(row, ysl.start + net.node_index(link.tail), -1.0)
                for i in range(nb):
                    add_entry(row, i, -t0[a] * zp[a, i])
                upper.append(0.0)
                row += 1
                n_dual_rows += 1

    n_gap_rows = 0
    for k, (net, dem, fl) in enumerate(zip(observations.networks, observations.demands,
                                           observations.flows)):
        z = fl.values / net.capacities
        zp = z[:, None] ** powers[None, :]
        coef_beta = (net.free_flow_times * fl.values) @ zp
        for i in range(nb):
            add_entry(row, i, coef_beta[i])
        for od_idx in _positive_ods(net, dem):
            origin, dest = net.od_pairs[od_idx]
            ysl = dual_slices[(k, od_idx)]
            d_w = float(dem.values[od_idx])
            add_entry(row, ysl.start + net.node_index(dest), -d_w)
            add_entry(row, ysl.start + net.node_index(origin), d_w)
        add_entry(row, eps_slice.start + k, -1.0)
        upper.append(0.0)
        row += 1
        n_gap_rows += 1

    pooled = np.concatenate([fl.values / net.capacities
                             for net, fl in zip(observations.networks, observations.flows)])
    pooled = np.sort(pooled)
    distinct = [float(pooled[0])] if pooled.size else []
    for v in pooled[1:]:
        if v - distinct[-1] > 1e-12:
            distinct.append(float(v))
    observed_ratios = np.asarray(distinct)

    n_mono_rows = 0
    for ia in range(len(distinct)):
        za = distinct[ia] ** powers
        for ib in range(ia + 1, len(distinct)):
            zb = distinct[ib] ** powers
            diff = za - zb  # f(z_a) - f(z_b) <= 0
            for i in range(nb):
                if diff[i] != 0.0:
                    add_entry(row, i, diff[i])
            upper.append(0.0)
            row += 1
            n_mono_rows += 1

    G = sp.coo_matrix((vals, (rows, cols)), shape=(row, n_vars)).tocsc()
    h = np.asarray(upper)

    E = sp.coo_matrix(([1.0], ([0], [0])), shape=(1, n_vars)).tocsc()
    e = np.array([1.0])

    lb = np.full(n_vars, -np.inf)
    lb[eps_slice] = 0.0

    q_diag = np.zeros(n_vars)
    for i in range(nb):
        q_diag[i] = 2.0 * ridge_weight / (math.comb(degree, i) * kernel_offset ** (degree - i))
    q_diag[eps_slice] = 2.0
    qp = QuadraticProgram(Q=sp.diags(q_diag, format="csc"), b=np.zeros(n_vars),
                          E=E, e=e, G=G, h=h, lb=lb, ub=None)
    return InverseVIAssembly(
        qp=qp,
        degree=degree,
        kernel_offset=float(kernel_offset),
        ridge_weight=float(ridge_weight),
        beta_slice=slice(0, nb),
        eps_slice=eps_slice,
        dual_slices=dual_slices,
        observed_ratios=observed_ratios,
        n_dual_rows=n_dual_rows,
        n_gap_rows=n_gap_rows,
        n_monotonicity_rows=n_mono_rows,
    )


@dataclass
class InverseVISolution:
    """Estimated coefficients plus solver byproducts."""

    beta: tuple[float, ...]
    duals: dict
    epsilons: np.ndarray
    degree: int
    kernel_offset: float
    ridge_weight: float
    objective: float        # slack norm plus weighted ridge
    epsilon_norm: float
    ridge_term: float
    qp_residuals: dict = field(default_factory=dict)
    cv_scores: list | None = None

    def to_json_dict(self) -> dict:
        return {
            "beta": list(self.beta),
            "n": self.degree,
            "c": self.kernel_offset,
            "gamma": self.ridge_weight,
            "epsilons": list(np.asarray(self.epsilons, dtype=float)),
            "cv_scores": self.cv_scores if self.cv_scores is not None else [],
        }


def estimate_cost(observations: ObservationSet, degree: int, kernel_offset: float,
                  ridge_weight: float, qp_tol: float = 1e-6,
                  qp_max_iter: int = 50000) -> tuple[InverseVISolution, LatencyFunction]:
    """Estimate the latency factor from observed flows at one hyperparameter point."""
    assembly = assemble_invvi(observations, degree, kernel_offset, ridge_weight)
    result = solve_qp(assembly.qp, tol=qp_tol, max_iter=qp_max_iter)

    beta = result.x[assembly.beta_slice].copy()
    beta[0] = 1.0  # pinned by the equality row; snap away solver roundoff
    epsilons = np.maximum(result.x[assembly.eps_slice], 0.0)
    duals = {key: result.x[sl].copy() for key, sl in assembly.dual_slices.items()}

    ridge = kernel_ridge(beta, degree, kernel_offset)
    eps_norm = float(np.linalg.norm(epsilons))
    solution = InverseVISolution(
        beta=tuple(float(b) for b in beta),
        duals=duals,
        epsilons=epsilons,
        degree=degree,
        kernel_offset=float(kernel_offset),
        ridge_weight=float(ridge_weight),
        objective=eps_norm + ridge_weight * ridge,
        epsilon_norm=eps_norm,
        ridge_term=ridge,
        qp_residuals=dict(result.residuals),
    )
    fhat = LatencyFunction(tuple(float(b) for b in beta), offset_c=float(kernel_offset))

    ratios = assembly.observed_ratios
    if ratios.size:
        vals = fhat.value(ratios)
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.any(np.diff(vals) < -1e-6 * scale):
            warnings.warn("estimated latency factor is not monotone at the observed ratios")
        if not fhat.is_nondecreasing_on(1.5 * float(ratios.max())):
            warnings.warn("estimated latency factor dips on the extended evaluation range")
    return solution, fhat


@dataclass
class CrossValidationResult:
    best_degree: int
    best_offset: float
    best_ridge: float
    records: list  # dicts with n, c, gamma, fold_scores, mean_score

    def scores_json(self) -> list:
        return [
            {
                "n": r["n"],
                "c": r["c"],
                "gamma": r["gamma"],
                "fold_scores": list(r["fold_scores"]),
                "mean_score": r["mean_score"],
            }
            for r in self.records
        ]


def cross_validate(observations: ObservationSet, degree_grid, offset_grid, ridge_grid,
                   folds: int = 3, qp_tol: float = 1e-6,
                   qp_max_iter: int = 50000) -> CrossValidationResult:
    """Grid search with rotation through index-based observation folds.

    A grid point's score is the mean over held-out observations of the
    equilibrium-approximation slack of the held-out flows under the trained
    factor, normalized by the held-out total latency. The least mean score
    wins; ties prefer the smaller degree, then the larger ridge weight, then
    the smaller offset.
    """
    if folds < 2:
        raise ValueError("folds must be at least 2")
    K = len(observations)
    if K < folds:
        raise InsufficientObservations(f"{K} observations cannot fill {folds} folds")
    if observations.demands is None:
        raise ValueError("observations need demand vectors for cross-validation")

    blocks = [list(b) for b in np.array_split(np.arange(K), folds)]
    records = []
    for degree, offset, ridge in product(degree_grid, offset_grid, ridge_grid):
        fold_scores = []
        for held in blocks:
            train_idx = [i for i in range(K) if i not in held]
            _, fhat = estimate_cost(observations.subset(train_idx), degree, offset, ridge,
                                    qp_tol=qp_tol, qp_max_iter=qp_max_iter)
            terms = []
            for i in held:
                net = observations.networks[i]
                fl = observations.flows[i]
                dm = observations.demands[i]
                lat = total_latency(net, fl, fhat)
                eps = wardrop_epsilon(net, fl, dm, fhat)
                terms.append(eps / lat if lat > 0 else 0.0)
            fold_scores.append(float(np.mean(terms)))
        records.append({
            "n": int(degree),
            "c": float(offset),
            "gamma": float(ridge),
            "fold_scores": fold_scores,
            "mean_score": float(np.mean(fold_scores)),
        })

    best = min(records, key=lambda r: (r["mean_score"], r["n"], -r["gamma"], r["c"]))
    return CrossValidationResult(best["n"], best["c"], best["gamma"], records)
