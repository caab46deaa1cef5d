"""Directed road-network model: links, OD pairs, routes, and assignment.

The network is immutable after construction. Link order is frozen at build
time and defines the indexing of every flow vector; OD-pair order defines the
indexing of every demand vector. All route operations break ties between
equal-cost paths by the lexicographically smallest link-id sequence, which
makes every output deterministic.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _sp_dijkstra

from .errors import InvalidLink, NotStronglyConnected

__all__ = [
    "Link",
    "Network",
    "DemandVector",
    "FlowVector",
    "Route",
    "RouteSet",
    "build_network",
    "fastest_route",
    "enumerate_routes",
    "enumerate_route_set",
    "link_route_incidence",
    "assign_all_or_nothing",
    "route_cost",
]


@dataclass(frozen=True)
class Link:
    """One directed road segment. ``id`` is the position in the link list."""

    id: int
    tail: object
    head: object
    free_flow_time: float
    capacity: float


@dataclass(frozen=True, eq=False)
class DemandVector:
    """Per-OD nonnegative demand, indexed like ``Network.od_pairs``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("demand must be a 1-d vector")
        if not np.all(np.isfinite(vals)):
            raise ValueError("demand entries must be finite")
        if np.any(vals < 0):
            raise ValueError("demand entries must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True, eq=False)
class FlowVector:
    """Per-link nonnegative flow, indexed like ``Network.links``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("flow must be a 1-d vector")
        if not np.all(np.isfinite(vals)):
            raise ValueError("flow entries must be finite")
        if np.any(vals < 0):
            raise ValueError("flow entries must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class Route:
    """A simple directed path, stored as the ordered link-id sequence."""

    od_index: int | None
    link_ids: tuple[int, ...]


class Network:
    """Immutable road network: nodes, ordered links, ordered OD pairs.

    Build instances through :func:`build_network`, which validates parameters
    and strong connectivity and precomputes the adjacency structures used by
    the shortest-path routines.
    """

    def __init__(self, links, od_pairs, zone_of=None):
        self.links: tuple[Link, ...] = tuple(links)
        self.od_pairs: tuple[tuple, ...] = tuple(tuple(p) for p in od_pairs)
        self.zone_of = dict(zone_of) if zone_of else None

        nodes = []
        seen = set()
        for link in self.links:
            for node in (link.tail, link.head):
                if node not in seen:
                    seen.add(node)
                    nodes.append(node)
        self.nodes: tuple = tuple(nodes)
        self._node_index = {node: i for i, node in enumerate(self.nodes)}

        n_links = len(self.links)
        self.free_flow_times = np.array([l.free_flow_time for l in self.links])
        self.capacities = np.array([l.capacity for l in self.links])
        self.free_flow_times.setflags(write=False)
        self.capacities.setflags(write=False)
        self._tails_idx = np.array([self._node_index[l.tail] for l in self.links], dtype=np.int64)
        self._heads_idx = np.array([self._node_index[l.head] for l in self.links], dtype=np.int64)

        out = [[] for _ in self.nodes]
        for link in self.links:
            out[self._node_index[link.tail]].append(link.id)
        self._out_links = tuple(tuple(sorted(ids)) for ids in out)

        # Links grouped by (tail, head) so parallel links can be collapsed to
        # the cheapest representative when building shortest-path matrices.
        order = np.lexsort((np.arange(n_links), self._heads_idx, self._tails_idx))
        boundaries = [0]
        for k in range(1, n_links):
            a, b = order[k - 1], order[k]
            if self._tails_idx[a] != self._tails_idx[b] or self._heads_idx[a] != self._heads_idx[b]:
                boundaries.append(k)
        boundaries.append(n_links)
        self._pair_order = order
        self._pair_ptr = np.array(boundaries, dtype=np.int64)
        first = order[self._pair_ptr[:-1]] if n_links else np.array([], dtype=np.int64)
        self._pair_tails = self._tails_idx[first]
        self._pair_heads = self._heads_idx[first]
        self._has_parallel = len(first) != n_links
        # CSR skeleton over the unique (tail, head) pairs; pairs are already in
        # canonical row-major order, so per-call weight data maps one to one.
        template = csr_matrix(
            (np.arange(len(first), dtype=float), (self._pair_tails, self._pair_heads)),
            shape=(len(self.nodes), len(self.nodes)),
        )
        if not np.array_equal(template.data, np.arange(len(first), dtype=float)):
            raise AssertionError("pair ordering does not match CSR canonical order")
        self._csr_indices = template.indices
        self._csr_indptr = template.indptr

        self._od_index = {}
        by_origin: dict[int, list] = {}
        for i, (o, d) in enumerate(self.od_pairs):
            if o not in self._node_index or d not in self._node_index:
                raise ValueError(f"OD pair ({o!r}, {d!r}) references a node outside the network")
            self._od_index.setdefault((o, d), i)
            by_origin.setdefault(self._node_index[o], []).append((i, self._node_index[d]))
        self._ods_by_origin = by_origin

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_index(self, node) -> int:
        return self._node_index[node]

    def out_links(self, node) -> tuple[int, ...]:
        return self._out_links[self._node_index[node]]

    def od_index(self, od_pair) -> int | None:
        return self._od_index.get(tuple(od_pair))

    def with_link_params(self, link_id: int, free_flow_time=None, capacity=None) -> "Network":
        """Copy of the network with one link's parameters replaced."""
        new_links = []
        for link in self.links:
            if link.id == link_id:
                link = Link(
                    link.id,
                    link.tail,
                    link.head,
                    link.free_flow_time if free_flow_time is None else float(free_flow_time),
                    link.capacity if capacity is None else float(capacity),
                )
            new_links.append(link)
        return build_network(new_links, self.od_pairs, self.zone_of)


def build_network(links, od_pairs, zone_map=None) -> Network:
    """Validate and freeze a network.

    ``links`` may be Link objects (ids must equal their positions) or
    ``(tail, head, free_flow_time, capacity)`` tuples. Raises
    :class:`InvalidLink` for nonpositive parameters or self-loops and
    :class:`NotStronglyConnected` if some node cannot reach some other node.
    """
    built = []
    for pos, entry in enumerate(links):
        if isinstance(entry, Link):
            if entry.id != pos:
                raise InvalidLink(f"link id {entry.id} does not match its position {pos}")
            link = entry
        else:
            tail, head, t0, cap = entry
            link = Link(pos, tail, head, float(t0), float(cap))
        if not (link.free_flow_time > 0):
            raise InvalidLink(f"link {pos}: free-flow time must be positive, got {link.free_flow_time}")
        if not (link.capacity > 0):
            raise InvalidLink(f"link {pos}: capacity must be positive, got {link.capacity}")
        if link.tail == link.head:
            raise InvalidLink(f"link {pos}: self-loop at node {link.tail!r}")
        built.append(link)
    if not built:
        raise InvalidLink("network needs at least one link")

    network = Network(built, od_pairs, zone_map)

    for o, d in network.od_pairs:
        if o == d:
            raise ValueError(f"degenerate OD pair with origin equal to destination: {o!r}")
    if len(set(network.od_pairs)) != len(network.od_pairs):
        raise ValueError("duplicate OD pairs are not allowed")

    _check_strong_connectivity(network)
    return network


def _check_strong_connectivity(network: Network) -> None:
    n = network.n_nodes
    fwd = [[] for _ in range(n)]
    bwd = [[] for _ in range(n)]
    for link in network.links:
        u = network._node_index[link.tail]
        v = network._node_index[link.head]
        fwd[u].append(v)
        bwd[v].append(u)

    def reach(adj):
        seen = [False] * n
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        return seen

    fwd_seen = reach(fwd)
    for i, ok in enumerate(fwd_seen):
        if not ok:
            raise NotStronglyConnected(network.nodes[0], network.nodes[i])
    bwd_seen = reach(bwd)
    for i, ok in enumerate(bwd_seen):
        if not ok:
            raise NotStronglyConnected(network.nodes[i], network.nodes[0])


def _check_weights(network: Network, link_weights) -> np.ndarray:
    w = np.asarray(link_weights, dtype=float)
    if w.shape != (network.n_links,):
        raise ValueError(f"expected one weight per link ({network.n_links}), got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("link weights must be strictly positive and finite")
    return w


def _lex_shortest(network: Network, weights, origin_idx, targets=None,
                  banned_nodes=frozenset(), banned_links=frozenset()):
    """Single-source Dijkstra keyed by (cost, link-id sequence).

    With strictly positive weights the lexicographically smallest minimum-cost
    path to a node extends the lexicographically smallest minimum-cost path to
    its predecessor, so settling nodes in heap order is exact. Returns a dict
    node_idx -> (cost, link_ids tuple) for every settled node.
    """
    settled: dict[int, tuple[float, tuple[int, ...]]] = {}
    best: dict[int, tuple[float, tuple[int, ...]]] = {origin_idx: (0.0, ())}
    remaining = set(targets) if targets is not None else None
    heap = [(0.0, (), origin_idx)]
    out_links = network._out_links
    heads = network._heads_idx
    while heap:
        cost, seq, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled[u] = (cost, seq)
        if remaining is not None:
            remaining.discard(u)
            if not remaining:
                break
        for lid in out_links[u]:
            if lid in banned_links:
                continue
            v = int(heads[lid])
            if v in settled or v in banned_nodes:
                continue
            cand = (cost + weights[lid], seq + (lid,))
            known = best.get(v)
            if known is None or cand < known:
                best[v] = cand
                heapq.heappush(heap, (cand[0], cand[1], v))
    return settled


def fastest_route(network: Network, link_weights, od) -> Route:
    """Minimum-weight simple route for one OD pair.

    ``od`` is either an index into ``network.od_pairs`` or an
    ``(origin, destination)`` pair. Ties between equal-weight paths resolve to
    the lexicographically smallest link-id sequence.
    """
    weights = _check_weights(network, link_weights)
    if isinstance(od, (int, np.integer)):
        od_idx = int(od)
        origin, dest = network.od_pairs[od_idx]
    else:
        origin, dest = od
        od_idx = network.od_index((origin, dest))
    o = network.node_index(origin)
    d = network.node_index(dest)
    settled = _lex_shortest(network, weights, o, targets={d})
    cost_seq = settled.get(d)
    if cost_seq is None:
        raise NotStronglyConnected(origin, dest)
    return Route(od_idx, cost_seq[1])


def route_cost(network: Network, route: Route, link_weights) -> float:
    """Total weight of a route under the given link weights."""
    w = np.asarray(link_weights, dtype=float)
    return float(sum(w[l] for l in route.link_ids))


def enumerate_routes(network: Network, od, k_max: int = 3, length_ratio: float = 1.5,
                     link_weights=None) -> tuple[Route, ...]:
    """Up to ``k_max`` cheapest simple routes for one OD pair.

    Routes whose weight exceeds ``length_ratio`` times the cheapest route's
    weight are discarded. Default weights are the free-flow times. Output is
    sorted ascending by (weight, link-id sequence).
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if length_ratio < 1:
        raise ValueError("length_ratio must be at least 1")
    if link_weights is None:
        link_weights = network.free_flow_times
    weights = _check_weights(network, link_weights)
    if isinstance(od, (int, np.integer)):
        od_idx = int(od)
        origin, dest = network.od_pairs[od_idx]
    else:
        origin, dest = od
        od_idx = network.od_index((origin, dest))
    o = network.node_index(origin)
    d = network.node_index(dest)

    first = _lex_shortest(network, weights, o, targets={d}).get(d)
    if first is None:
        raise NotStronglyConnected(origin, dest)
    cutoff = length_ratio * first[0]

    accepted: list[tuple[float, tuple[int, ...]]] = [first]
    candidates: list[tuple[float, tuple[int, ...]]] = []
    seen = {first[1]}
    heads = network._heads_idx

    while len(accepted) < k_max:
        prev_cost, prev_seq = accepted[-1]
        # Spur from every position of the most recently accepted route.
        node_path = [o]
        for lid in prev_seq:
            node_path.append(int(heads[lid]))
        prefix_cost = 0.0
        for i in range(len(prev_seq)):
            spur_node = node_path[i]
            root = prev_seq[:i]
            banned_links = {
                seq[i] for _, seq in accepted if len(seq) > i and seq[:i] == root
            }
            banned_nodes = set(node_path[:i])
            res = _lex_shortest(network, weights, spur_node, targets={d},
                                banned_nodes=frozenset(banned_nodes),
                                banned_links=frozenset(banned_links))
            spur = res.get(d)
            if spur is not None:
                total_seq = root + spur[1]
                if total_seq not in seen:
                    seen.add(total_seq)
                    heapq.heappush(candidates, (prefix_cost + spur[0], total_seq))
            prefix_cost += weights[prev_seq[i]]
        if not candidates:
            break
        nxt = heapq.heappop(candidates)
        if nxt[0] > cutoff:
            break
        accepted.append(nxt)

    kept = [(c, s) for c, s in accepted if not (c > cutoff)]
    kept.sort()
    return tuple(Route(od_idx, seq) for _, seq in kept)


@dataclass(frozen=True, eq=False)
class RouteSet:
    """Per-OD route lists plus the route-by-link 0/1 incidence matrix."""

    routes_by_od: tuple[tuple[Route, ...], ...]
    incidence: np.ndarray  # rows = routes (OD-major order), columns = links

    @property
    def routes(self) -> tuple[Route, ...]:
        return tuple(r for group in self.routes_by_od for r in group)

    def counts(self) -> tuple[int, ...]:
        return tuple(len(group) for group in self.routes_by_od)


def enumerate_route_set(network: Network, k_max: int = 3, length_ratio: float = 1.5,
                        link_weights=None) -> RouteSet:
    """Enumerate routes for every OD pair of the network into one RouteSet."""
    groups = []
    for i in range(len(network.od_pairs)):
        groups.append(enumerate_routes(network, i, k_max, length_ratio, link_weights))
    flat = [r for g in groups for r in g]
    incidence = np.zeros((len(flat), network.n_links))
    for row, r in enumerate(flat):
        incidence[row, list(r.link_ids)] = 1.0
    incidence.setflags(write=False)
    return RouteSet(tuple(groups), incidence)


def link_route_incidence(route_set: RouteSet) -> np.ndarray:
    """0/1 matrix with one row per link and one column per route."""
    if route_set.incidence.shape[0] == 0:
        raise ValueError("route set is empty")
    return route_set.incidence.T.copy()


def _min_weight_pairs(network: Network, weights):
    """Per (tail, head) pair: the minimum weight and smallest link id at it."""
    order = network._pair_order
    ptr = network._pair_ptr
    if not network._has_parallel:
        return network._pair_tails, network._pair_heads, weights[order], order
    wmin = np.empty(len(ptr) - 1)
    rep = np.empty(len(ptr) - 1, dtype=np.int64)
    for g in range(len(ptr) - 1):
        ids = order[ptr[g]:ptr[g + 1]]
        wg = weights[ids]
        k = int(np.argmin(wg))  # first minimum; ids ascend, so ties pick the smallest id
        wmin[g] = wg[k]
        rep[g] = ids[k]
    return network._pair_tails, network._pair_heads, wmin, rep


def assign_all_or_nothing(network: Network, demand: DemandVector, link_weights,
                          return_routes: bool = False):
    """Load each OD pair's whole demand onto its fastest route.

    Runs one shortest-path tree per distinct origin. Equal-cost ties resolve
    deterministically (parallel links collapse to the smallest link id; node
    paths follow the predecessor order of the underlying shortest-path tree).
    Zero-demand OD pairs are skipped. Returns a FlowVector, or
    ``(FlowVector, routes)`` with ``routes`` mapping OD index to the link-id
    tuple when ``return_routes`` is set.
    """
    weights = _check_weights(network, link_weights)
    dem = demand.values if isinstance(demand, DemandVector) else np.asarray(demand, dtype=float)
    if dem.shape != (len(network.od_pairs),):
        raise ValueError("demand length does not match the network's OD pairs")

    flows = np.zeros(network.n_links)
    routes: dict[int, tuple[int, ...]] = {}

    origins = sorted(network._ods_by_origin)
    active = [o for o in origins
              if any(dem[i] > 0 for i, _ in network._ods_by_origin[o])]
    if not active:
        result = FlowVector(flows)
        return (result, routes) if return_routes else result

    tails, heads, wmin, rep = _min_weight_pairs(network, weights)
    n = network.n_nodes
    graph = csr_matrix((wmin, network._csr_indices, network._csr_indptr), shape=(n, n))
    _, preds = _sp_dijkstra(graph, directed=True, indices=active, return_predecessors=True)
    link_of = {(int(t), int(h)): int(r) for t, h, r in zip(tails, heads, rep)}

    for row, o in enumerate(active):
        pred = preds[row]
        for od_idx, dest in network._ods_by_origin[o]:
            if dem[od_idx] <= 0:
                continue
            path_links = []
            v = dest
            while v != o:
                u = int(pred[v])
                if u < 0:
                    raise NotStronglyConnected(network.nodes[o], network.nodes[dest])
                path_links.append(link_of[(u, v)])
                v = u
            path_links.reverse()
            flows[path_links] += dem[od_idx]
            if return_routes:
                routes[od_idx] = tuple(path_links)

    result = FlowVector(flows)
    return (result, routes) if return_routes else result
