"""Online placement strategies.

Two strategies share the client-association step:

* ``hfel``: every aggregator (an edge node that received clients) sends its
  aggregated model straight to the cloud.
* ``hfel_mesh``: aggregators are first wired into an overlay forest built on
  the auxiliary graph; models hop aggregator-to-aggregator before a small
  number of consolidated flows reach the cloud.

Both produce a PlacementDecision whose claims are applied atomically by the
engine; a round that cannot fit every claim fails and consumes nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .network import ClaimSet, NetworkState
from .topology import (
    PhysicalGraph,
    PhysicalRoute,
    build_auxiliary_graph,
    link_key,
    shortest_physical_route,
    shortest_physical_routes,
)
from .workload import TrainingRoundRequest, request_link_load

STRATEGIES = ("hfel", "hfel_mesh")

INF = math.inf


@dataclass
class CostParams:
    """Knobs of the overlay construction cost model.

    V is the overlay iteration budget (the aggregator count) and v the
    current iteration; the overlay builder rewrites both as it runs.
    """

    xi: int = 4  # larger xi makes direct cloud reporting cheaper
    V: int = 1
    v: int = 1
    # Calibration between the utilization-based aggregator-pair costs and the
    # dimensionless cloud-report cost; pair costs are multiplied by this in
    # the overlay builder so the two scales are comparable.
    pair_scale: float = 60.0

    def __post_init__(self):
        if self.xi < 1:
            raise ValueError("xi must be >= 1")
        if not (1 <= self.v <= self.V):
            raise ValueError("iteration index must satisfy 1 <= v <= V")


def cloud_report_cost(p: CostParams) -> float:
    """Capacity cost of reporting to the cloud at overlay iteration p.v."""
    return p.V / (p.xi * p.v)


@dataclass
class OverlayEdge:
    src: int
    target: int  # another aggregator or a cloud node
    route: PhysicalRoute


@dataclass
class OverlayTopology:
    edges: list[OverlayEdge] = field(default_factory=list)

    def parent(self, node: int) -> int | None:
        for e in self.edges:
            if e.src == node:
                return e.target
        return None


@dataclass
class PlacementDecision:
    request_id: int
    strategy: str
    status: str  # "placed" | "failed"
    reason: str = ""
    assignment: dict[int, int] = field(default_factory=dict)  # client -> aggregator edge
    aggregators: tuple[int, ...] = ()
    overlay: OverlayTopology = field(default_factory=OverlayTopology)
    claims: ClaimSet | None = None

    @property
    def placed(self) -> bool:
        return self.status == "placed"


# -- client association -------------------------------------------------------


def _pressure(residual: float, demand: float) -> float:
    """Congestion price of adding ``demand`` on a component.

    Grows without bound as the component fills; infinite when it cannot fit.
    """
    if residual < demand - 1e-9:
        return INF
    return demand / residual


def _client_path(g: PhysicalGraph, client: int, edge: int) -> tuple[tuple[int, int], ...] | None:
    """Physical links of a client's update flow when assigned to ``edge``."""
    attached = g.attached_edge(client)
    end = (link_key(client, attached),)
    if edge == attached:
        return end
    core = g.core_path(attached, edge)
    if core is None:
        return None
    return end + tuple(link_key(u, v) for u, v in zip(core, core[1:]))


class _AssociationCost:
    """Cost bookkeeping for the association local search.

    Link pressure counts both pre-existing usage and the flows of the other
    clients in the current assignment, so crowding a popular edge gets
    progressively more expensive and transfers/exchanges can strictly
    improve.  Node pressure likewise counts sibling clients at the same
    aggregation point.
    """

    def __init__(self, g: PhysicalGraph, state: NetworkState, r: TrainingRoundRequest):
        self.g = g
        self.state = state
        self.r = r
        self.sig_e = request_link_load(r)
        self.sig_n = float(r.node_demand)
        self.paths: dict[tuple[int, int], tuple[tuple[int, int], ...] | None] = {}
        self.flow_count: dict[tuple[int, int], int] = {}  # link -> sibling flows
        self.member_count: dict[int, int] = {}  # edge -> assigned clients
        # the network state is frozen for the duration of the local search, so
        # residuals and per-link weights can be snapshotted into plain dicts
        self.link_res = {k: state.link_residual(k) for k in g.links}
        self.node_res = {e: state.node_residual(e) for e in g.edges}
        self._betas: dict[tuple[int, int], tuple[tuple[tuple[int, int], float], ...] | None] = {}

    def path(self, client: int, edge: int):
        key = (client, edge)
        if key not in self.paths:
            self.paths[key] = _client_path(self.g, client, edge)
        return self.paths[key]

    def _path_betas(self, client: int, edge: int):
        key = (client, edge)
        if key not in self._betas:
            path = self.path(client, edge)
            self._betas[key] = (
                None if path is None else tuple((lk, self.g.beta(lk)) for lk in path)
            )
        return self._betas[key]

    def add(self, client: int, edge: int) -> None:
        for lk in self.path(client, edge) or ():
            self.flow_count[lk] = self.flow_count.get(lk, 0) + 1
        self.member_count[edge] = self.member_count.get(edge, 0) + 1

    def remove(self, client: int, edge: int) -> None:
        for lk in self.path(client, edge) or ():
            self.flow_count[lk] -= 1
        self.member_count[edge] -= 1

    def client_cost(self, client: int, edge: int) -> float:
        """Cost of assigning ``client`` to ``edge`` given the other members."""
        betas = self._path_betas(client, edge)
        if betas is None:
            return INF
        sig_e = self.sig_e
        link_res = self.link_res
        flows = self.flow_count
        total = 0.0
        for lk, beta in betas:
            residual = link_res[lk] - flows.get(lk, 0) * sig_e
            if residual < sig_e - 1e-9:
                return INF
            total += beta * (sig_e / residual)
        node_residual = self.node_res[edge] - self.member_count.get(edge, 0) * self.sig_n
        if node_residual < self.sig_n - 1e-9:
            return INF
        return total + self.g.alpha(edge) * (self.sig_n / node_residual)


def hfel_edge_association(
    g: PhysicalGraph, r: TrainingRoundRequest, state: NetworkState
) -> dict[int, int | None]:
    """Assign each participating client to an edge aggregation point.

    Starts from nearest-edge assignment and applies device-transfer and
    device-exchange moves over edge-node pairs until no move strictly lowers
    the cost.  A client whose end link cannot carry its flow maps to None.
    """
    cost = _AssociationCost(g, state, r)
    assignment: dict[int, int | None] = {}
    for c in r.clients:
        home = g.attached_edge(c)
        end = link_key(c, home)
        if state.link_residual(end) < cost.sig_e - 1e-9:
            assignment[c] = None
            continue
        assignment[c] = home
        cost.add(c, home)

    placeable = [c for c in r.clients if assignment[c] is not None]
    if not placeable:
        return assignment

    edges = g.edges
    improved = True
    sweeps = 0
    while improved and sweeps < 20:
        improved = False
        sweeps += 1
        for v1 in edges:
            members = [c for c in placeable if assignment[c] == v1]
            if not members:
                continue
            for v2 in edges:
                if v2 == v1:
                    continue
                # device transfer: move one client v1 -> v2; evaluate both
                # options with the client taken out so the comparison is fair
                for c in list(members):
                    cost.remove(c, v1)
                    stay = cost.client_cost(c, v1)
                    move = cost.client_cost(c, v2)
                    if move < stay - 1e-12:
                        cost.add(c, v2)
                        assignment[c] = v2
                        members.remove(c)
                        improved = True
                    else:
                        cost.add(c, v1)
                # device exchange: swap one client each way
                others = [c for c in placeable if assignment[c] == v2]
                for c1 in list(members):
                    for c2 in others:
                        cost.remove(c1, v1)
                        cost.remove(c2, v2)
                        before = cost.client_cost(c1, v1) + cost.client_cost(c2, v2)
                        after = cost.client_cost(c1, v2) + cost.client_cost(c2, v1)
                        if after < before - 1e-12:
                            cost.add(c1, v2)
                            cost.add(c2, v1)
                            assignment[c1] = v2
                            assignment[c2] = v1
                            members.remove(c1)
                            members.append(c2)
                            others.remove(c2)
                            others.append(c1)
                            improved = True
                            break
                        cost.add(c1, v1)
                        cost.add(c2, v2)
    return assignment


# -- auxiliary-graph edge costs ------------------------------------------------


def aggregator_edge_cost(
    g: PhysicalGraph,
    state: NetworkState,
    a_src: int,
    a_tgt: int,
    demand: float,
    node_demand: float = 0.0,
    extra_link_load: dict[tuple[int, int], float] | None = None,
) -> float:
    """Utilization-aware cost of one auxiliary link, +inf when infeasible.

    Sums congestion prices along the min-hop feasible physical route and adds
    the target node's price for hosting the aggregation.
    """
    used = state.link_usage_snapshot()
    for lk, extra in (extra_link_load or {}).items():
        used[lk] = used.get(lk, 0.0) + extra
    route = shortest_physical_route(g, a_src, a_tgt, demand=demand, used=used)
    if route is None:
        return INF
    total = 0.0
    for lk in route.links:
        residual = g.links[lk].capacity - used[lk] if lk in used else g.links[lk].capacity
        total += g.beta(lk) * _pressure(residual, demand)
    if node_demand > 0:
        c = g.alpha(a_tgt) * _pressure(state.node_residual(a_tgt), node_demand)
        if c == INF:
            return INF
        total += c
    return total


# -- overlay construction --------------------------------------------------------


def hfel_mesh_overlay(
    g: PhysicalGraph,
    state: NetworkState,
    aggregators: set[int],
    r: TrainingRoundRequest,
    p: CostParams,
    extra_link_load: dict[tuple[int, int], float] | None = None,
) -> OverlayTopology | str:
    """Greedy overlay forest over the auxiliary graph.

    Repeatedly commits the globally cheapest auxiliary edge whose source is
    still unconnected, rejecting edges that would close a cycle.  Cloud
    edges are priced by cloud_report_cost, which decays as the iteration
    index grows, so late aggregators increasingly prefer the cloud.  Returns
    a failure-reason string when some aggregator has no feasible outlet.
    """
    aux = build_auxiliary_graph(g, aggregators)
    clouds = set(g.clouds)
    sig_e = request_link_load(r)
    load = dict(extra_link_load or {})
    total = len(aggregators)

    # pair costs against the placement-time snapshot (plus client flows);
    # one all-destinations route search per source instead of one per pair
    used0 = _merge_load(state, load)
    pair_cost: dict[tuple[int, int], float] = {}
    for a in aux.nodes:
        if a in clouds:
            continue
        routes = shortest_physical_routes(g, a, demand=sig_e, used=used0)
        for b in aux.nodes:
            if b == a or b in clouds:
                continue
            route = routes.get(b)
            if route is None:
                pair_cost[(a, b)] = INF
                continue
            total_w = 0.0
            for lk in route.links:
                residual = g.links[lk].capacity - used0.get(lk, 0.0)
                total_w += g.beta(lk) * _pressure(residual, sig_e)
            pair_cost[(a, b)] = p.pair_scale * total_w

    def root_of(parent: dict[int, int], node: int) -> int:
        while node in parent:
            node = parent[node]
        return node

    parent: dict[int, int] = {}
    indeg: dict[int, int] = {}
    overlay = OverlayTopology()
    unconnected = sorted(aggregators)
    v = 1
    while unconnected:
        psi = cloud_report_cost(CostParams(xi=p.xi, V=max(total, v), v=v))
        banned: set[tuple[int, int]] = set()  # edges whose route turned out infeasible
        while True:
            best: tuple[float, int, int, int] | None = None
            for a in unconnected:
                for b in aux.nodes:
                    if b == a or (a, b) in banned:
                        continue
                    if b in clouds:
                        w = psi
                    else:
                        # committed sources leave the auxiliary graph entirely
                        if b in parent:
                            continue
                        w = pair_cost[(a, b)]
                        # a cycle would orphan the whole chain from the cloud
                        if w == INF or root_of(parent, b) == a:
                            continue
                    # on ties, consolidate onto existing aggregation hubs
                    cand = (w, -indeg.get(b, 0), a, b)
                    if best is None or cand < best:
                        best = cand
            if best is None:
                return f"aggregator {unconnected[0]}: no feasible overlay edge"
            w, _, a, b = best
            route = shortest_physical_route(
                g, a, b, demand=sig_e, used=_merge_load(state, load)
            )
            if route is None:
                banned.add((a, b))
                continue
            break
        parent[a] = b
        if b not in clouds:
            indeg[b] = indeg.get(b, 0) + 1
        overlay.edges.append(OverlayEdge(src=a, target=b, route=route))
        for lk in route.links:
            load[lk] = load.get(lk, 0.0) + sig_e
        unconnected.remove(a)
        v += 1
    return overlay


def _merge_load(state: NetworkState, extra: dict[tuple[int, int], float]):
    used = state.link_usage_snapshot()
    for lk, x in extra.items():
        used[lk] = used.get(lk, 0.0) + x
    return used


# -- placement ---------------------------------------------------------------------


def place_request(
    g: PhysicalGraph,
    r: TrainingRoundRequest,
    state: NetworkState,
    strategy: str,
    p: CostParams,
) -> PlacementDecision:
    """Run one strategy end to end and compute the round's resource claims.

    Claims: sigma_n at every aggregation point (edge aggregators and the
    cloud) and sigma_e per model-update flow on every traversed physical
    link.  Atomic: a failed decision carries no claims.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    sig_e = request_link_load(r)
    sig_n = float(r.node_demand)

    assignment = hfel_edge_association(g, r, state)
    dead = sorted(c for c, v in assignment.items() if v is None)
    if dead:
        return PlacementDecision(
            r.id, strategy, "failed", reason=f"client {dead[0]}: end link saturated"
        )
    assignment = {c: v for c, v in assignment.items() if v is not None}
    aggregators = sorted(set(assignment.values()))

    claims = ClaimSet(request_id=r.id)
    # client update flows
    for c in sorted(assignment):
        for lk in _client_path(g, c, assignment[c]) or ():
            claims.add_link(lk, sig_e)
    # aggregation compute at the edges
    for a in aggregators:
        claims.add_node(a, sig_n)

    # overlay
    if strategy == "hfel":
        overlay = OverlayTopology()
        for a in aggregators:
            route = shortest_physical_route(
                g, a, _nearest_cloud(g, a), demand=sig_e,
                used=_stacked_usage(state, claims),
            )
            if route is None:
                return PlacementDecision(
                    r.id, strategy, "failed",
                    reason=f"aggregator {a}: no feasible route to cloud",
                    assignment=assignment, aggregators=tuple(aggregators),
                )
            overlay.edges.append(OverlayEdge(src=a, target=route.destination, route=route))
            for lk in route.links:
                claims.add_link(lk, sig_e)
    else:
        result = hfel_mesh_overlay(
            g, state, set(aggregators), r, p,
            extra_link_load=dict(claims.link_mbps),
        )
        if isinstance(result, str):
            return PlacementDecision(
                r.id, strategy, "failed", reason=result,
                assignment=assignment, aggregators=tuple(aggregators),
            )
        overlay = result
        for e in overlay.edges:
            for lk in e.route.links:
                claims.add_link(lk, sig_e)

    # cloud aggregation compute
    for cloud in sorted({e.target for e in overlay.edges if g.nodes[e.target].kind == "cloud"}):
        claims.add_node(cloud, sig_n)

    # final atomic feasibility check
    for nid, units in sorted(claims.node_units.items()):
        if not state.node_fits(nid, units):
            return PlacementDecision(
                r.id, strategy, "failed", reason=f"node {nid}: insufficient capacity",
                assignment=assignment, aggregators=tuple(aggregators), overlay=overlay,
            )
    for lk, mbps in sorted(claims.link_mbps.items()):
        if not state.link_fits(lk, mbps):
            return PlacementDecision(
                r.id, strategy, "failed", reason=f"link {lk}: insufficient capacity",
                assignment=assignment, aggregators=tuple(aggregators), overlay=overlay,
            )

    return PlacementDecision(
        r.id,
        strategy,
        "placed",
        assignment=assignment,
        aggregators=tuple(aggregators),
        overlay=overlay,
        claims=claims,
    )


def _nearest_cloud(g: PhysicalGraph, node: int) -> int:
    best = None
    for cloud in g.clouds:
        path = g.core_path(node, cloud)
        if path is None:
            continue
        key = (len(path), cloud)
        if best is None or key < best:
            best = key
    if best is None:
        return g.clouds[0]
    return best[1]


def _stacked_usage(state: NetworkState, claims: ClaimSet):
    used = state.link_usage_snapshot()
    for lk, mbps in claims.link_mbps.items():
        used[lk] = used.get(lk, 0.0) + mbps
    return used
