"""Physical edge/cloud network graph and the derived aggregator graph.

The physical graph is the capacitated substrate: client devices hang off
edge nodes via end links, edge nodes form a mesh of edge links, and one or
more cloud nodes attach through cloud links.  The auxiliary graph is the
fully connected directed graph over aggregator candidates plus the cloud,
used by the placement algorithms to pick aggregation points; its links may
bypass physical nodes and are realized as physical routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CLIENT = "client"
EDGE = "edge"
CLOUD = "cloud"

LINK_END = "end"
LINK_EDGE = "edge"
LINK_CLOUD = "cloud"

NODE_KINDS = (CLIENT, EDGE, CLOUD)
LINK_KINDS = (LINK_END, LINK_EDGE, LINK_CLOUD)

# Weighted-capacity cost coefficients per component kind.  The cloud link
# weight is deliberately much higher than the edge link weight so that the
# optimizers steer traffic away from the cloud bottleneck.
DEFAULT_NODE_WEIGHTS = {CLIENT: 1.0, EDGE: 1.0, CLOUD: 1.0}
DEFAULT_LINK_WEIGHTS = {LINK_END: 1.0, LINK_EDGE: 1.0, LINK_CLOUD: 10.0}


class TopologyError(ValueError):
    """Raised when a topology document or graph violates an invariant."""


def link_key(a: int, b: int) -> tuple[int, int]:
    """Normalized dictionary key of a bidirectional link."""
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class PhysicalNode:
    id: int
    kind: str
    capacity: float


@dataclass(frozen=True)
class PhysicalLink:
    a: int
    b: int
    kind: str
    capacity: float  # Mbps, one shared pool for both directions

    @property
    def key(self) -> tuple[int, int]:
        return link_key(self.a, self.b)


@dataclass(frozen=True)
class PhysicalRoute:
    """A contiguous loop-free sequence of physical links."""

    nodes: tuple[int, ...]

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def destination(self) -> int:
        return self.nodes[-1]

    @property
    def links(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            link_key(u, v) for u, v in zip(self.nodes, self.nodes[1:])
        )

    def __len__(self) -> int:
        return len(self.nodes) - 1


class PhysicalGraph:
    """Immutable capacitated network graph.

    Used capacity is tracked outside the graph (see ``NetworkState``); all
    routing queries take an optional usage snapshot, so the graph itself is
    safe to share between threads.
    """

    def __init__(
        self,
        nodes: list[PhysicalNode],
        links: list[PhysicalLink],
        node_weights: dict[str, float] | None = None,
        link_weights: dict[str, float] | None = None,
    ):
        self.nodes: dict[int, PhysicalNode] = {n.id: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise TopologyError("duplicate node id")
        self.links: dict[tuple[int, int], PhysicalLink] = {}
        self.adj: dict[int, list[int]] = {n.id: [] for n in nodes}
        for lk in links:
            if lk.key in self.links:
                raise TopologyError(f"duplicate link {lk.key}")
            if lk.a not in self.nodes or lk.b not in self.nodes:
                raise TopologyError(f"link {lk.key} references unknown node")
            self.links[lk.key] = lk
            self.adj[lk.a].append(lk.b)
            self.adj[lk.b].append(lk.a)
        for nid in self.adj:
            self.adj[nid].sort()
        self.node_weights = dict(node_weights or DEFAULT_NODE_WEIGHTS)
        self.link_weights = dict(link_weights or DEFAULT_LINK_WEIGHTS)
        self._core_path_cache: dict[tuple[int, int], tuple[int, ...] | None] = {}
        self.validate()

    # -- taxonomy ----------------------------------------------------------

    def nodes_of_kind(self, kind: str) -> list[int]:
        return sorted(n.id for n in self.nodes.values() if n.kind == kind)

    @property
    def clients(self) -> list[int]:
        return self.nodes_of_kind(CLIENT)

    @property
    def edges(self) -> list[int]:
        return self.nodes_of_kind(EDGE)

    @property
    def clouds(self) -> list[int]:
        return self.nodes_of_kind(CLOUD)

    def links_of_kind(self, kind: str) -> list[tuple[int, int]]:
        return sorted(k for k, lk in self.links.items() if lk.kind == kind)

    def attached_edge(self, client: int) -> int:
        """The edge node a client reaches through its single end link."""
        node = self.nodes[client]
        if node.kind != CLIENT:
            raise TopologyError(f"node {client} is not a client")
        return self.adj[client][0]

    def alpha(self, node_id: int) -> float:
        return self.node_weights[self.nodes[node_id].kind]

    def beta(self, key: tuple[int, int]) -> float:
        return self.link_weights[self.links[key].kind]

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if not self.clouds:
            raise TopologyError("no cloud node")
        for node in self.nodes.values():
            if node.kind not in NODE_KINDS:
                raise TopologyError(f"node {node.id}: unknown kind {node.kind!r}")
            if node.capacity < 0:
                raise TopologyError(f"node {node.id}: negative capacity")
        for lk in self.links.values():
            if lk.kind not in LINK_KINDS:
                raise TopologyError(f"link {lk.key}: unknown kind {lk.kind!r}")
            if lk.capacity < 0:
                raise TopologyError(f"link {lk.key}: negative capacity")
            kinds = {self.nodes[lk.a].kind, self.nodes[lk.b].kind}
            if CLIENT in kinds:
                if lk.kind != LINK_END or kinds != {CLIENT, EDGE}:
                    raise TopologyError(
                        f"link {lk.key}: client links must be end links to an edge node"
                    )
            elif CLOUD in kinds:
                if lk.kind != LINK_CLOUD:
                    raise TopologyError(f"link {lk.key}: cloud endpoint requires cloud kind")
            else:
                if lk.kind != LINK_EDGE:
                    raise TopologyError(f"link {lk.key}: edge-edge link must have edge kind")
        for cid in self.clients:
            degree = len(self.adj[cid])
            if degree != 1:
                raise TopologyError(
                    f"client {cid}: client multi-homing (has {degree} links, expected 1)"
                )
        # connectivity
        if self.nodes:
            start = next(iter(self.adj))
            seen = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for v in self.adj[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            if len(seen) != len(self.nodes):
                missing = sorted(set(self.nodes) - seen)
                raise TopologyError(f"disconnected graph (unreachable nodes {missing})")

    # -- static core routing cache -----------------------------------------

    def core_path(self, src: int, dst: int) -> tuple[int, ...] | None:
        """Min-hop path between two non-client nodes, ignoring load.

        Cached; used as the default realization of aggregator-to-aggregator
        traffic when no capacity pressure forces a detour.
        """
        key = (src, dst)
        if key not in self._core_path_cache:
            route = shortest_physical_route(self, src, dst, demand=0.0)
            self._core_path_cache[key] = route.nodes if route else None
        return self._core_path_cache[key]

    # -- serialization -----------------------------------------------------

    def to_document(self) -> str:
        lines = ["# flmesh topology"]
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            lines.append(f"node {n.id} {n.kind} {_fmt_num(n.capacity)}")
        for key in sorted(self.links):
            lk = self.links[key]
            lines.append(f"link {lk.a} {lk.b} {lk.kind} {_fmt_num(lk.capacity)}")
        return "\n".join(lines) + "\n"


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def load_topology(document: str) -> PhysicalGraph:
    """Parse the line-oriented topology format.

    Records: ``node <id> <client|edge|cloud> <capacity>`` and
    ``link <a> <b> <end|edge|cloud> <capacity_mbps>``.  ``#`` starts a
    comment; blank lines are ignored.
    """
    nodes: list[PhysicalNode] = []
    links: list[PhysicalLink] = []
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "node" and len(parts) == 4:
                nodes.append(PhysicalNode(int(parts[1]), parts[2], float(parts[3])))
            elif parts[0] == "link" and len(parts) == 5:
                links.append(
                    PhysicalLink(int(parts[1]), int(parts[2]), parts[3], float(parts[4]))
                )
            else:
                raise ValueError("unrecognized record")
        except ValueError as exc:
            raise TopologyError(f"line {lineno}: {exc} ({raw.strip()!r})") from None
    return PhysicalGraph(nodes, links)


# -- builtin topologies ------------------------------------------------------

# Capacity profile shared by both builtin topologies.
CLIENT_CAPACITY = 1.0
EDGE_NODE_CAPACITY = 200.0
CLOUD_NODE_CAPACITY = 4000.0
END_LINK_CAPACITY = 200.0
EDGE_LINK_CAPACITY = 2000.0
CLOUD_LINK_CAPACITY = 4000.0

# Edge meshes: the source material gives node counts but not the edge-to-edge
# link structure, so the builtins use a deterministic ring plus a few chords,
# with a small set of gateway edges holding the cloud links.
_BUILTINS = {
    "medium": {"n_edges": 11, "clients_per_edge": 20, "chords": [(0, 5), (3, 8)], "gateways": [0, 6]},
    # the large ring is deliberately chordless with a single gateway: cloud
    # reporting then funnels through one region, which is the regime where
    # the overlay strategies differ most
    "large": {"n_edges": 24, "clients_per_edge": 10, "chords": [], "gateways": [0]},
}


def builtin_topology(name: str) -> PhysicalGraph:
    """One of the two reference topologies ("medium" or "large")."""
    if name not in _BUILTINS:
        raise TopologyError(f"unknown builtin topology {name!r} (expected one of {sorted(_BUILTINS)})")
    spec = _BUILTINS[name]
    n_edges = spec["n_edges"]
    nodes = [PhysicalNode(i, EDGE, EDGE_NODE_CAPACITY) for i in range(n_edges)]
    cloud_id = n_edges
    nodes.append(PhysicalNode(cloud_id, CLOUD, CLOUD_NODE_CAPACITY))
    links = [
        PhysicalLink(i, (i + 1) % n_edges, LINK_EDGE, EDGE_LINK_CAPACITY)
        for i in range(n_edges)
    ]
    for a, b in spec["chords"]:
        links.append(PhysicalLink(a, b, LINK_EDGE, EDGE_LINK_CAPACITY))
    for gw in spec["gateways"]:
        links.append(PhysicalLink(gw, cloud_id, LINK_CLOUD, CLOUD_LINK_CAPACITY))
    next_id = cloud_id + 1
    for e in range(n_edges):
        for _ in range(spec["clients_per_edge"]):
            nodes.append(PhysicalNode(next_id, CLIENT, CLIENT_CAPACITY))
            links.append(PhysicalLink(e, next_id, LINK_END, END_LINK_CAPACITY))
            next_id += 1
    return PhysicalGraph(nodes, links)


# -- auxiliary graph ---------------------------------------------------------

@dataclass
class AuxiliaryGraph:
    """Complete directed graph over aggregator candidates plus cloud nodes.

    Link weights start unset; the allocators assign them per request from
    the current network state.
    """

    nodes: tuple[int, ...]
    links: dict[tuple[int, int], float | None] = field(default_factory=dict)


def build_auxiliary_graph(g: PhysicalGraph, candidates: set[int]) -> AuxiliaryGraph:
    edge_set = set(g.edges)
    for c in candidates:
        if c not in edge_set:
            raise TopologyError(f"aggregator candidate {c} is not an edge node")
    members = tuple(sorted(set(candidates) | set(g.clouds)))
    links: dict[tuple[int, int], float | None] = {}
    for a in members:
        for b in members:
            if a != b:
                links[(a, b)] = None
    return AuxiliaryGraph(nodes=members, links=links)


# -- routing -----------------------------------------------------------------

def shortest_physical_route(
    g: PhysicalGraph,
    src: int,
    dst: int,
    demand: float = 0.0,
    used: dict[tuple[int, int], float] | None = None,
) -> PhysicalRoute | None:
    """Min-hop route whose every link has residual capacity >= demand.

    Ties on hop count break toward the lexicographically smallest node
    sequence.  Returns None when no feasible route exists (infeasibility is
    an expected outcome that feeds failure accounting, not an error).
    """
    if src == dst:
        raise ValueError("src == dst")
    used = used or {}

    def feasible(u: int, v: int) -> bool:
        lk = g.links[link_key(u, v)]
        return lk.capacity - used.get(lk.key, 0.0) >= demand - 1e-9

    best: dict[int, tuple[int, ...]] = {src: (src,)}
    frontier = [src]
    while frontier:
        candidates: dict[int, tuple[int, ...]] = {}
        for u in sorted(frontier, key=lambda n: best[n]):
            for v in g.adj[u]:
                if v in best or not feasible(u, v):
                    continue
                path = best[u] + (v,)
                if v not in candidates or path < candidates[v]:
                    candidates[v] = path
        if dst in candidates:
            return PhysicalRoute(nodes=candidates[dst])
        best.update(candidates)
        frontier = list(candidates)
    return None


def shortest_physical_routes(
    g: PhysicalGraph,
    src: int,
    demand: float = 0.0,
    used: dict[tuple[int, int], float] | None = None,
) -> dict[int, PhysicalRoute]:
    """Min-hop feasible routes from ``src`` to every reachable node.

    Same layered search and lexicographic tie-break as
    shortest_physical_route, run to exhaustion; each destination's route is
    identical to what the single-destination search would return.
    """
    used = used or {}

    def feasible(u: int, v: int) -> bool:
        lk = g.links[link_key(u, v)]
        return lk.capacity - used.get(lk.key, 0.0) >= demand - 1e-9

    best: dict[int, tuple[int, ...]] = {src: (src,)}
    frontier = [src]
    while frontier:
        candidates: dict[int, tuple[int, ...]] = {}
        for u in sorted(frontier, key=lambda n: best[n]):
            for v in g.adj[u]:
                if v in best or not feasible(u, v):
                    continue
                path = best[u] + (v,)
                if v not in candidates or path < candidates[v]:
                    candidates[v] = path
        best.update(candidates)
        frontier = list(candidates)
    return {dst: PhysicalRoute(nodes=path) for dst, path in best.items() if dst != src}
