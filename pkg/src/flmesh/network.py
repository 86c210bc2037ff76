"""Mutable network usage state layered over an immutable topology.

Tracks per-node computing units and per-link Mbps currently claimed, plus a
time-weighted utilization integral per component for metric reporting.
Claims are stacked per flow: two flows of the same request crossing one
link each pay their own demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .topology import PhysicalGraph, link_key


@dataclass
class ClaimSet:
    """Resources held by one placed request, for symmetric release."""

    request_id: int
    node_units: dict[int, float] = field(default_factory=dict)
    link_mbps: dict[tuple[int, int], float] = field(default_factory=dict)

    def add_node(self, node_id: int, units: float) -> None:
        self.node_units[node_id] = self.node_units.get(node_id, 0.0) + units

    def add_link(self, key: tuple[int, int], mbps: float) -> None:
        self.link_mbps[key] = self.link_mbps.get(key, 0.0) + mbps


class NetworkState:
    """Current usage plus time-weighted utilization accumulators."""

    def __init__(self, g: PhysicalGraph):
        self.graph = g
        self.node_used: dict[int, float] = {nid: 0.0 for nid in g.nodes}
        self.link_used: dict[tuple[int, int], float] = {k: 0.0 for k in g.links}
        # utilization integrals: sum of used * dt, advanced lazily
        self._node_integral: dict[int, float] = {nid: 0.0 for nid in g.nodes}
        self._link_integral: dict[tuple[int, int], float] = {k: 0.0 for k in g.links}
        self._clock_ms = 0.0

    # -- residuals -----------------------------------------------------------

    def node_residual(self, node_id: int) -> float:
        return self.graph.nodes[node_id].capacity - self.node_used[node_id]

    def link_residual(self, key: tuple[int, int]) -> float:
        return self.graph.links[key].capacity - self.link_used[key]

    def node_fits(self, node_id: int, units: float) -> bool:
        return self.node_residual(node_id) >= units - 1e-9

    def link_fits(self, key: tuple[int, int], mbps: float) -> bool:
        return self.link_residual(key) >= mbps - 1e-9

    # -- claims ---------------------------------------------------------------

    def apply(self, claims: ClaimSet) -> None:
        for nid, units in claims.node_units.items():
            if not self.node_fits(nid, units):
                raise ValueError(f"node {nid} over capacity applying request {claims.request_id}")
        for key, mbps in claims.link_mbps.items():
            if not self.link_fits(key, mbps):
                raise ValueError(f"link {key} over capacity applying request {claims.request_id}")
        for nid, units in claims.node_units.items():
            self.node_used[nid] += units
        for key, mbps in claims.link_mbps.items():
            self.link_used[key] += mbps

    def release(self, claims: ClaimSet) -> None:
        for nid, units in claims.node_units.items():
            self.node_used[nid] -= units
            if self.node_used[nid] < -1e-6:
                raise ValueError(f"node {nid} usage went negative")
            self.node_used[nid] = max(self.node_used[nid], 0.0)
        for key, mbps in claims.link_mbps.items():
            self.link_used[key] -= mbps
            if self.link_used[key] < -1e-6:
                raise ValueError(f"link {key} usage went negative")
            self.link_used[key] = max(self.link_used[key], 0.0)

    # -- time-weighted accounting ----------------------------------------------

    def advance_clock(self, now_ms: float) -> None:
        """Accumulate utilization integrals up to ``now_ms`` (before mutations)."""
        dt = now_ms - self._clock_ms
        if dt < -1e-9:
            raise ValueError("clock moved backwards")
        if dt > 0:
            for nid, used in self.node_used.items():
                if used:
                    self._node_integral[nid] += used * dt
            for key, used in self.link_used.items():
                if used:
                    self._link_integral[key] += used * dt
            self._clock_ms = now_ms

    @property
    def clock_ms(self) -> float:
        return self._clock_ms

    def utilization_integrals(self) -> tuple[dict[int, float], dict[tuple[int, int], float]]:
        return dict(self._node_integral), dict(self._link_integral)

    # -- snapshots (for route feasibility checks) -------------------------------

    def link_usage_snapshot(self) -> dict[tuple[int, int], float]:
        return dict(self.link_used)


def route_claims(claims: ClaimSet, nodes: tuple[int, ...], mbps: float) -> None:
    """Add one flow along a node path to a claim set."""
    for u, v in zip(nodes, nodes[1:]):
        claims.add_link(link_key(u, v), mbps)
