"""Literal brute-force reference for the exact placement optimum.

Written independently of the model/solver pair: for each request it
enumerates every subset of core links whose subgraph connects all of the
request's source edges to the cloud (every aggregator set, overlay forest,
and physical realization collapses to exactly such a subset of used links),
then searches all per-request combinations under the shared capacities.
Costs are accumulated from first principles: end links and source-edge
aggregation are paid unconditionally, core links once per request.
"""

from __future__ import annotations

import math
from itertools import combinations


def brute_force_oracle(g, reqs) -> float:
    """Minimum cumulative weighted capacity; inf when no feasible layout."""
    edge_nodes = [n.id for n in g.nodes.values() if n.kind == "edge"]
    if len(edge_nodes) > 6:
        raise ValueError("oracle guard: more than 6 edge nodes")
    if len(reqs) > 3:
        raise ValueError("oracle guard: more than 3 requests")
    clouds = [n.id for n in g.nodes.values() if n.kind == "cloud"]
    if len(clouds) != 1:
        raise ValueError("oracle guard: exactly one cloud required")
    cloud = clouds[0]

    core = [
        lk
        for lk in sorted(g.links)
        if g.nodes[lk[0]].kind != "client" and g.nodes[lk[1]].kind != "client"
    ]
    if len(core) > 16:
        raise ValueError("oracle guard: too many core links")
    if not reqs:
        return 0.0

    # unconditional usage and cost
    base_cost = 0.0
    load: dict[object, float] = {}
    per_req_sources = []
    for r in reqs:
        srcs = set()
        for c in r.clients:
            edge = g.adj[c][0]
            srcs.add(edge)
            lk = (min(c, edge), max(c, edge))
            base_cost += g.link_weights[g.links[lk].kind] * r.link_demand
            load[lk] = load.get(lk, 0.0) + r.link_demand
        for s in sorted(srcs):
            base_cost += g.node_weights[g.nodes[s].kind] * r.node_demand
            load[("n", s)] = load.get(("n", s), 0.0) + r.node_demand
        per_req_sources.append(sorted(srcs))
    for key, used in load.items():
        cap = g.nodes[key[1]].capacity if key[0] == "n" else g.links[key].capacity
        if used > cap + 1e-9:
            return math.inf

    def reaches_all(link_subset, terminals) -> bool:
        frontier = [cloud]
        seen = {cloud}
        while frontier:
            u = frontier.pop()
            for (a, b) in link_subset:
                if a == u and b not in seen:
                    seen.add(b)
                    frontier.append(b)
                elif b == u and a not in seen:
                    seen.add(a)
                    frontier.append(a)
        return all(t in seen for t in terminals)

    # all connecting core-link subsets per request, cheap first
    candidates = []
    for r, srcs in zip(reqs, per_req_sources):
        usable = [lk for lk in core if g.links[lk].capacity >= r.link_demand - 1e-9]
        subsets = []
        if reaches_all([], srcs):
            subsets.append((0.0, ()))
        for size in range(1, len(usable) + 1):
            for combo in combinations(usable, size):
                if reaches_all(combo, srcs):
                    cost = sum(
                        g.link_weights[g.links[lk].kind] * r.link_demand for lk in combo
                    )
                    subsets.append((cost, combo))
        if not subsets:
            return math.inf
        subsets.sort(key=lambda t: (t[0], t[1]))
        candidates.append((r, subsets))

    best = math.inf

    def search(i: int, cost_so_far: float, usage: dict) -> None:
        nonlocal best
        if i == len(candidates):
            best = min(best, cost_so_far)
            return
        r, subsets = candidates[i]
        remaining_min = sum(c[1][0][0] for c in candidates[i + 1 :])
        for cost, combo in subsets:
            if cost_so_far + cost + remaining_min >= best - 1e-12:
                break
            new_usage = dict(usage)
            feasible = True
            for lk in combo:
                new_usage[lk] = new_usage.get(lk, 0.0) + r.link_demand
                if new_usage[lk] > g.links[lk].capacity + 1e-9:
                    feasible = False
                    break
            if feasible:
                search(i + 1, cost_so_far + cost, new_usage)

    search(0, base_cost, {lk: v for lk, v in load.items() if lk[0] != "n"})
    return best
