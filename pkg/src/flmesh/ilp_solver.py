"""Exact solver for the placement model.

Structure of the optimum: per request, everything except the core-link
usage is forced (end links, aggregation at source edges), and the cheapest
core usage is a minimum Steiner tree connecting the source edges to the
cloud under the beta link weights.  When the independently optimal trees
jointly respect all capacities (the common case), their sum is the true
optimum; otherwise a joint depth-first search over each request's minimal
connecting link sets finds the capacity-coupled optimum exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .ilp import IlpModel, IlpSolution
from .topology import link_key
from .workload import request_link_load


@dataclass
class SolveLimits:
    node_budget: int = 2_000_000  # deterministic work cap (masks + DFS nodes)
    joint_link_budget: int = 18  # refuse joint fallback beyond 2^18 masks


class _Budget:
    def __init__(self, limit: int):
        self.left = limit

    def spend(self, n: int = 1) -> bool:
        self.left -= n
        return self.left >= 0


def _connected(mask: int, links: list[tuple[int, int]], terminals: set[int]) -> bool:
    parent: dict[int, int] = {}

    def find(x: int) -> int:
        while parent.get(x, x) != x:
            parent[x] = parent.get(parent[x], parent[x])
            x = parent[x]
        return x

    for i, (a, b) in enumerate(links):
        if mask >> i & 1:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    roots = {find(t) for t in terminals}
    return len(roots) == 1


def _enumerate_best(
    links: list[tuple[int, int]],
    costs: list[float],
    usable: int,
    terminals: set[int],
    budget: _Budget,
) -> tuple[float, int] | None:
    """Cheapest link subset of ``usable`` connecting all terminals."""
    if len(terminals) == 1:
        return (0.0, 0)
    n = len(links)
    best: tuple[float, int] | None = None
    for mask in range(1 << n):
        if mask & ~usable:
            continue
        cost = 0.0
        m = mask
        while m:
            low = m & -m
            cost += costs[low.bit_length() - 1]
            m ^= low
        if best is not None and cost >= best[0]:
            continue
        if not budget.spend():
            return best
        if _connected(mask, links, terminals):
            best = (cost, mask)
    return best


def _minimal_sets(
    links: list[tuple[int, int]],
    costs: list[float],
    usable: int,
    terminals: set[int],
    budget: _Budget,
) -> list[tuple[float, int]]:
    """All minimal connecting subsets, sorted by cost then mask."""
    if len(terminals) == 1:
        return [(0.0, 0)]
    n = len(links)
    out: list[tuple[float, int]] = []
    for mask in range(1 << n):
        if mask & ~usable:
            continue
        if not budget.spend():
            break
        if not _connected(mask, links, terminals):
            continue
        minimal = True
        m = mask
        while m:
            low = m & -m
            if _connected(mask ^ low, links, terminals):
                minimal = False
                break
            m ^= low
        if not minimal:
            continue
        cost = sum(costs[i] for i in range(n) if mask >> i & 1)
        out.append((cost, mask))
    out.sort()
    return out


def solve_exact(m: IlpModel, limits: SolveLimits | None = None) -> IlpSolution:
    limits = limits or SolveLimits()
    budget = _Budget(limits.node_budget)
    g = m.g
    links = list(m.core_links)
    idx = {l: i for i, l in enumerate(links)}
    costs = [g.beta(l) * 1.0 for l in links]

    if not m.requests:
        return IlpSolution(status="optimal", objective_value=0.0,
                           assignment=_assignment(m, {}))

    # forced claims: end links and source-edge aggregation
    end_load: dict[tuple[int, int], float] = {}
    node_load: dict[int, float] = {}
    constants = 0.0
    for r in m.requests:
        sig_e = request_link_load(r)
        for c in r.clients:
            l = link_key(c, g.attached_edge(c))
            end_load[l] = end_load.get(l, 0.0) + sig_e
            constants += g.beta(l) * sig_e
        for s in m.sources[r.id]:
            node_load[s] = node_load.get(s, 0.0) + r.node_demand
            constants += g.alpha(s) * r.node_demand
    for l, load in end_load.items():
        if load > g.links[l].capacity + 1e-9:
            return IlpSolution(status="infeasible")
    for n, load in node_load.items():
        if load > g.nodes[n].capacity + 1e-9:
            return IlpSolution(status="infeasible")

    # independent optima
    per_request: dict[int, tuple[float, int]] = {}
    for r in m.requests:
        sig_e = request_link_load(r)
        usable = 0
        for i, l in enumerate(links):
            if g.links[l].capacity >= sig_e - 1e-9:
                usable |= 1 << i
        terminals = set(m.sources[r.id]) | {m.cloud}
        best = _enumerate_best(links, costs, usable, terminals, budget)
        if budget.left < 0:
            return IlpSolution(status="limit_reached")
        if best is None:
            return IlpSolution(status="infeasible")
        per_request[r.id] = best

    def joint_feasible(choice: dict[int, int]) -> bool:
        load = dict(end_load)
        for r in m.requests:
            sig_e = request_link_load(r)
            mask = choice[r.id]
            for i, l in enumerate(links):
                if mask >> i & 1:
                    load[l] = load.get(l, 0.0) + sig_e
        return all(load[l] <= g.links[l].capacity + 1e-9 for l in load)

    choice = {rid: mask for rid, (_, mask) in per_request.items()}
    if joint_feasible(choice):
        objective = constants + sum(
            request_link_load(r) * per_request[r.id][0] for r in m.requests
        )
        return _finish(m, choice, objective)

    # capacity-coupled fallback: joint search over minimal connecting sets
    if len(links) > limits.joint_link_budget:
        return IlpSolution(status="limit_reached")
    options: dict[int, list[tuple[float, int]]] = {}
    for r in m.requests:
        sig_e = request_link_load(r)
        usable = 0
        for i, l in enumerate(links):
            if g.links[l].capacity >= sig_e - 1e-9:
                usable |= 1 << i
        terminals = set(m.sources[r.id]) | {m.cloud}
        options[r.id] = _minimal_sets(links, costs, usable, terminals, budget)
        if budget.left < 0:
            return IlpSolution(status="limit_reached")
        if not options[r.id]:
            return IlpSolution(status="infeasible")

    order = [r for r in m.requests]
    tail_min = [0.0] * (len(order) + 1)
    for i in range(len(order) - 1, -1, -1):
        r = order[i]
        tail_min[i] = tail_min[i + 1] + request_link_load(r) * options[r.id][0][0]

    best_total = math.inf
    best_choice: dict[int, int] | None = None
    load0 = dict(end_load)
    hit_limit = False

    def dfs(i: int, total: float, load: dict[tuple[int, int], float], chosen: dict[int, int]):
        nonlocal best_total, best_choice, hit_limit
        if hit_limit:
            return
        if total + tail_min[i] >= best_total - 1e-12:
            return
        if i == len(order):
            best_total = total
            best_choice = dict(chosen)
            return
        r = order[i]
        sig_e = request_link_load(r)
        for cost, mask in options[r.id]:
            if not budget.spend():
                hit_limit = True
                return
            if total + sig_e * cost + tail_min[i + 1] >= best_total - 1e-12:
                break  # options sorted by cost
            new_load = dict(load)
            ok = True
            mm = mask
            while mm:
                low = mm & -mm
                l = links[low.bit_length() - 1]
                new_load[l] = new_load.get(l, 0.0) + sig_e
                if new_load[l] > g.links[l].capacity + 1e-9:
                    ok = False
                    break
                mm ^= low
            if ok:
                chosen[r.id] = mask
                dfs(i + 1, total + sig_e * cost, new_load, chosen)
                del chosen[r.id]

    dfs(0, 0.0, load0, {})
    if hit_limit:
        if best_choice is None:
            return IlpSolution(status="limit_reached")
        return IlpSolution(
            status="limit_reached",
            objective_value=constants + best_total,
            assignment=_assignment(m, best_choice),
        )
    if best_choice is None:
        return IlpSolution(status="infeasible")
    return _finish(m, best_choice, constants + best_total)


def _finish(m: IlpModel, choice: dict[int, int], objective: float) -> IlpSolution:
    pruned = {rid: _prune(m, rid, mask) for rid, mask in choice.items()}
    return IlpSolution(
        status="optimal", objective_value=objective, assignment=_assignment(m, pruned)
    )


def _prune(m: IlpModel, rid: int, mask: int) -> int:
    """Drop links removable without disconnecting the terminals."""
    links = list(m.core_links)
    terminals = set(m.sources[rid]) | {m.cloud}
    changed = True
    while changed:
        changed = False
        mm = mask
        while mm:
            low = mm & -mm
            if _connected(mask ^ low, links, terminals):
                mask ^= low
                changed = True
            mm ^= low
    return mask


def _assignment(m: IlpModel, choice: dict[int, int]) -> dict[str, float]:
    """Full variable assignment realizing the chosen trees."""
    values = {name: 0.0 for name in m.variables()}
    g = m.g
    links = list(m.core_links)
    eta_n: dict[int, float] = {}
    eta_l: dict[tuple[int, int], float] = {}

    for r in m.requests:
        k = r.id
        sig_e = request_link_load(r)
        values[f"z_k{k}"] = 1.0
        for c in r.clients:
            l = link_key(c, g.attached_edge(c))
            eta_l[l] = eta_l.get(l, 0.0) + sig_e
        for s in m.sources[k]:
            values[f"zeta_n{s}_k{k}"] = 1.0
            eta_n[s] = eta_n.get(s, 0.0) + r.node_demand
        if k not in choice:
            continue
        mask = choice[k]
        adj: dict[int, list[int]] = {}
        for i, (a, b) in enumerate(links):
            if mask >> i & 1:
                adj.setdefault(a, []).append(b)
                adj.setdefault(b, []).append(a)
        used_links: set[tuple[int, int]] = set()
        for s in m.sources[k]:
            path = _tree_path(adj, s, m.cloud)
            if path is None:
                raise RuntimeError("chosen mask does not connect a source")
            # direct auxiliary link source -> cloud, realized by the tree path
            values[m.q_name(s, m.cloud, s, k)] = 1.0
            values[m.u_name(s, m.cloud, k)] = 1.0
            values[m.mu_node_name(m.cloud, k)] = 1.0
            for u_, v_ in zip(path, path[1:]):
                values[m.x_name(u_, v_, s, m.cloud, k)] = 1.0
                used_links.add(link_key(u_, v_))
        for l in used_links:
            values[m.mu_link_name(l, k)] = 1.0
            eta_l[l] = eta_l.get(l, 0.0) + sig_e

    for n, load in eta_n.items():
        values[m.eta_node_name(n)] = load
    for l, load in eta_l.items():
        values[m.eta_link_name(l)] = load
    return values


def _tree_path(adj: dict[int, list[int]], src: int, dst: int) -> list[int] | None:
    if src == dst:
        return [src]
    seen = {src}
    stack = [[src]]
    while stack:
        path = stack.pop()
        for nb in sorted(adj.get(path[-1], ()), reverse=True):
            if nb in seen:
                continue
            if nb == dst:
                return path + [nb]
            seen.add(nb)
            stack.append(path + [nb])
    return None
