"""Discrete-event simulation core.

One run processes a seeded request stream against a topology: each arrival
is placed by the chosen strategy, a placed round expands into a task graph
(client training -> update transfers -> edge aggregations in overlay order
-> cloud aggregation), and the round's resource claims are held from
placement until the round completes.  Everything is deterministic given the
config; the serialized log is byte-identical across repeated runs.
"""

from __future__ import annotations

import heapq
import json
import time as _time
from dataclasses import dataclass, field

from .allocators import CostParams, PlacementDecision, place_request
from .network import NetworkState
from .topology import PhysicalGraph, builtin_topology, load_topology
from .workload import (
    RNG_ALGORITHM,
    ModelArch,
    TrainingRoundRequest,
    WorkloadConfig,
    generate_requests,
)

LOG_SCHEMA_VERSION = 1

# Event kinds in same-timestamp processing order: completions and releases
# come before arrivals so freed capacity is visible to an arriving request.
EVENT_PRIORITY = {
    "TaskComplete": 0,
    "RoundComplete": 1,
    "ResourceRelease": 2,
    "TaskStart": 3,
    "RequestArrival": 4,
}


@dataclass(frozen=True)
class LatencyConstants:
    cycles_per_weight: float = 4.0
    cycle_rate_per_unit_hz: float = 1e9  # per claimed computing unit
    bits_per_weight: float = 32.0


def training_latency(arch: ModelArch, dataset: int) -> float:
    """Local training time in ms for one client."""
    if dataset < 0:
        raise ValueError("dataset must be non-negative")
    return arch.per_image_train_ms * dataset


def aggregation_latency(
    arch: ModelArch, fan_in: int, claim: float, consts: LatencyConstants = LatencyConstants()
) -> float:
    """Model-fusion time in ms at one aggregation point."""
    if fan_in < 1 or claim < 1:
        raise ValueError("fan_in and claim must be >= 1")
    cycles = consts.cycles_per_weight * arch.weight_count * fan_in
    return cycles / (consts.cycle_rate_per_unit_hz * claim) * 1000.0


def transfer_latency(
    arch: ModelArch, link_claim: float, consts: LatencyConstants = LatencyConstants()
) -> float:
    """One model-update transfer time in ms at the claimed bandwidth."""
    if link_claim <= 0:
        raise ValueError("link_claim must be positive")
    bits = consts.bits_per_weight * arch.weight_count
    return bits / (link_claim * 1e6) * 1000.0


@dataclass
class SimConfig:
    topology: str | PhysicalGraph = "medium"
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    strategy: str = "hfel_mesh"
    cost: CostParams = field(default_factory=CostParams)
    latency: LatencyConstants = field(default_factory=LatencyConstants)
    node_weights: dict[str, float] | None = None
    link_weights: dict[str, float] | None = None

    def build_graph(self) -> PhysicalGraph:
        if isinstance(self.topology, PhysicalGraph):
            g = self.topology
        elif self.topology in ("medium", "large"):
            g = builtin_topology(self.topology)
        else:
            with open(self.topology, encoding="utf-8") as fh:
                g = load_topology(fh.read())
        if self.node_weights:
            g.node_weights.update(self.node_weights)
        if self.link_weights:
            g.link_weights.update(self.link_weights)
        return g


@dataclass
class ResultsLog:
    """Complete, self-describing record of one run."""

    meta: dict
    events: list[dict] = field(default_factory=list)
    placements: list[dict] = field(default_factory=list)
    samples: list[dict] = field(default_factory=list)  # component usage changes
    t_total: int = 0
    t_failed: int = 0
    end_ms: float = 0.0
    round_durations_ms: list[float] = field(default_factory=list)
    # wall-clock placement times; intentionally not serialized so that logs
    # stay byte-identical across machines and repeats
    placement_wall_ms: list[float] = field(default_factory=list)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "meta", **self.meta}, sort_keys=True)]
        for p in self.placements:
            lines.append(json.dumps({"type": "placement", **p}, sort_keys=True))
        for e in self.events:
            lines.append(json.dumps({"type": "event", **e}, sort_keys=True))
        for s in self.samples:
            lines.append(json.dumps({"type": "sample", **s}, sort_keys=True))
        lines.append(
            json.dumps(
                {
                    "type": "summary",
                    "t_total": self.t_total,
                    "t_failed": self.t_failed,
                    "end_ms": self.end_ms,
                    "round_durations_ms": self.round_durations_ms,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


@dataclass
class _Task:
    name: str
    request: int
    duration: float
    waiting: int  # unfinished predecessors
    successors: list[str] = field(default_factory=list)


class _Round:
    """Live state of one placed round inside the event loop."""

    def __init__(self, r: TrainingRoundRequest, decision: PlacementDecision,
                 consts: LatencyConstants):
        self.request = r
        self.decision = decision
        self.tasks: dict[str, _Task] = {}
        self.open_tasks = 0
        self._build(consts)

    def _add(self, name: str, duration: float, deps: list[str]) -> None:
        self.tasks[name] = _Task(name, self.request.id, duration, len(deps))
        for d in deps:
            self.tasks[d].successors.append(name)
        self.open_tasks += 1

    def _build(self, consts: LatencyConstants) -> None:
        r, d = self.request, self.decision
        sig_e = float(r.link_demand)
        sig_n = float(r.node_demand)
        inbound: dict[int, list[str]] = {a: [] for a in d.aggregators}
        for cloud in {e.target for e in d.overlay.edges}:
            inbound.setdefault(cloud, [])
        for c in sorted(d.assignment):
            self._add(f"train:{c}", training_latency(r.arch, r.dataset_size), [])
            self._add(f"upload:{c}", transfer_latency(r.arch, sig_e, consts), [f"train:{c}"])
            inbound[d.assignment[c]].append(f"upload:{c}")
        # aggregations in overlay topological order (leaves toward the cloud)
        order = _toposort(d.aggregators, d.overlay)
        for a in order:
            deps = inbound[a]
            self._add(
                f"aggregate:{a}",
                aggregation_latency(r.arch, max(1, len(deps)), sig_n, consts),
                deps,
            )
            edge = next(e for e in d.overlay.edges if e.src == a)
            self._add(
                f"forward:{a}->{edge.target}",
                transfer_latency(r.arch, sig_e, consts),
                [f"aggregate:{a}"],
            )
            inbound[edge.target].append(f"forward:{a}->{edge.target}")
        self.cloud_tasks = []
        for cloud in sorted(set(inbound) - set(d.aggregators)):
            deps = inbound[cloud]
            self._add(
                f"aggregate:{cloud}",
                aggregation_latency(r.arch, max(1, len(deps)), sig_n, consts),
                deps,
            )
            self.cloud_tasks.append(f"aggregate:{cloud}")

    def ready_tasks(self) -> list[str]:
        return [n for n, t in self.tasks.items() if t.waiting == 0]


def _toposort(aggregators: tuple[int, ...], overlay) -> list[int]:
    parent = {e.src: e.target for e in overlay.edges}
    depth: dict[int, int] = {}

    def d(n: int) -> int:
        if n not in parent:
            return 0
        if n not in depth:
            depth[n] = d(parent[n]) + 1
        return depth[n]

    # deepest (furthest from the cloud) first so models flow downstream
    return sorted(aggregators, key=lambda a: (-d(a), a))


def run(cfg: SimConfig) -> ResultsLog:
    g = cfg.build_graph()
    requests = generate_requests(g, cfg.workload)
    state = NetworkState(g)
    meta = {
        "schema": LOG_SCHEMA_VERSION,
        "rng": RNG_ALGORITHM,
        "seed": cfg.workload.seed,
        "lambda": cfg.workload.lam,
        "strategy": cfg.strategy,
        "xi": cfg.cost.xi,
        "topology": cfg.topology if isinstance(cfg.topology, str) else "custom",
        "n_requests": len(requests),
        "node_weights": dict(g.node_weights),
        "link_weights": dict(g.link_weights),
        # component inventory so metrics can be computed from the log alone
        "components": {
            **{
                f"n{nid}": [f"{g.nodes[nid].kind}_node", g.nodes[nid].capacity]
                for nid in sorted(g.nodes)
            },
            **{
                f"l{a}-{b}": [f"{g.links[(a, b)].kind}_link", g.links[(a, b)].capacity]
                for a, b in sorted(g.links)
            },
        },
    }
    log = ResultsLog(meta=meta)
    heap: list[tuple[float, int, int, dict]] = []
    seq = 0

    def push(t: float, kind: str, payload: dict) -> None:
        nonlocal seq
        heapq.heappush(heap, (t, EVENT_PRIORITY[kind], seq, {"kind": kind, **payload}))
        seq += 1

    def emit(t: float, kind: str, **detail) -> None:
        log.events.append({"t": t, "kind": kind, **detail})

    def sample(t: float, component: str, used: float) -> None:
        log.samples.append({"t": t, "component": component, "used": used})

    def sample_claims(t: float, claims) -> None:
        for nid in sorted(claims.node_units):
            sample(t, f"n{nid}", state.node_used[nid])
        for a, b in sorted(claims.link_mbps):
            sample(t, f"l{a}-{b}", state.link_used[(a, b)])

    rounds: dict[int, _Round] = {}
    by_id = {r.id: r for r in requests}
    for r in requests:
        push(r.arrival_ms, "RequestArrival", {"request": r.id})

    last_t = 0.0
    while heap:
        t, _, _, ev = heapq.heappop(heap)
        if t < last_t - 1e-9:
            raise RuntimeError("event clock moved backwards")
        last_t = t
        state.advance_clock(t)
        kind = ev["kind"]

        if kind == "RequestArrival":
            r = by_id[ev["request"]]
            log.t_total += 1
            emit(t, kind, request=r.id)
            t0 = _time.perf_counter()
            decision = place_request(g, r, state, cfg.strategy, cfg.cost)
            log.placement_wall_ms.append((_time.perf_counter() - t0) * 1000.0)
            log.placements.append(_placement_record(t, r, decision))
            if not decision.placed:
                log.t_failed += 1
                continue
            state.apply(decision.claims)
            sample_claims(t, decision.claims)
            rnd = _Round(r, decision, cfg.latency)
            rounds[r.id] = rnd
            for name in rnd.ready_tasks():
                push(t, "TaskStart", {"request": r.id, "task": name})

        elif kind == "TaskStart":
            rnd = rounds[ev["request"]]
            task = rnd.tasks[ev["task"]]
            emit(t, kind, request=task.request, task=task.name)
            push(t + task.duration, "TaskComplete", {"request": task.request, "task": task.name})

        elif kind == "TaskComplete":
            rnd = rounds[ev["request"]]
            task = rnd.tasks[ev["task"]]
            emit(t, kind, request=task.request, task=task.name)
            rnd.open_tasks -= 1
            for succ in task.successors:
                nxt = rnd.tasks[succ]
                nxt.waiting -= 1
                if nxt.waiting == 0:
                    push(t, "TaskStart", {"request": task.request, "task": succ})
            if rnd.open_tasks == 0:
                push(t, "RoundComplete", {"request": task.request})

        elif kind == "RoundComplete":
            rnd = rounds.pop(ev["request"])
            emit(t, kind, request=rnd.request.id)
            log.round_durations_ms.append(t - rnd.request.arrival_ms)
            push(t, "ResourceRelease", {"request": rnd.request.id, "claims": rnd.decision.claims})

        elif kind == "ResourceRelease":
            claims = ev["claims"]
            state.release(claims)
            emit(t, kind, request=ev["request"])
            sample_claims(t, claims)

    if rounds:
        raise RuntimeError(f"rounds left unfinished: {sorted(rounds)}")
    for nid, used in state.node_used.items():
        if abs(used) > 1e-6:
            raise RuntimeError(f"node {nid} usage nonzero at end of run")
    for lk, used in state.link_used.items():
        if abs(used) > 1e-6:
            raise RuntimeError(f"link {lk} usage nonzero at end of run")
    log.end_ms = last_t
    return log


def _placement_record(t: float, r: TrainingRoundRequest, d: PlacementDecision) -> dict:
    rec = {
        "t": t,
        "request": r.id,
        "strategy": d.strategy,
        "status": d.status,
        "reason": d.reason,
        "arch": r.arch.name,
        "node_demand": r.node_demand,
        "link_demand": r.link_demand,
        "aggregators": list(d.aggregators),
        "assignment": {str(c): v for c, v in sorted(d.assignment.items())},
        "overlay": [
            {"src": e.src, "target": e.target, "route": list(e.route.nodes)}
            for e in d.overlay.edges
        ],
    }
    if d.claims is not None:
        rec["claims_nodes"] = {str(n): u for n, u in sorted(d.claims.node_units.items())}
        rec["claims_links"] = {f"{a}-{b}": m for (a, b), m in sorted(d.claims.link_mbps.items())}
    return rec
