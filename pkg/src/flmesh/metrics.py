"""Metrics over a completed run log and result serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

from .topology import DEFAULT_LINK_WEIGHTS, DEFAULT_NODE_WEIGHTS

KINDS = ("client_node", "edge_node", "cloud_node", "end_link", "edge_link", "cloud_link")


class MetricsError(ValueError):
    pass


def trfr(log) -> float:
    """Training-round failure rate: failed rounds over total rounds."""
    if log.t_total <= 0:
        raise MetricsError("TRFR undefined: no rounds in log")
    return log.t_failed / log.t_total


def mur(log, component_kind: str) -> float:
    """Mean utilization ratio of one component kind.

    Time-weighted mean of used/capacity per component over [0, end of run],
    then an arithmetic mean across all components of the kind.
    """
    if component_kind not in KINDS:
        raise MetricsError(f"unknown component kind {component_kind!r}")
    members = {
        key: cap
        for key, (kind, cap) in log.meta["components"].items()
        if kind == component_kind
    }
    if not members:
        raise MetricsError(f"no components of kind {component_kind!r}")
    end = log.end_ms
    if end <= 0:
        return 0.0
    # integrate each component's usage step function
    integral = {key: 0.0 for key in members}
    last_t = {key: 0.0 for key in members}
    level = {key: 0.0 for key in members}
    for s in log.samples:
        key = s["component"]
        if key not in members:
            continue
        integral[key] += level[key] * (s["t"] - last_t[key])
        last_t[key] = s["t"]
        level[key] = s["used"]
    ratios = []
    for key, cap in members.items():
        integral[key] += level[key] * (end - last_t[key])
        ratios.append(integral[key] / (cap * end) if cap > 0 else 0.0)
    return sum(ratios) / len(ratios)


def cumulative_weighted_capacity(
    log,
    node_weights: dict[str, float] | None = None,
    link_weights: dict[str, float] | None = None,
) -> float:
    """Objective-style cost of all served rounds: sum of weighted claims.

    Uses per-request claim sums from the placement records (every flow and
    every aggregation point pays its demand), which puts the heuristics on
    the same accounting as the exact optimizer's objective.
    """
    node_weights = node_weights if node_weights is not None else dict(DEFAULT_NODE_WEIGHTS)
    link_weights = link_weights if link_weights is not None else dict(DEFAULT_LINK_WEIGHTS)
    components = log.meta["components"]
    total = 0.0
    for p in log.placements:
        if p["status"] != "placed":
            continue
        for nid, units in p.get("claims_nodes", {}).items():
            kind = components[f"n{nid}"][0].removesuffix("_node")
            if kind not in node_weights:
                raise MetricsError(f"missing node weight for kind {kind!r} (node {nid})")
            total += node_weights[kind] * units
        for key, mbps in p.get("claims_links", {}).items():
            kind = components[f"l{key}"][0].removesuffix("_link")
            if kind not in link_weights:
                raise MetricsError(f"missing link weight for kind {kind!r} (link {key})")
            total += link_weights[kind] * mbps
    return total


@dataclass
class RunSummary:
    topology: str
    strategy: str
    xi: int
    lam: float
    seed: int
    t_total: int
    t_failed: int
    trfr: float
    mur_edge_node: float
    mur_edge_link: float
    mur_cloud_link: float
    cumulative_weighted_capacity: float
    mean_round_duration_ms: float
    mean_placement_ms: float


def summarize(log) -> RunSummary:
    durations = log.round_durations_ms
    wall = log.placement_wall_ms
    return RunSummary(
        topology=log.meta["topology"],
        strategy=log.meta["strategy"],
        xi=log.meta["xi"],
        lam=log.meta["lambda"],
        seed=log.meta["seed"],
        t_total=log.t_total,
        t_failed=log.t_failed,
        trfr=trfr(log) if log.t_total else 0.0,
        mur_edge_node=mur(log, "edge_node"),
        mur_edge_link=mur(log, "edge_link"),
        mur_cloud_link=mur(log, "cloud_link"),
        cumulative_weighted_capacity=cumulative_weighted_capacity(
            log,
            node_weights=log.meta.get("node_weights"),
            link_weights=log.meta.get("link_weights"),
        ),
        mean_round_duration_ms=sum(durations) / len(durations) if durations else 0.0,
        mean_placement_ms=sum(wall) / len(wall) if wall else 0.0,
    )


def export(summaries, format: str = "csv") -> str:
    """Serialize one or many RunSummary rows deterministically."""
    if isinstance(summaries, RunSummary):
        summaries = [summaries]
    rows = [asdict(s) for s in summaries]
    columns = [f.name for f in RunSummary.__dataclass_fields__.values()]
    if format == "json":
        return json.dumps(rows, indent=2, sort_keys=False) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        return buf.getvalue()
    raise MetricsError(f"unknown export format {format!r}")
