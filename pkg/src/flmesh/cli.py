"""Command-line entry point.

Subcommands:

* ``run``      — execute a scenario sweep and write per-run logs + tables
* ``compare``  — exact optimizer vs. heuristics on one static request batch
* ``validate`` — check a topology file against the structural invariants
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .allocators import CostParams, place_request
from .engine import SimConfig, run
from .ilp import build_model
from .ilp_solver import solve_exact
from .metrics import export, summarize
from .network import NetworkState
from .scenario import Scenario, parse_scenario
from .topology import TopologyError, builtin_topology, load_topology
from .workload import generate_batch

MAX_JOBS_ENV = "FLMESH_MAX_JOBS"


def _run_one(cfg: SimConfig):
    log = run(cfg)
    return log.to_jsonl(), summarize(log)


def _run_name(cfg: SimConfig) -> str:
    topo = cfg.topology if isinstance(cfg.topology, str) else "custom"
    topo = Path(topo).stem
    return (
        f"run_{topo}_{cfg.strategy}_xi{cfg.cost.xi}"
        f"_lam{cfg.workload.lam:g}_seed{cfg.workload.seed}.jsonl"
    )


def cmd_run(args) -> int:
    if args.scenario:
        sc = parse_scenario(Path(args.scenario).read_text(encoding="utf-8"))
    else:
        sc = Scenario()
    if args.topology:
        sc.topology = args.topology
    if args.strategy:
        sc.strategies = [args.strategy]
    if args.xi:
        sc.xi_values = args.xi
    if getattr(args, "lambda_"):
        sc.lambda_values = args.lambda_
    if args.seeds:
        sc.seeds = args.seeds
    configs = sc.run_configs()

    jobs = args.jobs or 1
    cap = os.environ.get(MAX_JOBS_ENV)
    if cap:
        jobs = min(jobs, max(1, int(cap)))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, configs))
        else:
            results = [_run_one(cfg) for cfg in configs]
    except Exception as exc:  # invariant breach or config error mid-sweep
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summaries = []
    for cfg, (jsonl, summary) in zip(configs, results):
        (out_dir / _run_name(cfg)).write_text(jsonl, encoding="utf-8")
        summaries.append(summary)
    (out_dir / "sweep.csv").write_text(export(summaries, "csv"), encoding="utf-8")
    (out_dir / "sweep.json").write_text(export(summaries, "json"), encoding="utf-8")
    print(f"{len(configs)} runs -> {out_dir}")
    return 0


def compare_methods(
    topology="medium",
    n_requests: int = 4,
    clients_per_request: tuple[int, int] = (4, 10),
    seed: int = 0,
    xi: int = 4,
) -> list[dict]:
    """One static batch, three methods, one table row each."""
    if isinstance(topology, str):
        if topology in ("medium", "large"):
            g = builtin_topology(topology)
        else:
            g = load_topology(Path(topology).read_text(encoding="utf-8"))
    else:
        g = topology
    reqs = generate_batch(g, n_requests, clients_per_request, seed)

    def kind_mur(node_used, link_used):
        out = {}
        for kind, members in (
            ("edge_node", [(n, g.nodes[n].capacity) for n in g.edges]),
            ("edge_link", [(l, g.links[l].capacity) for l in g.links_of_kind("edge")]),
            ("cloud_link", [(l, g.links[l].capacity) for l in g.links_of_kind("cloud")]),
        ):
            vals = [
                (node_used.get(c, 0.0) if isinstance(c, int) else link_used.get(c, 0.0)) / cap
                for c, cap in members
            ]
            out[f"mur_{kind}"] = sum(vals) / len(vals) if vals else 0.0
        return out

    rows = []
    # exact optimizer
    t0 = time.perf_counter()
    try:
        model = build_model(g, reqs)
        sol = solve_exact(model)
        elapsed = (time.perf_counter() - t0) * 1000.0
        if sol.status == "optimal":
            node_used = {
                n: sol.assignment[model.eta_node_name(n)] for n in g.edges
            }
            link_used = {
                l: sol.assignment.get(model.eta_link_name(l), 0.0) for l in g.links
            }
            rows.append(
                {
                    "method": "ilp",
                    "status": "optimal",
                    "objective": sol.objective_value,
                    **kind_mur(node_used, link_used),
                    "solve_ms": elapsed,
                }
            )
        else:
            rows.append(
                {"method": "ilp", "status": sol.status, "objective": None, "solve_ms": elapsed}
            )
    except ValueError as exc:
        rows.append({"method": "ilp", "status": f"skipped ({exc})", "objective": None})

    for strategy in ("hfel_mesh", "hfel"):
        state = NetworkState(g)
        cost = 0.0
        failed = 0
        t0 = time.perf_counter()
        for r in reqs:
            d = place_request(g, r, state, strategy, CostParams(xi=xi))
            if not d.placed:
                failed += 1
                continue
            state.apply(d.claims)
            for n, units in d.claims.node_units.items():
                cost += g.alpha(n) * units
            for l, mbps in d.claims.link_mbps.items():
                cost += g.beta(l) * mbps
        elapsed = (time.perf_counter() - t0) * 1000.0
        rows.append(
            {
                "method": strategy,
                "status": "ok" if failed == 0 else f"{failed} failed",
                "objective": cost,
                **kind_mur(state.node_used, state.link_used),
                "solve_ms": elapsed,
            }
        )
    return rows


def cmd_compare(args) -> int:
    rows = compare_methods(
        topology=args.topology or "medium",
        n_requests=args.requests,
        clients_per_request=tuple(args.clients),
        seed=args.seed,
        xi=args.xi[0] if args.xi else 4,
    )
    cols = ["method", "status", "objective", "mur_edge_node", "mur_edge_link", "mur_cloud_link", "solve_ms"]
    print("\t".join(cols))
    for row in rows:
        print(
            "\t".join(
                f"{row.get(c):.6g}" if isinstance(row.get(c), float) else str(row.get(c, ""))
                for c in cols
            )
        )
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "compare.json").write_text(
            json.dumps(rows, indent=2) + "\n", encoding="utf-8"
        )
    return 0


def cmd_validate(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        g = load_topology(text)
    except TopologyError as exc:
        print(f"invalid topology: {exc}", file=sys.stderr)
        return 1
    print(
        f"ok: {len(g.clients)} clients, {len(g.edges)} edge nodes, "
        f"{len(g.clouds)} cloud nodes, {len(g.links)} links"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flmesh", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario sweep")
    p.add_argument("--scenario", help="scenario file (key = value lines)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--topology", help="builtin name or topology file")
    p.add_argument("--strategy", choices=["hfel", "hfel_mesh"])
    p.add_argument("--xi", type=int, nargs="+")
    p.add_argument("--lambda", dest="lambda_", type=float, nargs="+")
    p.add_argument("--seeds", type=int, nargs="+")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("compare", help="exact optimizer vs heuristics on one batch")
    p.add_argument("--topology", help="builtin name or topology file")
    p.add_argument("--requests", type=int, default=4)
    p.add_argument("--clients", type=int, nargs=2, default=[4, 10])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--xi", type=int, nargs="+")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("validate", help="validate a topology file")
    p.add_argument("file")
    p.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
