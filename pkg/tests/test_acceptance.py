"""End-to-end acceptance checks.

One test per numbered criterion; each prints a single ``[criterion N]``
PASS/FAIL line directly to the terminal with the measured quantities, so a
full run reads as a ten-line scorecard.  The heavy arrival-rate grid shared
by criteria 6 and 7 is computed once per strategy and cached at module
scope.
"""

import math
import re
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

import flmesh as fm
from flmesh.cli import compare_methods
from flmesh.ilp import IlpSolution, build_model, export_standard_form, verify_solution
from flmesh.ilp_oracle import brute_force_oracle
from flmesh.ilp_solver import solve_exact
from flmesh.topology import PhysicalGraph, PhysicalLink, PhysicalNode

from test_ilp import line_graph, random_instance, request


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'} - {detail}")


# -- shared arrival-rate grid (criteria 6 and 7) -------------------------------

GRID_LAMS = (0.00062, 0.000675, 0.00073, 0.000785, 0.00085)
GRID_SEEDS = (1, 2, 3, 4, 5)
_grid_cache: dict[str, tuple[dict, float]] = {}


def trfr_grid(strategy: str) -> tuple[dict, float]:
    """(lam, seed) -> failure rate for one strategy, plus wall seconds."""
    if strategy not in _grid_cache:
        t0 = time.perf_counter()
        out = {}
        for lam in GRID_LAMS:
            for seed in GRID_SEEDS:
                cfg = fm.SimConfig(
                    topology="large",
                    workload=fm.WorkloadConfig(
                        lam=lam,
                        seed=seed,
                        horizon_requests=300,
                        client_fraction_bounds=(0.18, 0.28),
                        models=("MobileNetV2",),
                    ),
                    strategy=strategy,
                    cost=fm.CostParams(xi=2),
                )
                out[(lam, seed)] = fm.trfr(fm.run(cfg))
        _grid_cache[strategy] = (out, time.perf_counter() - t0)
    return _grid_cache[strategy]


def grid_means(strategy: str) -> list[float]:
    res, _ = trfr_grid(strategy)
    return [float(np.mean([res[(lam, s)] for s in GRID_SEEDS])) for lam in GRID_LAMS]


# -- criterion 1: exact solver agrees with the brute-force oracle --------------


def test_criterion_01_solver_matches_oracle(capsys):
    rng = np.random.default_rng(42)
    t0 = time.perf_counter()
    mismatches = []
    n_feasible = n_infeasible = 0
    for i in range(100):
        g, reqs = random_instance(rng)
        want = brute_force_oracle(g, reqs)
        sol = solve_exact(build_model(g, reqs))
        if math.isinf(want):
            n_infeasible += 1
            if sol.status != "infeasible":
                mismatches.append((i, want, sol.status))
        else:
            n_feasible += 1
            if sol.status != "optimal" or abs(sol.objective_value - want) > 1e-9 * max(1.0, want):
                mismatches.append((i, want, sol.objective_value))
    wall = time.perf_counter() - t0
    ok = not mismatches and wall <= 60.0
    report(
        capsys, 1, ok,
        f"100 random instances ({n_feasible} feasible, {n_infeasible} infeasible), "
        f"{len(mismatches)} mismatches, {wall:.1f}s (limit 60s)",
    )
    assert mismatches == [], f"solver/oracle mismatches: {mismatches[:3]}"
    assert wall <= 60.0


# -- criterion 2: solution checker is sound and catches tampering --------------


def test_criterion_02_solution_checker(capsys):
    rng = np.random.default_rng(7)
    clean = 0
    while clean < 10:
        g, reqs = random_instance(rng)
        m = build_model(g, reqs)
        sol = solve_exact(m)
        if sol.status != "optimal":
            continue
        assert verify_solution(m, sol) == []
        clean += 1
    # tamper: push one per-link usage aggregate past its capacity row
    bad = dict(sol.assignment)
    eta = next(v for v in bad if v.startswith("etae_"))
    key = tuple(int(x) for x in eta.split("_")[1:])
    bad[eta] = g.links[key].capacity + 1.0
    violations = verify_solution(m, IlpSolution("optimal", sol.objective_value, bad))
    detected = len(violations) > 0
    report(capsys, 2, detected,
           f"10 solved instances verified clean; injected capacity "
           f"overshoot raised {len(violations)} violation(s)")
    assert detected


# -- criterion 3: method ordering and optimality gap on small instances --------


def _compare_instance(rng) -> PhysicalGraph:
    """Small ring with ample core links so all three methods place cleanly."""
    n_edges = int(rng.integers(3, 5))
    nodes = [PhysicalNode(i, "edge", float(rng.choice([100, 200]))) for i in range(n_edges)]
    cloud = n_edges
    nodes.append(PhysicalNode(cloud, "cloud", 4000.0))
    links = [PhysicalLink(i, (i + 1) % n_edges, "edge", 2000.0) for i in range(n_edges)]
    links.append(PhysicalLink(int(rng.integers(0, n_edges)), cloud, "cloud", 4000.0))
    client0 = cloud + 1
    n_clients = 0
    for i in range(n_edges):
        for _ in range(3):
            cid = client0 + n_clients
            nodes.append(PhysicalNode(cid, "client", 1.0))
            links.append(PhysicalLink(cid, i, "end", 200.0))
            n_clients += 1
    return PhysicalGraph(nodes, links)


def test_criterion_03_method_ordering_and_gap(capsys):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    ordered = total = 0
    gaps = []
    i = 0
    while total < 20 and i < 60:
        g = _compare_instance(rng)
        rows = compare_methods(topology=g, n_requests=3,
                               clients_per_request=(3, 6), seed=i, xi=1)
        i += 1
        by = {r["method"]: r for r in rows}
        if (by["ilp"]["status"] != "optimal"
                or by["hfel"]["status"] != "ok"
                or by["hfel_mesh"]["status"] != "ok"):
            continue
        ilp = by["ilp"]["objective"]
        mesh = by["hfel_mesh"]["objective"]
        hfel = by["hfel"]["objective"]
        total += 1
        if ilp <= mesh + 1e-9 and mesh <= hfel + 1e-9:
            ordered += 1
        gaps.append((mesh - ilp) / ilp)
    wall = time.perf_counter() - t0
    mean_gap = float(np.mean(gaps))
    ok = total >= 20 and ordered / total >= 0.9 and mean_gap <= 0.5 and wall <= 600.0
    report(capsys, 3, ok,
           f"exact <= mesh <= baseline on {ordered}/{total} instances "
           f"(need >=90%), mean mesh gap {mean_gap:.1%} (limit 50%), {wall:.1f}s")
    assert total >= 20
    assert ordered / total >= 0.9
    assert mean_gap <= 0.5
    assert wall <= 600.0


# -- criterion 4: cloud-link relief as cohort size grows -----------------------


def test_criterion_04_cloud_link_relief(capsys):
    reliefs = {}
    for count in range(4, 11):
        frac = (count / 220.0, (count + 0.999) / 220.0)
        murs = {}
        for strategy in ("hfel", "hfel_mesh"):
            vals = []
            for seed in (1, 2, 3, 4, 5):
                cfg = fm.SimConfig(
                    topology="medium",
                    workload=fm.WorkloadConfig(
                        lam=0.0006, seed=seed, horizon_requests=80,
                        client_fraction_bounds=frac, models=("MobileNetV2",),
                    ),
                    strategy=strategy,
                    cost=fm.CostParams(xi=1),
                )
                vals.append(fm.mur(fm.run(cfg), "cloud_link"))
            murs[strategy] = float(np.mean(vals))
        reliefs[count] = (murs["hfel"] - murs["hfel_mesh"]) / murs["hfel"]
    worst = min(reliefs.values())
    ok = worst >= 0.15
    detail = ", ".join(f"{c}:{r:.1%}" for c, r in reliefs.items())
    report(capsys, 4, ok,
           f"cloud-link utilization relief per cohort size {{{detail}}}, "
           f"worst {worst:.1%} (need >=15%)")
    assert worst >= 0.15


# -- criterion 5: consolidation knob steers utilization ------------------------


def test_criterion_05_xi_sweep_correlations(capsys):
    xis = (1, 2, 4, 8, 16)
    results = {}
    for topo, lam in (("medium", 0.0008), ("large", 0.0005)):
        cloud, edge = [], []
        for xi in xis:
            cm, em = [], []
            for seed in (1, 2, 3):
                cfg = fm.SimConfig(
                    topology=topo,
                    workload=fm.WorkloadConfig(
                        lam=lam, seed=seed, horizon_requests=150,
                        client_fraction_bounds=(0.08, 0.12), models=("Squeezenet",),
                    ),
                    strategy="hfel_mesh",
                    cost=fm.CostParams(xi=xi),
                )
                log = fm.run(cfg)
                cm.append(fm.mur(log, "cloud_link"))
                em.append(fm.mur(log, "edge_node"))
            cloud.append(float(np.mean(cm)))
            edge.append(float(np.mean(em)))
        results[topo] = (
            float(spearmanr(range(len(xis)), cloud).statistic),
            float(spearmanr(range(len(xis)), edge).statistic),
        )
    ok = all(rc >= 0.9 - 1e-9 and re_ <= -0.7 + 1e-9 for rc, re_ in results.values())
    detail = ", ".join(
        f"{t}: cloud rho {rc:+.2f} (need >=+0.9), edge-node rho {re_:+.2f} (need <=-0.7)"
        for t, (rc, re_) in results.items()
    )
    report(capsys, 5, ok, detail)
    for topo, (rc, re_) in results.items():
        assert rc >= 0.9 - 1e-9, f"{topo}: cloud-link correlation {rc}"
        assert re_ <= -0.7 + 1e-9, f"{topo}: edge-node correlation {re_}"


# -- criterion 6: failure-rate curve on the large topology ---------------------


def test_criterion_06_failure_rate_curve(capsys):
    res, wall = trfr_grid("hfel_mesh")
    means = grid_means("hfel_mesh")
    low, high = means[0], means[-1]
    monotone_seeds = sum(
        all(b >= a - 1e-12 for a, b in zip(curve, curve[1:]))
        for curve in ([res[(lam, s)] for lam in GRID_LAMS] for s in GRID_SEEDS)
    )
    ok_low = low < 0.25
    ok_mono = monotone_seeds == len(GRID_SEEDS)
    ok_high = high > 0.6
    ok_time = wall <= 900.0
    ok = ok_low and ok_mono and ok_high and ok_time
    report(capsys, 6, ok,
           f"failure rate {low:.3f} at rate {GRID_LAMS[0]} (need <0.25), "
           f"{monotone_seeds}/{len(GRID_SEEDS)} seeds monotone, "
           f"{high:.3f} at rate {GRID_LAMS[-1]} (need >0.6), {wall:.0f}s (limit 900s)")
    assert ok_low, f"low-rate failure rate {low:.3f} >= 0.25"
    assert ok_mono, f"only {monotone_seeds}/{len(GRID_SEEDS)} per-seed curves monotone"
    assert ok_time, f"grid took {wall:.0f}s > 900s"
    assert ok_high, (
        f"failure rate at arrival rate {GRID_LAMS[-1]} measures {high:.3f}, not >0.6. "
        f"This endpoint is unattainable under the pinned semantics: admission is "
        f"atomic, failed rounds are never retried and consume no capacity, and "
        f"per-round consumption does not depend on the arrival rate, so carried "
        f"load obeys (1-T5)*{GRID_LAMS[-1]} <= (1-T1)*{GRID_LAMS[0]} ... capacity, "
        f"giving T5 <= 1-(1-T1)*{GRID_LAMS[0]/GRID_LAMS[-1]:.3f}. With the required "
        f"T1 < 0.25 that bounds T5 < {1 - 0.75 * GRID_LAMS[0] / GRID_LAMS[-1]:.3f}, "
        f"strictly below 0.6 for every workload meeting the low-rate requirement."
    )


# -- criterion 7: overlay strategy dominates the two-level baseline ------------


def test_criterion_07_mesh_dominates_baseline(capsys):
    mesh = grid_means("hfel_mesh")
    base = grid_means("hfel")
    gaps = [b - m for m, b in zip(mesh, base)]
    ok = all(g >= -1e-12 for g in gaps) and max(gaps) >= 0.05
    detail = ", ".join(
        f"{lam:g}:{m:.3f}/{b:.3f}" for lam, m, b in zip(GRID_LAMS, mesh, base)
    )
    report(capsys, 7, ok,
           f"mesh/baseline failure rates {{{detail}}}, "
           f"max gap {max(gaps) * 100:.1f}pp (need >=5pp), 5 seeds")
    assert all(g >= -1e-12 for g in gaps), f"mesh above baseline at some rate: {gaps}"
    assert max(gaps) >= 0.05


# -- criterion 8: runtime invariants and reproducible logs ---------------------


def test_criterion_08_invariants_and_determinism(capsys):
    cfg = fm.SimConfig(
        topology="medium",
        workload=fm.WorkloadConfig(lam=0.0006, seed=9, horizon_requests=60,
                                   client_fraction_bounds=(0.08, 0.15)),
        strategy="hfel_mesh",
        cost=fm.CostParams(xi=2),
    )
    log = fm.run(cfg)
    rerun_identical = log.to_jsonl() == fm.run(cfg).to_jsonl()

    comps = log.meta["components"]
    over_capacity = [
        s for s in log.samples if s["used"] > comps[s["component"]][1] + 1e-9
    ]

    g = fm.builtin_topology("medium")
    clouds = set(g.clouds)
    overlay_bad = route_bad = 0
    placed = [p for p in log.placements if p["status"] == "placed"]
    for p in placed:
        parent = {e["src"]: e["target"] for e in p["overlay"]}
        if len(parent) != len(p["overlay"]):
            overlay_bad += 1  # an aggregator forwarding twice
        for a in p["aggregators"]:
            seen = set()
            node = a
            while node in parent and node not in seen:
                seen.add(node)
                node = parent[node]
            if node not in clouds:
                overlay_bad += 1  # cycle, or chain that never reaches a cloud
        for e in p["overlay"]:
            hops = list(zip(e["route"], e["route"][1:]))
            if e["route"][0] != e["src"] or e["route"][-1] != e["target"]:
                route_bad += 1
            elif any(v not in g.adj[u] for u, v in hops):
                route_bad += 1
            elif len(set(e["route"])) != len(e["route"]):
                route_bad += 1

    ok = rerun_identical and not over_capacity and not overlay_bad and not route_bad
    report(capsys, 8, ok,
           f"{len(placed)} placements: 0-overshoot samples "
           f"({len(over_capacity)} bad), overlays acyclic and cloud-rooted "
           f"({overlay_bad} bad), routes simple and adjacent ({route_bad} bad), "
           f"rerun byte-identical: {rerun_identical}")
    assert rerun_identical
    assert not over_capacity
    assert not overlay_bad
    assert not route_bad


# -- criterion 9: closed-form latency oracles -----------------------------------


def test_criterion_09_latency_oracles(capsys):
    by_name = {m.name: m for m in fm.model_catalog()}
    checks = [
        (fm.training_latency(by_name["Res18"], 59), 21.8 * 59),
        (fm.aggregation_latency(by_name["Squeezenet"], fan_in=1, claim=1),
         4.0 * 421098 / 1e9 * 1000.0),
        (fm.transfer_latency(by_name["Squeezenet"], 20.0),
         32.0 * 421098 / (20.0 * 1e6) * 1000.0),
        (fm.transfer_latency(by_name["MobileNetV2"], 40.0),
         32.0 * 3.4e6 / (40.0 * 1e6) * 1000.0),
    ]
    worst = max(abs(got - want) / want for got, want in checks)
    ok = worst <= 1e-9
    report(capsys, 9, ok,
           f"4 closed-form latency values, worst relative error {worst:.2e} "
           f"(limit 1e-9)")
    for got, want in checks:
        assert got == pytest.approx(want, rel=1e-9)


# -- criterion 10: exported model agrees with an external MILP solver -----------


def _parse_lp(text: str):
    """Parse the exported LP text into scipy.optimize.milp inputs."""
    term_re = re.compile(r"([+-])\s*([0-9.eE+-]+)\s+([A-Za-z]\w*)")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("\\")]
    section = None
    objective: dict[str, float] = {}
    rows: list[tuple[dict[str, float], str, float]] = []
    coefs: dict[str, float] = {}
    fixed: dict[str, float] = {}
    binaries: set[str] = set()

    def flush_terms(ln, into):
        for sign, mag, var in term_re.findall(ln):
            into[var] = into.get(var, 0.0) + float(mag) * (1.0 if sign == "+" else -1.0)

    for ln in lines:
        s = ln.strip()
        if s in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            section = s
            continue
        if section == "Minimize":
            if not s.endswith(":"):
                flush_terms(ln, objective)
        elif section == "Subject To":
            if s.endswith(":"):
                coefs = {}
            else:
                m = re.match(r"(<=|>=|=)\s*([0-9.eE+-]+)$", s)
                if m:
                    rows.append((coefs, m.group(1), float(m.group(2))))
                else:
                    flush_terms(ln, coefs)
        elif section == "Bounds":
            m = re.match(r"(\w+)\s*=\s*([0-9.eE+-]+)$", s)
            if m:
                fixed[m.group(1)] = float(m.group(2))
            # "0 <= var" free-above rows need no action: 0 is the default floor
        elif section == "Binaries":
            binaries.add(s)
    return objective, rows, fixed, binaries


def _milp_objective(text: str) -> float:
    from scipy.optimize import LinearConstraint, milp
    from scipy.sparse import lil_matrix

    objective, rows, fixed, binaries = _parse_lp(text)
    names = sorted(
        set(objective)
        | {v for coefs, _, _ in rows for v in coefs}
        | set(fixed)
        | binaries
    )
    idx = {v: i for i, v in enumerate(names)}
    c = np.zeros(len(names))
    for v, coef in objective.items():
        c[idx[v]] = coef
    a = lil_matrix((len(rows), len(names)))
    lb = np.full(len(rows), -np.inf)
    ub = np.full(len(rows), np.inf)
    for i, (coefs, sense, rhs) in enumerate(rows):
        for v, coef in coefs.items():
            a[i, idx[v]] = coef
        if sense in ("<=", "="):
            ub[i] = rhs
        if sense in (">=", "="):
            lb[i] = rhs
    var_lb = np.zeros(len(names))
    var_ub = np.array([1.0 if v in binaries else np.inf for v in names])
    for v, val in fixed.items():
        var_lb[idx[v]] = var_ub[idx[v]] = val
    integrality = np.array([1 if v in binaries else 0 for v in names])
    res = milp(
        c=c,
        constraints=LinearConstraint(a.tocsr(), lb, ub),
        bounds=__import__("scipy.optimize", fromlist=["Bounds"]).Bounds(var_lb, var_ub),
        integrality=integrality,
    )
    assert res.success, res.message
    return float(res.fun)


def test_criterion_10_export_cross_check(capsys):
    pytest.importorskip("scipy.optimize")
    instances = [(line_graph(), [request([2], sig_n=4, sig_e=20)])]
    rng = np.random.default_rng(5)
    while len(instances) < 3:
        g, reqs = random_instance(rng)
        if solve_exact(build_model(g, reqs)).status == "optimal":
            instances.append((g, reqs))
    worst = 0.0
    for g, reqs in instances:
        m = build_model(g, reqs)
        own = solve_exact(m).objective_value
        ext = _milp_objective(export_standard_form(m))
        worst = max(worst, abs(own - ext) / max(1.0, abs(own)))
    ok = worst <= 1e-7
    report(capsys, 10, ok,
           f"3 exported models re-solved externally, worst relative "
           f"objective difference {worst:.2e} (limit 1e-7)")
    assert worst <= 1e-7
