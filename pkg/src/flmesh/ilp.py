"""Exact optimization model of the joint placement problem.

The model minimizes the cumulative weighted capacity Sum(alpha_n eta_n) +
Sum(beta_e eta_e) claimed by a fixed batch of training-round requests.  Per
request, aggregation happens at each source edge (an edge node with at
least one participating client), every participating client's end link is
crossed once, and the aggregated updates must reach the cloud over the core
graph; link usage is counted once per request per link regardless of how
many update flows share it.

The model object keeps the instance data (graph, requests, index sets)
cheap and builds the full constraint-row matrix lazily: only verification
and export need rows, and row counts grow quickly with instance size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .topology import CLOUD, PhysicalGraph, link_key
from .workload import TrainingRoundRequest, request_link_load


@dataclass
class Row:
    """One linear constraint: sum(coefs[v] * value[v]) <sense> rhs."""

    name: str
    family: str
    coefs: dict[str, float]
    sense: str  # "<=", ">=", "=="
    rhs: float


@dataclass
class IlpModel:
    g: PhysicalGraph
    requests: list[TrainingRoundRequest]
    cloud: int
    sources: dict[int, tuple[int, ...]]  # request id -> source edges
    core_nodes: tuple[int, ...]  # edge nodes + cloud
    core_links: tuple[tuple[int, int], ...]
    aux_nodes: tuple[int, ...]  # aggregator candidates + cloud
    aux_links: tuple[tuple[int, int], ...]  # directed
    _rows: list[Row] | None = None
    _variables: dict[str, float] | None = None  # name -> objective coefficient

    def variables(self) -> dict[str, float]:
        if self._variables is None:
            self._build_rows()
        return self._variables

    def rows(self) -> list[Row]:
        if self._rows is None:
            self._build_rows()
        return self._rows

    def fixed_variables(self) -> dict[str, float]:
        """Variables pinned by the formulation (acceptance and forced terms)."""
        fixed: dict[str, float] = {}
        for r in self.requests:
            fixed[f"z_k{r.id}"] = 1.0
            for s in self.sources[r.id]:
                fixed[f"zeta_n{s}_k{r.id}"] = 1.0
        return fixed

    # -- naming helpers -------------------------------------------------------

    @staticmethod
    def q_name(a: int, b: int, p: int, k: int) -> str:
        return f"q_{a}_{b}_p{p}_k{k}"

    @staticmethod
    def u_name(a: int, b: int, k: int) -> str:
        return f"u_{a}_{b}_k{k}"

    @staticmethod
    def x_name(i: int, j: int, a: int, b: int, k: int) -> str:
        return f"x_{i}_{j}_e{a}_{b}_k{k}"

    @staticmethod
    def mu_node_name(n: int, k: int) -> str:
        return f"mun_{n}_k{k}"

    @staticmethod
    def mu_link_name(l: tuple[int, int], k: int) -> str:
        return f"mue_{l[0]}_{l[1]}_k{k}"

    @staticmethod
    def eta_node_name(n: int) -> str:
        return f"etan_{n}"

    @staticmethod
    def eta_link_name(l: tuple[int, int]) -> str:
        return f"etae_{l[0]}_{l[1]}"

    # -- row construction -----------------------------------------------------

    def _build_rows(self) -> None:
        g = self.g
        rows: list[Row] = []
        variables: dict[str, float] = {}

        def var(name: str, obj: float = 0.0) -> str:
            variables.setdefault(name, obj)
            return name

        # eta variables carry the objective
        for n in sorted(set(g.edges) | {self.cloud}):
            var(self.eta_node_name(n), g.alpha(n))
        used_links = set(self.core_links)
        for r in self.requests:
            for c in r.clients:
                used_links.add(link_key(c, g.attached_edge(c)))
        for l in sorted(used_links):
            var(self.eta_link_name(l), g.beta(l))

        for r in self.requests:
            k = r.id
            sig_e = request_link_load(r)
            var(f"z_k{k}")
            for s in self.sources[k]:
                var(f"zeta_n{s}_k{k}")
            for n in self.aux_nodes:
                var(self.mu_node_name(n, k))
            for l in self.core_links:
                var(self.mu_link_name(l, k))

            # auxiliary-graph flow per node pair (source edge -> cloud)
            for p in self.sources[k]:
                for (a, b) in self.aux_links:
                    var(self.q_name(a, b, p, k))
                for n in self.aux_nodes:
                    coefs: dict[str, float] = {}
                    for (a, b) in self.aux_links:
                        if a == n:
                            coefs[self.q_name(a, b, p, k)] = coefs.get(self.q_name(a, b, p, k), 0.0) + 1.0
                        if b == n:
                            coefs[self.q_name(a, b, p, k)] = coefs.get(self.q_name(a, b, p, k), 0.0) - 1.0
                    if n == p:
                        coefs[f"z_k{k}"] = -1.0
                        rhs = 0.0
                    elif n == self.cloud:
                        coefs[f"z_k{k}"] = 1.0
                        rhs = 0.0
                    else:
                        rhs = 0.0
                    rows.append(Row(f"auxflow_n{n}_p{p}_k{k}", "aux_flow", coefs, "==", rhs))

            # aux link use = OR over pairs
            for (a, b) in self.aux_links:
                u = var(self.u_name(a, b, k))
                for p in self.sources[k]:
                    rows.append(
                        Row(
                            f"useLB_{a}_{b}_p{p}_k{k}",
                            "aux_use",
                            {u: 1.0, self.q_name(a, b, p, k): -1.0},
                            ">=",
                            0.0,
                        )
                    )
                rows.append(
                    Row(
                        f"useUB_{a}_{b}_k{k}",
                        "aux_use",
                        {u: 1.0, **{self.q_name(a, b, p, k): -1.0 for p in self.sources[k]}},
                        "<=",
                        0.0,
                    )
                )
                # aggregation/use marker at the auxiliary link's target node
                rows.append(
                    Row(
                        f"munode_{a}_{b}_k{k}",
                        "mu_node",
                        {self.mu_node_name(b, k): 1.0, u: -1.0},
                        ">=",
                        0.0,
                    )
                )

            # physical realization flow per aux link
            arcs = [(i, j) for (i, j) in self.core_links] + [
                (j, i) for (i, j) in self.core_links
            ]
            for (a, b) in self.aux_links:
                u = self.u_name(a, b, k)
                for (i, j) in arcs:
                    var(self.x_name(i, j, a, b, k))
                for n in self.core_nodes:
                    coefs = {}
                    for (i, j) in arcs:
                        if i == n:
                            coefs[self.x_name(i, j, a, b, k)] = 1.0
                        elif j == n:
                            coefs[self.x_name(i, j, a, b, k)] = -1.0
                    if n == a:
                        coefs[u] = -1.0
                    elif n == b:
                        coefs[u] = 1.0
                    rows.append(
                        Row(f"physflow_n{n}_e{a}_{b}_k{k}", "phys_flow", coefs, "==", 0.0)
                    )
                # physical link use marker (either direction)
                for (i, j) in self.core_links:
                    for (s, t) in ((i, j), (j, i)):
                        rows.append(
                            Row(
                                f"mulink_{s}_{t}_e{a}_{b}_k{k}",
                                "mu_link",
                                {
                                    self.mu_link_name((i, j), k): 1.0,
                                    self.x_name(s, t, a, b, k): -1.0,
                                },
                                ">=",
                                0.0,
                            )
                        )

        # eta definitions and capacities
        for n in sorted(set(g.edges) | {self.cloud}):
            coefs = {self.eta_node_name(n): 1.0}
            for r in self.requests:
                if n in self.sources[r.id]:
                    coefs[f"zeta_n{n}_k{r.id}"] = -float(r.node_demand)
            rows.append(Row(f"etadef_n{n}", "eta_node_def", coefs, "==", 0.0))
            rows.append(
                Row(
                    f"cap_n{n}",
                    "node_capacity",
                    {self.eta_node_name(n): 1.0},
                    "<=",
                    g.nodes[n].capacity,
                )
            )
        for l in sorted(used_links):
            coefs = {self.eta_link_name(l): 1.0}
            rhs = 0.0
            for r in self.requests:
                sig_e = request_link_load(r)
                if l in self.core_links:
                    coefs[self.mu_link_name(l, r.id)] = -sig_e
                else:  # end link, forced once per participating client
                    for c in r.clients:
                        if link_key(c, self.g.attached_edge(c)) == l:
                            rhs += sig_e
            rows.append(Row(f"etadef_l{l[0]}_{l[1]}", "eta_link_def", coefs, "==", rhs))
            rows.append(
                Row(
                    f"cap_l{l[0]}_{l[1]}",
                    "link_capacity",
                    {self.eta_link_name(l): 1.0},
                    "<=",
                    g.links[l].capacity,
                )
            )

        self._rows = rows
        self._variables = variables


def build_model(
    g: PhysicalGraph, reqs: list[TrainingRoundRequest], candidates: set[int] | None = None
) -> IlpModel:
    """Assemble the model instance (rows are built lazily on demand)."""
    if len(g.clouds) != 1:
        raise ValueError("the exact model supports exactly one cloud node")
    cloud = g.clouds[0]
    sources = {
        r.id: tuple(sorted({g.attached_edge(c) for c in r.clients})) for r in reqs
    }
    candidates = set(candidates) if candidates is not None else set(g.edges)
    aux_nodes = tuple(sorted(candidates | {cloud}))
    aux_links = tuple(
        (a, b) for a in aux_nodes for b in aux_nodes if a != b
    )
    core_nodes = tuple(sorted(set(g.edges) | {cloud}))
    core_links = tuple(
        l for l in sorted(g.links) if g.nodes[l[0]].kind != "client" and g.nodes[l[1]].kind != "client"
    )
    for r in reqs:
        for s in sources[r.id]:
            if s not in candidates:
                raise ValueError(f"source edge {s} of request {r.id} is not a candidate")
    return IlpModel(
        g=g,
        requests=list(reqs),
        cloud=cloud,
        sources=sources,
        core_nodes=core_nodes,
        core_links=core_links,
        aux_nodes=aux_nodes,
        aux_links=aux_links,
    )


@dataclass
class IlpSolution:
    status: str  # "optimal" | "infeasible" | "limit_reached"
    objective_value: float = math.inf
    assignment: dict[str, float] = field(default_factory=dict)


@dataclass
class Violation:
    row: str
    family: str
    residual: float

    def __str__(self) -> str:
        return f"{self.family}:{self.row} residual={self.residual:+g}"


def verify_solution(m: IlpModel, s: IlpSolution, tol: float = 1e-6) -> list[Violation]:
    """Evaluate every constraint row against a full variable assignment."""
    out: list[Violation] = []
    values = s.assignment
    for name in m.variables():
        if name not in values:
            raise ValueError(f"assignment missing variable {name}")
    for row in m.rows():
        lhs = sum(c * values[v] for v, c in row.coefs.items())
        resid = lhs - row.rhs
        ok = (
            (row.sense == "<=" and resid <= tol)
            or (row.sense == ">=" and resid >= -tol)
            or (row.sense == "==" and abs(resid) <= tol)
        )
        if not ok:
            out.append(Violation(row.name, row.family, resid))
    for name, fixed in m.fixed_variables().items():
        if abs(values.get(name, 0.0) - fixed) > tol:
            out.append(Violation(f"fix_{name}", "fixed_variable", values.get(name, 0.0) - fixed))
    return out


def objective_of(m: IlpModel, assignment: dict[str, float]) -> float:
    return sum(coef * assignment.get(name, 0.0) for name, coef in m.variables().items())


def export_standard_form(m: IlpModel) -> str:
    """Emit the model as CPLEX LP-format text (minimization, all binaries
    except the eta accounting variables, which are continuous and pinned by
    their defining rows)."""
    variables = m.variables()
    rows = m.rows()
    fixed = m.fixed_variables()
    out: list[str] = ["\\ flmesh exact placement model", "Minimize", " obj:"]
    terms = [
        f" {'+' if coef >= 0 else '-'} {abs(coef):.17g} {name}"
        for name, coef in sorted(variables.items())
        if coef
    ]
    if not terms:
        terms = [" 0 dummy"]
    out.extend(_wrap(terms))
    out.append("Subject To")
    for row in rows:
        parts = []
        for vname in sorted(row.coefs):
            coef = row.coefs[vname]
            if coef == 0:
                continue
            parts.append(f" {'+' if coef >= 0 else '-'} {abs(coef):.17g} {vname}")
        sense = {"<=": "<=", ">=": ">=", "==": "="}[row.sense]
        out.append(f" {row.name}:")
        out.extend(_wrap(parts))
        out.append(f"  {sense} {row.rhs:.17g}")
    out.append("Bounds")
    for name in sorted(variables):
        if name in fixed:
            out.append(f" {name} = {fixed[name]:.17g}")
        elif name.startswith("eta"):
            out.append(f" 0 <= {name}")
    out.append("Binaries")
    for name in sorted(variables):
        if not name.startswith("eta") and name not in fixed:
            out.append(f" {name}")
    out.append("End")
    return "\n".join(out) + "\n"


def _wrap(terms: list[str], width: int = 8) -> list[str]:
    return ["%s" % "".join(terms[i : i + width]) for i in range(0, len(terms), width)]
