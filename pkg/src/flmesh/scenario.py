"""Scenario files: one text file describing a sweep of simulation runs.

Format: ``key = value`` lines, ``#`` comments.  List-valued keys take
comma-separated entries.  Keys mirror the config dataclasses:

    topology = medium | large | <path>
    strategies = hfel_mesh,hfel
    xi_values = 1,2,4,8,16
    lambda_values = 0.00062,0.00085
    seeds = 0,1,2,3,4
    horizon_requests = 100
    client_fraction_low = 0.25
    client_fraction_high = 0.5
    models = Squeezenet,Res18        # optional subset
    node_weight_client = 1.0         # cost-weight overrides
    link_weight_cloud = 10.0
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .allocators import CostParams, STRATEGIES
from .engine import SimConfig
from .workload import WorkloadConfig, model_catalog


@dataclass
class Scenario:
    topology: str = "medium"
    strategies: list[str] = field(default_factory=lambda: ["hfel_mesh"])
    xi_values: list[int] = field(default_factory=lambda: [4])
    lambda_values: list[float] = field(default_factory=lambda: [0.00073])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    horizon_requests: int = 100
    client_fraction: tuple[float, float] = (0.25, 0.5)
    models: tuple[str, ...] = tuple(m.name for m in model_catalog())
    node_weights: dict[str, float] = field(default_factory=dict)
    link_weights: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if not (self.strategies and self.xi_values and self.lambda_values and self.seeds):
            raise ValueError("sweep axes must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")

    def run_configs(self) -> list[SimConfig]:
        self.validate()
        out = []
        for strategy in self.strategies:
            for xi in self.xi_values:
                for lam in self.lambda_values:
                    for seed in self.seeds:
                        out.append(
                            SimConfig(
                                topology=self.topology,
                                workload=WorkloadConfig(
                                    lam=lam,
                                    seed=seed,
                                    horizon_requests=self.horizon_requests,
                                    client_fraction_bounds=self.client_fraction,
                                    models=self.models,
                                ),
                                strategy=strategy,
                                cost=CostParams(xi=xi),
                                node_weights=dict(self.node_weights) or None,
                                link_weights=dict(self.link_weights) or None,
                            )
                        )
        return out


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    frac = list(sc.client_fraction)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"scenario line {lineno}: expected key = value ({raw!r})")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key == "topology":
                sc.topology = value
            elif key in ("strategy", "strategies"):
                sc.strategies = [v.strip() for v in value.split(",") if v.strip()]
            elif key in ("xi", "xi_values"):
                sc.xi_values = [int(v) for v in value.split(",")]
            elif key in ("lambda", "lambda_values"):
                sc.lambda_values = [float(v) for v in value.split(",")]
            elif key == "seeds":
                sc.seeds = [int(v) for v in value.split(",")]
            elif key == "horizon_requests":
                sc.horizon_requests = int(value)
            elif key == "client_fraction_low":
                frac[0] = float(value)
            elif key == "client_fraction_high":
                frac[1] = float(value)
            elif key == "models":
                sc.models = tuple(v.strip() for v in value.split(","))
            elif key.startswith("node_weight_"):
                sc.node_weights[key.removeprefix("node_weight_")] = float(value)
            elif key.startswith("link_weight_"):
                sc.link_weights[key.removeprefix("link_weight_")] = float(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"scenario line {lineno}: {exc}") from None
    sc.client_fraction = (frac[0], frac[1])
    sc.validate()
    return sc
