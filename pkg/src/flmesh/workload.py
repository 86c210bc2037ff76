"""Training-round request generation.

Each request is one synchronous federated round: a random subset of client
devices train locally, edge aggregators combine their updates, and the
merged model is reported to the cloud.  Arrivals follow a Poisson process;
per-request demands and model choice are sampled independently, all driven
by one seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "numpy-pcg64"

# Per-request demand ranges (inclusive); these are workload invariants, not
# tunables: every generated request falls inside them.
NODE_DEMAND_RANGE = (1, 8)  # computing units, sigma_n
LINK_DEMAND_RANGE = (20, 40)  # Mbps per flow, sigma_e
DATASET_RANGE = (59, 118)  # images


@dataclass(frozen=True)
class ModelArch:
    name: str
    per_image_train_ms: float  # local training time per image on a client
    weight_count: int  # parameter count


# Reference model catalog (training cost and size per architecture).
_MODELS = (
    ModelArch("Squeezenet", 26.4, 421_098),
    ModelArch("MobileNetV2", 38.4, 3_400_000),
    ModelArch("MNas", 35.7, 3_900_000),
    ModelArch("GoogleNet", 35.9, 6_797_700),
    ModelArch("Res18", 21.8, 11_689_512),
    ModelArch("Res50", 77.8, 25_557_032),
)


def model_catalog() -> list[ModelArch]:
    return list(_MODELS)


@dataclass
class WorkloadConfig:
    lam: float = 0.00073  # arrivals per millisecond
    seed: int = 0
    horizon_requests: int | None = 100  # stop after this many arrivals
    horizon_ms: float | None = None  # or after this much simulated time
    client_fraction_bounds: tuple[float, float] = (0.25, 0.5)
    models: tuple[str, ...] = tuple(m.name for m in _MODELS)

    def validate(self) -> None:
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        lo, hi = self.client_fraction_bounds
        if not (0 < lo <= hi <= 1):
            raise ValueError("client_fraction_bounds must satisfy 0 < low <= high <= 1")
        if self.horizon_requests is None and self.horizon_ms is None:
            raise ValueError("need a horizon (requests or ms)")
        known = {m.name for m in _MODELS}
        unknown = set(self.models) - known
        if unknown:
            raise ValueError(f"unknown model architectures: {sorted(unknown)}")


@dataclass(frozen=True)
class TrainingRoundRequest:
    id: int
    arrival_ms: float
    clients: tuple[int, ...]
    arch: ModelArch
    dataset_size: int  # images per participating client
    node_demand: int  # sigma_n, computing units per aggregation point
    link_demand: int  # sigma_e, Mbps per model-update flow


def request_source_edges(g, req: TrainingRoundRequest) -> tuple[int, ...]:
    """Edge nodes with at least one participating client, sorted."""
    return tuple(sorted({g.attached_edge(c) for c in req.clients}))


def request_link_load(r: TrainingRoundRequest) -> float:
    """The single per-flow bandwidth demand all modules must agree on."""
    return float(r.link_demand)


def generate_batch(
    g,
    n_requests: int,
    clients_per_request: tuple[int, int] = (4, 10),
    seed: int = 0,
    models: tuple[str, ...] | None = None,
) -> list[TrainingRoundRequest]:
    """A static batch of simultaneous requests (for optimizer comparisons)."""
    rng = np.random.default_rng(seed)
    by_name = {m.name: m for m in _MODELS}
    names = models or tuple(m.name for m in _MODELS)
    clients = np.array(g.clients)
    lo, hi = clients_per_request
    out = []
    for rid in range(n_requests):
        k = int(rng.integers(lo, hi + 1))
        chosen = np.sort(rng.choice(clients, size=k, replace=False))
        out.append(
            TrainingRoundRequest(
                id=rid,
                arrival_ms=0.0,
                clients=tuple(int(c) for c in chosen),
                arch=by_name[names[int(rng.integers(len(names)))]],
                dataset_size=int(rng.integers(DATASET_RANGE[0], DATASET_RANGE[1] + 1)),
                node_demand=int(rng.integers(NODE_DEMAND_RANGE[0], NODE_DEMAND_RANGE[1] + 1)),
                link_demand=int(rng.integers(LINK_DEMAND_RANGE[0], LINK_DEMAND_RANGE[1] + 1)),
            )
        )
    return out


def generate_requests(g, cfg: WorkloadConfig) -> list[TrainingRoundRequest]:
    """Poisson arrivals with uniformly sampled round parameters.

    Deterministic for a given (graph, config): the client subset is drawn
    without replacement from the graph's sorted client list.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    by_name = {m.name: m for m in _MODELS}
    clients = np.array(g.clients)
    lo = max(1, math.ceil(cfg.client_fraction_bounds[0] * len(clients)))
    hi = max(lo, math.floor(cfg.client_fraction_bounds[1] * len(clients)))
    requests: list[TrainingRoundRequest] = []
    t = 0.0
    while True:
        if cfg.horizon_requests is not None and len(requests) >= cfg.horizon_requests:
            break
        t += rng.exponential(1.0 / cfg.lam)
        if cfg.horizon_ms is not None and t > cfg.horizon_ms:
            break
        k = int(rng.integers(lo, hi + 1))
        chosen = np.sort(rng.choice(clients, size=k, replace=False))
        arch = by_name[cfg.models[int(rng.integers(len(cfg.models)))]]
        requests.append(
            TrainingRoundRequest(
                id=len(requests),
                arrival_ms=float(t),
                clients=tuple(int(c) for c in chosen),
                arch=arch,
                dataset_size=int(rng.integers(DATASET_RANGE[0], DATASET_RANGE[1] + 1)),
                node_demand=int(rng.integers(NODE_DEMAND_RANGE[0], NODE_DEMAND_RANGE[1] + 1)),
                link_demand=int(rng.integers(LINK_DEMAND_RANGE[0], LINK_DEMAND_RANGE[1] + 1)),
            )
        )
    return requests
