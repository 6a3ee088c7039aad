"""Comparison systems: per-client local models, one global FedAvg model, and IFCA."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregation import participants
from .data import FederatedDataset, derive_rng
from .errors import ConfigError
from .graphclust import Clustering
from .models import TrainConfig, accuracy, gd_steps, local_train, loss


@dataclass
class BaselineResult:
    """Per-client evaluation models plus the unweighted mean test metrics."""

    client_models: list[np.ndarray]
    test_loss: float
    test_accuracy: float | None
    clustering: Clustering | None = None
    cluster_models: list[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class IfcaConfig:
    k: int = 2
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    participation: float = 1.0
    init_scale: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("IFCA needs k >= 1")
        if not 0 < self.participation <= 1:
            raise ConfigError("participation must be in (0, 1]")
        if not self.init_scale > 0:
            raise ConfigError("init_scale must be positive")


def evaluate_clients(fd: FederatedDataset, client_models: Sequence[np.ndarray]) -> tuple[float, float | None]:
    """Mean over clients of each client's test loss (and accuracy) under its own model."""
    losses = [loss(fd.kind, w, c.test) for c, w in zip(fd.clients, client_models)]
    acc = None
    if fd.kind.is_classifier:
        acc = float(np.mean([accuracy(fd.kind, w, c.test) for c, w in zip(fd.clients, client_models)]))
    return float(np.mean(losses)), acc


def _local_update(fd: FederatedDataset, i: int, w: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    return gd_steps(fd.kind, w, fd.clients[i].train, cfg.local_steps, cfg.learning_rate, cfg.diameter)


def train_local(fd: FederatedDataset, cfg: TrainConfig) -> BaselineResult:
    w0 = fd.kind.zeros()
    models = [local_train(fd.kind, w0, c.train, cfg) for c in fd.clients]
    return BaselineResult(models, *evaluate_clients(fd, models))


def fedavg_global(
    fd: FederatedDataset,
    cfg: TrainConfig,
    participation: float = 1.0,
    seed: int = 0,
    w0: np.ndarray | None = None,
) -> BaselineResult:
    """``cfg.steps`` rounds of local GD on sampled clients followed by plain model averaging."""
    w = fd.kind.zeros() if w0 is None else np.array(w0, dtype=float)
    rng = derive_rng(seed, "participation") if participation < 1 else None
    for _ in range(cfg.steps):
        idx = participants(fd.m, participation, rng)
        w = np.mean(np.vstack([_local_update(fd, i, w, cfg) for i in idx]), axis=0)
    return BaselineResult([w] * fd.m, *evaluate_clients(fd, [w] * fd.m), cluster_models=[w])


def _assign(fd: FederatedDataset, i: int, models: Sequence[np.ndarray]) -> int:
    train = fd.clients[i].train
    return int(np.argmin([loss(fd.kind, w, train) for w in models]))


def ifca(
    fd: FederatedDataset,
    icfg: IfcaConfig,
    init_models: Sequence[np.ndarray] | None = None,
) -> BaselineResult:
    """Iterative federated clustering with model averaging.

    Each round every participating client picks the cluster model with the
    lowest train loss, runs local steps on it, and the server averages the
    returned models per cluster. A cluster that receives no clients keeps its
    previous model. Without ``init_models`` the k models are drawn uniformly
    from ``[-init_scale, init_scale]``.
    """
    cfg = icfg.train
    if init_models is None:
        rng = derive_rng(icfg.seed, "ifca-init")
        models = [rng.uniform(-icfg.init_scale, icfg.init_scale, fd.kind.dim) for _ in range(icfg.k)]
    else:
        if len(init_models) != icfg.k:
            raise ConfigError(f"expected {icfg.k} initial models, got {len(init_models)}")
        models = [np.array(w, dtype=float) for w in init_models]
    prng = derive_rng(icfg.seed, "participation") if icfg.participation < 1 else None
    for _ in range(cfg.steps):
        returned: list[list[np.ndarray]] = [[] for _ in range(icfg.k)]
        for i in participants(fd.m, icfg.participation, prng):
            j = _assign(fd, i, models)
            returned[j].append(_local_update(fd, i, models[j], cfg))
        models = [np.mean(np.vstack(r), axis=0) if r else models[j] for j, r in enumerate(returned)]
    raw = [_assign(fd, i, models) for i in range(fd.m)]
    client_models = [models[j] for j in raw]
    return BaselineResult(
        client_models,
        *evaluate_clients(fd, client_models),
        clustering=Clustering.from_labels(raw),
        cluster_models=models,
    )
