"""SR-FCA: threshold-graph initialisation followed by successive refinement.

``one_shot`` trains every client locally, links clients whose models are
within ``lam`` of each other, and keeps correlation clusters with at least
``t`` members. Each ``refine`` round trains one robust model per cluster
(trimmed-mean GD), sends every client to its nearest cluster model, and merges
clusters whose models are within ``lam``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .aggregation import mean, trimmed_mean_gd
from .data import FederatedDataset, derive_rng, resample_clients
from .distance import DistanceKind, Entity, concat_splits, distance, pairwise_matrix
from .errors import ConfigError
from .graphclust import (
    UNASSIGNED,
    Clustering,
    correlation_cluster,
    filter_min_size,
    threshold_graph,
)
from .models import TrainConfig, local_train


@dataclass(frozen=True)
class SrfcaConfig:
    """Hyper-parameters of SR-FCA.

    ``lam=None`` picks the threshold from the pairwise distances of the local
    models (midpoint of the widest gap). ``final_fit`` retrains one model per
    final cluster so the reported models match the reported clustering.
    """

    lam: float | None = None
    t: int = 2
    rounds: int = 1
    metric: DistanceKind = DistanceKind.L2
    train: TrainConfig = field(default_factory=TrainConfig)
    resample_per_refine: bool = False
    participation: float = 1.0
    seed: int = 0
    cross_loss_split: str = "train"
    final_fit: bool = True

    def __post_init__(self):
        object.__setattr__(self, "metric", DistanceKind(self.metric))
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lam must be positive")
        if self.t < 1:
            raise ConfigError("t must be >= 1")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if not 0 < self.participation <= 1:
            raise ConfigError("participation must be in (0, 1]")
        if self.cross_loss_split not in ("train", "test"):
            raise ConfigError("cross_loss_split must be 'train' or 'test'")


@dataclass
class ClusterState:
    clustering: Clustering
    cluster_models: dict[int, np.ndarray]
    node_models: dict[int, np.ndarray]
    lam: float

    def __post_init__(self):
        if sorted(self.cluster_models) != list(range(self.clustering.n_clusters)):
            raise ConfigError("cluster models must be keyed by the clustering's cluster ids")


@dataclass
class SrfcaResult:
    state: ClusterState
    trace: list[Clustering]

    @property
    def clustering(self) -> Clustering:
        return self.state.clustering


def default_lambda(M: np.ndarray) -> float:
    """Midpoint of the widest gap between consecutive sorted pairwise distances."""
    vals = np.unique(M[np.triu_indices(M.shape[0], k=1)])
    if len(vals) == 1:
        return float(vals[0]) + 1.0 if vals[0] > 0 else 1.0
    gaps = np.diff(vals)
    k = int(np.argmax(gaps))
    return float((vals[k] + vals[k + 1]) / 2)


def train_node_models(fd: FederatedDataset, cfg: TrainConfig) -> dict[int, np.ndarray]:
    w0 = fd.kind.zeros()
    return {c.client_id: local_train(fd.kind, w0, c.train, cfg) for c in fd.clients}


def _client_entities(fd: FederatedDataset, models: Mapping[int, np.ndarray], cfg: SrfcaConfig) -> list[Entity]:
    return [Entity(models[c.client_id], c.split(cfg.cross_loss_split)) for c in fd.clients]


def _cluster_entities(
    fd: FederatedDataset, clustering: Clustering, models: Mapping[int, np.ndarray], cfg: SrfcaConfig
) -> list[Entity]:
    out = []
    for k, members in enumerate(clustering.groups()):
        data = None
        if cfg.metric is DistanceKind.CROSS_LOSS:
            data = concat_splits([fd.clients[i].split(cfg.cross_loss_split) for i in members])
        out.append(Entity(models[k], data))
    return out


def one_shot(
    fd: FederatedDataset,
    cfg: SrfcaConfig,
    node_models: Mapping[int, np.ndarray] | None = None,
) -> ClusterState:
    """Local training, threshold graph, correlation clustering and size filtering."""
    if node_models is None:
        node_models = train_node_models(fd, cfg.train)
    node_models = dict(node_models)
    if fd.m == 1:
        clustering = filter_min_size(Clustering((0,)), cfg.t)
        return ClusterState(clustering, {0: node_models[0].copy()}, node_models, cfg.lam or 1.0)
    M = pairwise_matrix(_client_entities(fd, node_models, cfg), cfg.metric, fd.kind)
    lam = cfg.lam if cfg.lam is not None else default_lambda(M)
    g = threshold_graph(M, lam)
    clustering = filter_min_size(correlation_cluster(g, derive_rng(cfg.seed, "one-shot")), cfg.t)
    models = {k: mean([node_models[i] for i in members]) for k, members in enumerate(clustering.groups())}
    return ClusterState(clustering, models, node_models, lam)


def _nearest(state: ClusterState, fd: FederatedDataset, cfg: SrfcaConfig) -> list[int]:
    clusters = _cluster_entities(fd, state.clustering, state.cluster_models, cfg)
    nodes = _client_entities(fd, state.node_models, cfg)
    labels = []
    for node in nodes:
        d = [distance(node, cl, cfg.metric, fd.kind) for cl in clusters]
        labels.append(int(np.argmin(d)))  # first minimum: ties go to the smaller id
    return labels


def recluster(state: ClusterState, fd: FederatedDataset, cfg: SrfcaConfig) -> Clustering:
    """Send every client, unassigned ones included, to its nearest cluster model."""
    return filter_min_size(Clustering.from_labels(_nearest(state, fd, cfg)), cfg.t)


def _carry_models(raw: list[int], clustering: Clustering, models: Mapping[int, np.ndarray]) -> dict[int, np.ndarray]:
    return {k: models[raw[members[0]]] for k, members in enumerate(clustering.groups())}


def merge(state: ClusterState, fd: FederatedDataset, cfg: SrfcaConfig, round_: int = 0) -> ClusterState:
    """Merge clusters whose models lie within ``lam``; merged model is the plain mean."""
    c = state.clustering
    k = c.n_clusters
    if k >= 2:
        M = pairwise_matrix(_cluster_entities(fd, c, state.cluster_models, cfg), cfg.metric, fd.kind)
        groups = correlation_cluster(threshold_graph(M, state.lam), derive_rng(cfg.seed, "merge", round_)).groups()
        # number super-clusters by their smallest component so unmerged ids stay put
        groups = sorted(groups, key=min)
    else:
        groups = [[0]] if k == 1 else []
    super_of = {old: s for s, olds in enumerate(groups) for old in olds}
    labels = [UNASSIGNED if v == UNASSIGNED else super_of[v] for v in c.labels]
    merged = {s: mean([state.cluster_models[o] for o in olds]) for s, olds in enumerate(groups)}
    filtered = filter_min_size(Clustering.from_labels(labels), cfg.t)
    models = _carry_models(labels, filtered, merged)
    return ClusterState(filtered, models, state.node_models, state.lam)


def train_cluster_models(
    fd: FederatedDataset, clustering: Clustering, cfg: SrfcaConfig, round_: int
) -> dict[int, np.ndarray]:
    models = {}
    for k, members in enumerate(clustering.groups()):
        rng = derive_rng(cfg.seed, "participation", round_, k) if cfg.participation < 1 else None
        splits = [fd.clients[i].train for i in members]
        models[k] = trimmed_mean_gd(fd.kind, splits, None, cfg.train, cfg.participation, rng)
    return models


def refine(state: ClusterState, fd: FederatedDataset, cfg: SrfcaConfig, round_: int = 1) -> ClusterState:
    """One round of trimmed-mean GD per cluster, then recluster, then merge."""
    node_models = state.node_models
    if cfg.resample_per_refine:
        fd = resample_clients(fd, round_)
        node_models = train_node_models(fd, cfg.train)
    trained = ClusterState(
        state.clustering, train_cluster_models(fd, state.clustering, cfg, round_), node_models, state.lam
    )
    raw = _nearest(trained, fd, cfg)
    reclustered = filter_min_size(Clustering.from_labels(raw), cfg.t)
    # from_labels/filter keep relative order, so raw ids map by any member
    carried = _carry_models(raw, reclustered, trained.cluster_models)
    return merge(ClusterState(reclustered, carried, node_models, state.lam), fd, cfg, round_)


def sr_fca(fd: FederatedDataset, cfg: SrfcaConfig, node_models: Mapping[int, np.ndarray] | None = None) -> SrfcaResult:
    state = one_shot(fd, cfg, node_models)
    trace = [state.clustering]
    for r in range(1, cfg.rounds + 1):
        state = refine(state, fd, cfg, r)
        trace.append(state.clustering)
    if cfg.final_fit and cfg.rounds > 0:
        state = replace(state, cluster_models=train_cluster_models(fd, state.clustering, cfg, cfg.rounds + 1))
    return SrfcaResult(state, trace)


def assign_for_evaluation(state: ClusterState, fd: FederatedDataset, cfg: SrfcaConfig) -> list[int]:
    """Cluster used to evaluate each client; unassigned clients take their nearest cluster."""
    nearest = None
    out = []
    for i, v in enumerate(state.clustering.labels):
        if v == UNASSIGNED:
            if nearest is None:
                nearest = _nearest(state, fd, cfg)
            v = nearest[i]
        out.append(v)
    return out


def write_trace(result: SrfcaResult, directory: str | Path) -> None:
    """One clustering CSV per round plus ``summary.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for r, c in enumerate(result.trace):
        c.to_csv(directory / f"round_{r}.csv")
    summary = {
        "lambda": result.state.lam,
        "rounds": [
            {"round": r, "n_clusters": c.n_clusters, "sizes": c.sizes(), "unassigned": len(c.unassigned)}
            for r, c in enumerate(result.trace)
        ],
    }
    (directory / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
