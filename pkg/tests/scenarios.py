"""Small reusable experiment set-ups for the tests."""

from __future__ import annotations

import numpy as np

from fedclust.data import SyntheticSpec, gen_mixture_linreg
from fedclust.graphclust import Clustering
from fedclust.models import TrainConfig
from fedclust.srfca import ClusterState, SrfcaConfig, train_node_models


def planted_impurity_case(seed: int, m: int = 40, d: int = 50, n: int = 200, impurity: float = 0.2):
    """Noiseless two-cluster data plus a clustering where each cluster holds
    ``impurity`` of its size from the other cluster.

    Returns ``(fd, state, cfg)`` ready for ``refine``.
    """
    spec = SyntheticSpec(m=m, n=n, d=d, clusters=2, sigma=0.0, seed=seed)
    fd = gen_mixture_linreg(spec)
    truth = list(fd.ground_truth.labels)
    half = m // 2
    swap = int(round(impurity * half))
    rng = np.random.default_rng([seed, 777])
    a = rng.choice(np.arange(half), swap, replace=False)
    b = rng.choice(np.arange(half, m), swap, replace=False)
    planted = list(truth)
    for i in a:
        planted[i] = 1
    for i in b:
        planted[i] = 0
    train = TrainConfig(steps=280, learning_rate=0.1, trim_level=0.25)
    lam = float(np.linalg.norm(fd.cluster_models[0] - fd.cluster_models[1])) / 2
    cfg = SrfcaConfig(lam=lam, t=2, rounds=1, train=train, seed=seed)
    node_models = train_node_models(fd, train)
    clustering = Clustering.from_labels(planted)
    models = {k: np.zeros(d) for k in range(clustering.n_clusters)}
    return fd, ClusterState(clustering, models, node_models, lam), cfg
