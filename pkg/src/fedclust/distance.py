"""Dissimilarities between models: l2 on parameters and the symmetric cross loss.

The cross loss is not a metric (no triangle inequality); only symmetry and a
zero diagonal are guaranteed for its pairwise matrices.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .models import ModelKind, Split, loss


class DistanceKind(str, enum.Enum):
    L2 = "l2"
    CROSS_LOSS = "cross-loss"


class Entity(NamedTuple):
    """A model plus the data that represents its owner (needed by the cross loss)."""

    params: np.ndarray
    data: Split | None = None


def dist_l2(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def dist_cross_loss(kind: ModelKind, w_a: np.ndarray, data_a: Split, w_b: np.ndarray, data_b: Split) -> float:
    """Average of a's loss under b's model and b's loss under a's model."""
    return 0.5 * (loss(kind, w_b, data_a) + loss(kind, w_a, data_b))


def distance(a: Entity, b: Entity, metric: DistanceKind | str, kind: ModelKind | None = None) -> float:
    metric = DistanceKind(metric)
    if metric is DistanceKind.L2:
        return dist_l2(a.params, b.params)
    if kind is None or a.data is None or b.data is None:
        raise ConfigError("cross-loss distance needs a model kind and data for both entities")
    return dist_cross_loss(kind, a.params, a.data, b.params, b.data)


def pairwise_matrix(
    entities: Sequence[Entity], metric: DistanceKind | str, kind: ModelKind | None = None
) -> np.ndarray:
    """Symmetric matrix of pairwise distances with an exact zero diagonal."""
    n = len(entities)
    if n < 2:
        raise ConfigError("pairwise matrix needs at least two entities")
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            M[i, j] = M[j, i] = distance(entities[i], entities[j], metric, kind)
    return M


def concat_splits(splits: Sequence[Split]) -> Split:
    """Union of several clients' data, used to represent a cluster."""
    return Split(np.vstack([s.X for s in splits]), np.concatenate([s.y for s in splits]))


# Gaussian linear models: KL between the conditionals y|x of two clients.


def kl_gaussian_conditional(w_i: np.ndarray, w_j: np.ndarray, x: np.ndarray, sigma: float) -> np.ndarray:
    """``KL(N(<x,w_i>, s^2) || N(<x,w_j>, s^2))`` for each row of ``x``."""
    diff = np.atleast_2d(x) @ (np.asarray(w_i) - np.asarray(w_j))
    return diff**2 / (2.0 * sigma**2)


def expected_kl_monte_carlo(
    w_i: np.ndarray,
    w_j: np.ndarray,
    sigma: float,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 200_000,
) -> float:
    """Monte Carlo estimate of ``E_x KL(p(y_i|x) || p(y_j|x))`` with ``x ~ N(0, I_d)``."""
    d = len(w_i)
    total, done = 0.0, 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        total += float(np.sum(kl_gaussian_conditional(w_i, w_j, rng.standard_normal((k, d)), sigma)))
        done += k
    return total / n_samples


def expected_kl_closed_form(w_i: np.ndarray, w_j: np.ndarray, sigma: float) -> float:
    """Exact ``E_x KL``: ``||w_i - w_j||^2 / (2 sigma^2)`` since ``E <x, v>^2 = ||v||^2``."""
    v = np.asarray(w_i, dtype=float) - np.asarray(w_j, dtype=float)
    return float(v @ v) / (2.0 * sigma**2)
