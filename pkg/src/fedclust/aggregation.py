"""Coordinate-wise trimmed mean and robust per-cluster federated training."""

from __future__ import annotations

import math
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigError, DivergenceError, EmptyDataError, TrimError
from .models import DIVERGENCE_LIMIT, ModelKind, Split, TrainConfig, gd_steps, gradient, project

#: A member is either honest data or a callable standing in for the client.
#: With ``local_steps == 1`` the callable maps the shared iterate to a gradient,
#: otherwise to the member's returned local model.
Member = Union[Split, Callable[[np.ndarray], np.ndarray]]


def trim_count(beta: float, J: int) -> int:
    if not 0 <= beta < 0.5:
        raise TrimError(f"trim level must be in [0, 0.5), got {beta!r}")
    k = int(math.floor(beta * J))
    if J - 2 * k < 1:
        raise TrimError(f"trimming {k} from each side of {J} values leaves nothing")
    return k


def _stack(vectors: Sequence[np.ndarray]) -> np.ndarray:
    if len(vectors) == 0:
        raise EmptyDataError("need at least one vector")
    try:
        return np.vstack([np.asarray(v, dtype=float) for v in vectors])
    except ValueError:
        raise ConfigError("vectors have unequal dimensions") from None


def mean(vectors: Sequence[np.ndarray]) -> np.ndarray:
    return np.mean(_stack(vectors), axis=0)


def trmean(vectors: Sequence[np.ndarray], beta: float) -> np.ndarray:
    """Drop the ``floor(beta*J)`` smallest and largest values per coordinate, average the rest.

    Dividing by the retained count (rather than ``(1 - 2 beta) J``) keeps
    ``beta = 0`` identical to :func:`mean` and the result inside the range of
    retained values.
    """
    V = _stack(vectors)
    k = trim_count(beta, V.shape[0])
    if k == 0:
        return np.mean(V, axis=0)
    return np.mean(np.sort(V, axis=0)[k : V.shape[0] - k], axis=0)


def participants(J: int, fraction: float, rng: np.random.Generator | None) -> np.ndarray:
    """Sorted indices of the members taking part in one round."""
    if not 0 < fraction <= 1:
        raise ConfigError("participation fraction must be in (0, 1]")
    if fraction == 1 or rng is None:
        return np.arange(J)
    k = max(1, math.ceil(fraction * J))
    return np.sort(rng.choice(J, size=k, replace=False))


def _update(kind: ModelKind, member: Member, w: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    if callable(member):
        return np.asarray(member(w), dtype=float)
    if cfg.local_steps == 1:
        return gradient(kind, w, member)
    return gd_steps(kind, w, member, cfg.local_steps, cfg.learning_rate, cfg.diameter)


def trimmed_mean_gd(
    kind: ModelKind,
    members: Sequence[Member],
    w0: np.ndarray | None,
    cfg: TrainConfig,
    participation: float = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Robust federated training of one cluster model over ``cfg.steps`` rounds.

    With one local step the server applies ``w <- proj(w - lr * TrMean(grads))``;
    with several it replaces ``w`` by the trimmed mean of the members' local
    models. ``members`` should be ordered by client id.
    """
    if len(members) == 0:
        raise EmptyDataError("cluster has no members")
    w = kind.zeros() if w0 is None else np.array(w0, dtype=float)
    for _ in range(cfg.steps):
        idx = participants(len(members), participation, rng)
        updates = [_update(kind, members[i], w, cfg) for i in idx]
        agg = trmean(updates, cfg.trim_level)
        if cfg.local_steps == 1:
            w = project(w - cfg.learning_rate * agg, cfg.diameter)
        else:
            w = project(agg, cfg.diameter)
        if not np.all(np.isfinite(w)) or np.linalg.norm(w) > DIVERGENCE_LIMIT:
            raise DivergenceError("cluster iterate diverged")
    return w
