"""Parameter vectors, losses, gradients and local projected gradient descent.

Two model families are supported, both with closed-form gradients:

* linear regression with the mean squared residual ``mean((Xw - y)^2) / 2``
  (the 1/2 keeps the Hessian equal to ``X^T X / n``);
* multinomial logistic regression with mean cross-entropy. Parameters are a
  flattened ``d x K`` weight matrix in row-major order; there is no separate
  bias, append a constant feature if one is wanted.

Parameter vectors are plain 1-D float64 numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ConfigError, DimensionError, DivergenceError, EmptyDataError

LINEAR = "linear"
LOGISTIC = "logistic"

#: Training aborts once the loss exceeds this value.
DIVERGENCE_LIMIT = 1e12


class Split(NamedTuple):
    """Feature matrix and targets of one client split."""

    X: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class ModelKind:
    """Model family plus its shape metadata."""

    family: str
    n_features: int
    n_classes: int = 1

    def __post_init__(self):
        if self.family not in (LINEAR, LOGISTIC):
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")
        if self.family == LOGISTIC and self.n_classes < 2:
            raise ConfigError("logistic model needs n_classes >= 2")
        if self.family == LINEAR and self.n_classes != 1:
            raise ConfigError("linear model has n_classes == 1")

    @classmethod
    def linear(cls, d: int) -> "ModelKind":
        return cls(LINEAR, d)

    @classmethod
    def logistic(cls, d: int, k: int) -> "ModelKind":
        return cls(LOGISTIC, d, k)

    @property
    def dim(self) -> int:
        return self.n_features * self.n_classes

    @property
    def is_classifier(self) -> bool:
        return self.family == LOGISTIC

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dim)

    def to_dict(self) -> dict:
        return {"family": self.family, "n_features": self.n_features, "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelKind":
        return cls(d["family"], int(d["n_features"]), int(d.get("n_classes", 1)))


@dataclass(frozen=True)
class TrainConfig:
    """Step count, step size, projection diameter, local steps and trim level.

    ``diameter=None`` means the parameter set is unbounded. ``batch_size=None``
    is full-batch gradient descent.
    """

    steps: int = 280
    learning_rate: float = 0.1
    diameter: float | None = None
    local_steps: int = 1
    trim_level: float = 0.0
    batch_size: int | None = None
    batch_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps!r}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.diameter is not None and not self.diameter > 0:
            raise ConfigError(f"diameter must be positive or None, got {self.diameter!r}")
        if self.local_steps < 1:
            raise ConfigError("local_steps must be >= 1")
        if not 0 <= self.trim_level < 0.5:
            raise ConfigError(f"trim_level must be in [0, 0.5), got {self.trim_level!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1 or None")

    def replace(self, **changes) -> "TrainConfig":
        from dataclasses import replace

        return replace(self, **changes)


def _check(kind: ModelKind, params: np.ndarray, data: Split) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    params = np.asarray(params, dtype=float)
    if params.shape != (kind.dim,):
        raise DimensionError(f"params have shape {params.shape}, model expects ({kind.dim},)")
    X, y = np.asarray(data.X, dtype=float), np.asarray(data.y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataError("split is empty")
    if X.shape[1] != kind.n_features:
        raise DimensionError(f"data has {X.shape[1]} features, model expects {kind.n_features}")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"targets have shape {y.shape}, expected ({X.shape[0]},)")
    return params, X, y


def _logistic_parts(kind: ModelKind, params, X, y):
    W = params.reshape(kind.n_features, kind.n_classes)
    logits = X @ W
    labels = y.astype(np.intp)
    lse = logsumexp(logits, axis=1)
    per_sample = lse - logits[np.arange(len(labels)), labels]
    return W, logits, labels, per_sample


def loss(kind: ModelKind, params: np.ndarray, data: Split) -> float:
    """Mean per-sample loss of ``params`` on ``data``."""
    params, X, y = _check(kind, params, data)
    if kind.family == LINEAR:
        r = X @ params - y
        return float(0.5 * np.mean(r * r))
    return float(np.mean(_logistic_parts(kind, params, X, y)[3]))


def gradient(kind: ModelKind, params: np.ndarray, data: Split) -> np.ndarray:
    """Gradient of the mean loss with respect to ``params``."""
    return loss_and_gradient(kind, params, data)[1]


def loss_and_gradient(kind: ModelKind, params: np.ndarray, data: Split) -> tuple[float, np.ndarray]:
    params, X, y = _check(kind, params, data)
    n = X.shape[0]
    if kind.family == LINEAR:
        r = X @ params - y
        return float(0.5 * np.mean(r * r)), X.T @ r / n
    W, logits, labels, per_sample = _logistic_parts(kind, params, X, y)
    p = softmax(logits, axis=1)
    p[np.arange(n), labels] -= 1.0
    return float(np.mean(per_sample)), (X.T @ p / n).ravel()


def accuracy(kind: ModelKind, params: np.ndarray, data: Split) -> float:
    """Fraction of correctly classified samples (classifiers only)."""
    params, X, y = _check(kind, params, data)
    if not kind.is_classifier:
        raise ConfigError("accuracy is defined for classifiers only")
    pred = np.argmax(X @ params.reshape(kind.n_features, kind.n_classes), axis=1)
    return float(np.mean(pred == y.astype(np.intp)))


def project(params: np.ndarray, diameter: float | None) -> np.ndarray:
    """Euclidean projection onto the origin-centred ball of the given diameter."""
    if diameter is None or math.isinf(diameter):
        return params
    radius = diameter / 2.0
    norm = float(np.linalg.norm(params))
    if norm <= radius:
        return params
    return params * (radius / norm)


def smoothness(data: Split) -> float:
    """Largest eigenvalue of ``X^T X / n``: the smoothness constant of the squared loss."""
    X = np.asarray(data.X, dtype=float)
    # the n x n Gram matrix shares its nonzero spectrum and is smaller when n < d
    G = X @ X.T if X.shape[0] < X.shape[1] else X.T @ X
    return float(np.linalg.eigvalsh(G / X.shape[0])[-1])


def _guard(value: float) -> None:
    if not math.isfinite(value) or value > DIVERGENCE_LIMIT:
        raise DivergenceError(f"loss diverged to {value!r}")


def gd_steps(
    kind: ModelKind,
    w0: np.ndarray,
    data: Split,
    steps: int,
    learning_rate: float,
    diameter: float | None = None,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> np.ndarray:
    """Run ``steps`` projected GD steps; the building block of every trainer."""
    w = np.array(w0, dtype=float)
    n = len(data.y)
    for step in range(steps):
        batch = data
        if batch_size is not None and batch_size < n:
            idx = np.sort(rng.choice(n, size=batch_size, replace=False))
            batch = Split(data.X[idx], data.y[idx])
        value, g = loss_and_gradient(kind, w, batch)
        _guard(value)
        if callback is not None:
            callback(step, w, value)
        w = project(w - learning_rate * g, diameter)
    if not np.all(np.isfinite(w)):
        raise DivergenceError("parameters became non-finite")
    _guard(loss(kind, w, data))
    return w


def local_train(
    kind: ModelKind,
    w0: np.ndarray,
    data: Split,
    cfg: TrainConfig,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> np.ndarray:
    """``cfg.steps`` steps of projected gradient descent on one client's empirical risk.

    ``callback(step, params, loss)`` is invoked before every update.
    """
    if len(data.y) == 0:
        raise EmptyDataError("cannot train on an empty split")
    rng = np.random.default_rng(cfg.batch_seed) if cfg.batch_size is not None else None
    return gd_steps(
        kind, w0, data, cfg.steps, cfg.learning_rate, cfg.diameter, cfg.batch_size, rng, callback
    )
