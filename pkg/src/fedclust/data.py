"""Federated datasets: synthetic mixtures, transform splits, CSV persistence.

A federated dataset directory looks like::

    meta.json            m, d, model kind, K, ground-truth presence, split sizes
    client_<id>.csv      header x0..x{d-1},y; one row per sample
    ground_truth.csv     optional; header client_id,cluster_id

Rows are stored train-first: the first ``n_train`` rows of each client file are
its train split, the remainder its test split.
"""

from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataFormatError, NotSyntheticError
from .graphclust import Clustering
from .models import ModelKind, Split

DEFAULT_TRAIN_FRACTION = 0.8


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Independent stream keyed by ``(seed, *keys)``; strings are hashed with CRC32."""
    words = [int(seed)]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.default_rng(np.random.SeedSequence(words))


@dataclass
class ClientDataset:
    client_id: int
    features: np.ndarray
    targets: np.ndarray
    n_train: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets)
        n = self.features.shape[0]
        if self.features.ndim != 2 or n < 1:
            raise ConfigError(f"client {self.client_id}: need a non-empty 2-D feature matrix")
        if self.targets.shape != (n,):
            raise ConfigError(f"client {self.client_id}: {n} rows but {self.targets.shape} targets")
        if not 0 <= self.n_train <= n:
            raise ConfigError(f"client {self.client_id}: n_train={self.n_train} outside [0, {n}]")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError(f"client {self.client_id}: non-finite feature values")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def train(self) -> Split:
        return Split(self.features[: self.n_train], self.targets[: self.n_train])

    @property
    def test(self) -> Split:
        return Split(self.features[self.n_train :], self.targets[self.n_train :])

    def split(self, which: str) -> Split:
        if which == "train":
            return self.train
        if which == "test":
            return self.test
        raise ConfigError(f"unknown split {which!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Mixture of linear regressions: ``y = <x, w_c> + N(0, sigma^2)``.

    Cluster models have iid Bernoulli(0.5) coordinates in {0, 1}; features are
    iid standard normal; clients are divided equally among clusters
    (client ``i`` belongs to cluster ``i // (m // C)``).
    """

    m: int = 100
    n: int = 100
    d: int = 1000
    clusters: int = 2
    sigma: float = 0.001
    train_fraction: float = DEFAULT_TRAIN_FRACTION
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1 or self.d < 1 or self.clusters < 1:
            raise ConfigError("m, n, d and clusters must all be >= 1")
        if self.m % self.clusters:
            raise ConfigError(f"m={self.m} cannot be divided equally into {self.clusters} clusters")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError("train_fraction must be in (0, 1]")

    @property
    def n_train(self) -> int:
        return max(1, int(math.floor(self.train_fraction * self.n)))

    def cluster_of(self, client_id: int) -> int:
        return client_id // (self.m // self.clusters)

    def cluster_models(self) -> np.ndarray:
        rng = derive_rng(self.seed, "cluster-models")
        return rng.binomial(1, 0.5, size=(self.clusters, self.d)).astype(float)


@dataclass
class FederatedDataset:
    clients: list[ClientDataset]
    kind: ModelKind
    ground_truth: Clustering | None = None
    synthetic: SyntheticSpec | None = None
    cluster_models: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.clients = sorted(self.clients, key=lambda c: c.client_id)
        ids = [c.client_id for c in self.clients]
        if ids != list(range(len(ids))):
            raise ConfigError("client ids must be contiguous 0..m-1 in order")
        for c in self.clients:
            if c.features.shape[1] != self.kind.n_features:
                raise ConfigError(
                    f"client {c.client_id} has {c.features.shape[1]} features, "
                    f"model expects {self.kind.n_features}"
                )
        if self.ground_truth is not None:
            if self.ground_truth.m != len(ids) or self.ground_truth.unassigned:
                raise ConfigError("ground truth must assign every client")

    @property
    def m(self) -> int:
        return len(self.clients)

    def subset(self, ids: Sequence[int]) -> list[ClientDataset]:
        return [self.clients[i] for i in ids]


def _client_sample(spec: SyntheticSpec, models: np.ndarray, client_id: int, round_: int) -> ClientDataset:
    rng = derive_rng(spec.seed, client_id, "client-data", round_)
    X = rng.standard_normal((spec.n, spec.d))
    noise = rng.standard_normal(spec.n) * spec.sigma
    y = X @ models[spec.cluster_of(client_id)] + noise
    return ClientDataset(client_id, X, y, spec.n_train)


def gen_mixture_linreg(spec: SyntheticSpec) -> FederatedDataset:
    """Generate the synthetic mixture-of-linear-regressions federation."""
    return _synthesize(spec, round_=0)


def _synthesize(spec: SyntheticSpec, round_: int) -> FederatedDataset:
    models = spec.cluster_models()
    clients = [_client_sample(spec, models, i, round_) for i in range(spec.m)]
    truth = Clustering(tuple(spec.cluster_of(i) for i in range(spec.m)))
    return FederatedDataset(clients, ModelKind.linear(spec.d), truth, spec, models)


def resample_clients(fd: FederatedDataset, round_: int, spec: SyntheticSpec | None = None) -> FederatedDataset:
    """Fresh data for every client from its own cluster model; round 0 is the original draw."""
    spec = spec or fd.synthetic
    if spec is None:
        raise NotSyntheticError("dataset was not synthetically generated; cannot resample")
    return _synthesize(spec, round_)


# -- transform splits ---------------------------------------------------------

TRANSFORMS = ("identity", "invert", "rot90", "rot180", "rot270")


def _side(width: int) -> int:
    side = math.isqrt(width)
    if side * side != width:
        raise ConfigError(f"feature length {width} is not a perfect square; cannot rotate")
    return side


def apply_transform(features: np.ndarray, name: str) -> np.ndarray:
    """Apply one named transform to each row of flattened square images.

    Rotations turn the image clockwise by 90, 180 or 270 degrees; ``invert``
    maps pixel ``x`` to ``1 - x``.
    """
    X = np.asarray(features, dtype=float)
    if name == "identity":
        return X.copy()
    if name == "invert":
        return 1.0 - X
    if name in ("rot90", "rot180", "rot270"):
        side = _side(X.shape[1])
        quarter_turns = {"rot90": 1, "rot180": 2, "rot270": 3}[name]
        imgs = X.reshape(-1, side, side)
        return np.rot90(imgs, k=-quarter_turns, axes=(1, 2)).reshape(X.shape[0], -1)
    raise ConfigError(f"unknown transform {name!r}; choose from {TRANSFORMS}")


def make_transform_splits(
    features: np.ndarray,
    labels: np.ndarray,
    transforms: Sequence[str],
    m: int,
    n: int,
    seed: int = 0,
    n_classes: int | None = None,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
) -> FederatedDataset:
    """Shard a labelled tabular image dataset into ``m`` clients with injected heterogeneity.

    Client ``i`` receives the transform ``transforms[i % len(transforms)]``;
    the ground-truth cluster is that transform's index.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    if not transforms:
        raise ConfigError("need at least one transform")
    for t in transforms:
        if t not in TRANSFORMS:
            raise ConfigError(f"unknown transform {t!r}; choose from {TRANSFORMS}")
        if t.startswith("rot"):
            _side(X.shape[1])
    if X.shape[0] < m * n:
        raise ConfigError(f"base has {X.shape[0]} rows, need m*n = {m * n}")
    order = derive_rng(seed, "shard").permutation(X.shape[0])[: m * n]
    k = n_classes if n_classes is not None else int(y.max()) + 1
    n_train = max(1, int(math.floor(train_fraction * n)))
    clients = []
    for i in range(m):
        rows = order[i * n : (i + 1) * n]
        t = transforms[i % len(transforms)]
        clients.append(ClientDataset(i, apply_transform(X[rows], t), y[rows], n_train))
    truth = Clustering(tuple(i % len(transforms) for i in range(m)))
    return FederatedDataset(clients, ModelKind.logistic(X.shape[1], k), truth)


# -- CSV persistence ----------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_federated_csv(fd: FederatedDataset, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "m": fd.m,
        "d": fd.kind.n_features,
        "model": fd.kind.to_dict(),
        "K": fd.kind.n_classes,
        "ground_truth": fd.ground_truth is not None,
        "n_train": [c.n_train for c in fd.clients],
        "synthetic": asdict(fd.synthetic) if fd.synthetic is not None else None,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    header = [f"x{j}" for j in range(fd.kind.n_features)] + ["y"]
    classifier = fd.kind.is_classifier
    for c in fd.clients:
        with open(path / f"client_{c.client_id}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row, target in zip(c.features, c.targets):
                tail = str(int(target)) if classifier else _fmt(target)
                w.writerow([_fmt(v) for v in row] + [tail])
    gt = path / "ground_truth.csv"
    if fd.ground_truth is not None:
        fd.ground_truth.to_csv(gt)
    elif gt.exists():
        gt.unlink()


def _read_client(file: Path, d: int, classifier: bool) -> tuple[np.ndarray, np.ndarray]:
    if not file.exists():
        raise DataFormatError("missing client file", str(file))
    expected = [f"x{j}" for j in range(d)] + ["y"]
    rows, targets = [], []
    with open(file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise DataFormatError(
                f"header has {0 if header is None else len(header)} columns, expected {d + 1}",
                str(file),
                1,
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise DataFormatError(f"row has {len(row)} columns, expected {d + 1}", str(file), lineno)
            try:
                rows.append([float(v) for v in row[:-1]])
                targets.append(int(row[-1]) if classifier else float(row[-1]))
            except ValueError as exc:
                raise DataFormatError(f"unparseable value ({exc})", str(file), lineno) from None
    if not rows:
        raise DataFormatError("client file has no samples", str(file))
    return np.array(rows, dtype=float), np.array(targets)


def load_federated_csv(path: str | Path) -> FederatedDataset:
    path = Path(path)
    meta_file = path / "meta.json"
    try:
        meta = json.loads(meta_file.read_text())
    except FileNotFoundError:
        raise DataFormatError("missing meta.json", str(meta_file)) from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON ({exc})", str(meta_file)) from None
    try:
        m, d = int(meta["m"]), int(meta["d"])
        kind = ModelKind.from_dict(meta["model"]) if "model" in meta else (
            ModelKind.logistic(d, int(meta["K"])) if int(meta.get("K", 1)) > 1 else ModelKind.linear(d)
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad meta field ({exc})", str(meta_file)) from None
    if kind.n_features != d:
        raise DataFormatError("meta d disagrees with model n_features", str(meta_file))
    n_train = meta.get("n_train")
    clients = []
    for i in range(m):
        X, y = _read_client(path / f"client_{i}.csv", d, kind.is_classifier)
        nt = int(n_train[i]) if n_train else max(1, int(DEFAULT_TRAIN_FRACTION * len(y)))
        clients.append(ClientDataset(i, X, y, nt))
    truth = None
    gt = path / "ground_truth.csv"
    if gt.exists():
        truth = Clustering.from_csv(gt, m)
    synthetic = SyntheticSpec(**meta["synthetic"]) if meta.get("synthetic") else None
    models = synthetic.cluster_models() if synthetic is not None else None
    return FederatedDataset(clients, kind, truth, synthetic, models)
