"""Threshold graphs, randomized pivot correlation clustering and clustering metrics."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataFormatError, NoClusterError

UNASSIGNED = -1


@dataclass(frozen=True)
class Clustering:
    """Labels indexed by client id; ``-1`` marks an unassigned client.

    Cluster ids are contiguous ``0..k-1``.
    """

    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        present = sorted({v for v in self.labels if v != UNASSIGNED})
        if any(v < UNASSIGNED for v in self.labels):
            raise ConfigError("cluster ids must be >= 0 (or -1 for unassigned)")
        if present != list(range(len(present))):
            raise ConfigError(f"cluster ids must be contiguous from 0, got {present}")

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "Clustering":
        """Build from arbitrary labels, renumbering present ids in increasing order."""
        labels = [int(v) for v in labels]
        present = sorted({v for v in labels if v != UNASSIGNED})
        remap = {old: new for new, old in enumerate(present)}
        return cls(tuple(remap.get(v, UNASSIGNED) for v in labels))

    @classmethod
    def from_groups(cls, groups: Sequence[Iterable[int]], m: int) -> "Clustering":
        labels = [UNASSIGNED] * m
        for c, members in enumerate(groups):
            for i in members:
                if labels[i] != UNASSIGNED:
                    raise ConfigError(f"client {i} appears in two groups")
                labels[i] = c
        return cls(tuple(labels))

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def n_clusters(self) -> int:
        return 1 + max(self.labels, default=UNASSIGNED)

    @property
    def unassigned(self) -> frozenset[int]:
        return frozenset(i for i, v in enumerate(self.labels) if v == UNASSIGNED)

    def members(self, c: int) -> list[int]:
        return [i for i, v in enumerate(self.labels) if v == c]

    def groups(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_clusters)]
        for i, v in enumerate(self.labels):
            if v != UNASSIGNED:
                out[v].append(i)
        return out

    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups()]

    def canonical(self) -> frozenset[frozenset[int]]:
        """Partition as a set of member sets; equality up to relabelling."""
        return frozenset(frozenset(g) for g in self.groups())

    def same_partition(self, other: "Clustering") -> bool:
        return self.canonical() == other.canonical() and self.unassigned == other.unassigned

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["client_id", "cluster_id"])
            for i, v in enumerate(self.labels):
                w.writerow([i, v])

    @classmethod
    def from_csv(cls, path: str | Path, m: int | None = None) -> "Clustering":
        rows: dict[int, int] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["client_id", "cluster_id"]:
                raise DataFormatError("expected header client_id,cluster_id", str(path), 1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    cid, lab = int(row[0]), int(row[1])
                except (ValueError, IndexError):
                    raise DataFormatError(f"malformed row {row!r}", str(path), lineno) from None
                rows[cid] = lab
        m = len(rows) if m is None else m
        if sorted(rows) != list(range(m)):
            raise DataFormatError(f"expected client ids 0..{m - 1}", str(path))
        try:
            return cls(tuple(rows[i] for i in range(m)))
        except ConfigError as exc:
            raise DataFormatError(str(exc), str(path)) from None


@dataclass(frozen=True)
class ThresholdGraph:
    n: int
    edges: frozenset[tuple[int, int]]
    lam: float

    def neighbors(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], lam: float = float("nan")):
        norm = set()
        for i, j in edges:
            if i == j:
                raise ConfigError("self-loops are not allowed")
            norm.add((min(i, j), max(i, j)))
        return cls(n, frozenset(norm), lam)


def threshold_graph(M: np.ndarray, lam: float) -> ThresholdGraph:
    """Connect ``i != j`` whenever ``M[i, j] <= lam``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError("distance matrix must be square")
    if lam < 0:
        raise ConfigError("threshold must be non-negative")
    iu, ju = np.triu_indices(M.shape[0], k=1)
    keep = M[iu, ju] <= lam
    return ThresholdGraph(M.shape[0], frozenset(zip(iu[keep].tolist(), ju[keep].tolist())), float(lam))


def correlation_cluster(g: ThresholdGraph, seed: int | np.random.Generator = 0) -> Clustering:
    """Randomized pivot: a random unclustered vertex claims all its unclustered neighbours.

    Visiting vertices in a seeded permutation of the sorted ids is the same as
    drawing each pivot uniformly from the remaining vertices.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    adj = g.neighbors()
    labels = [UNASSIGNED] * g.n
    next_id = 0
    for pivot in rng.permutation(g.n).tolist():
        if labels[pivot] != UNASSIGNED:
            continue
        labels[pivot] = next_id
        for v in adj[pivot]:
            if labels[v] == UNASSIGNED:
                labels[v] = next_id
        next_id += 1
    return Clustering(tuple(labels))


def disagreements(g: ThresholdGraph, c: Clustering) -> int:
    """Correlation-clustering cost: edges cut plus non-edges placed together."""
    cost = 0
    for i, j in combinations(range(g.n), 2):
        together = c.labels[i] == c.labels[j] and c.labels[i] != UNASSIGNED
        edge = (i, j) in g.edges
        cost += edge != together
    return cost


def filter_min_size(c: Clustering, t: int) -> Clustering:
    """Dissolve clusters with fewer than ``t`` members; survivors keep their relative order."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    sizes = c.sizes()
    keep = {k for k, s in enumerate(sizes) if s >= t}
    if not keep:
        raise NoClusterError(f"no cluster of size >= {t}")
    return Clustering.from_labels(v if v in keep else UNASSIGNED for v in c.labels)


@dataclass(frozen=True)
class Misclustering:
    error_fraction: float
    exact_match: bool
    label_map: Mapping[int, int]


def misclustering(c: Clustering, truth: Clustering) -> Misclustering:
    """Majority-label misclustering error; unassigned clients always count as errors."""
    if truth.unassigned:
        raise ConfigError("ground truth must assign every client")
    if c.m != truth.m:
        raise ConfigError("clusterings cover different client sets")
    label_map: dict[int, int] = {}
    for k, members in enumerate(c.groups()):
        counts = Counter(truth.labels[i] for i in members)
        top = max(counts.values())
        label_map[k] = min(lab for lab, n in counts.items() if n == top)
    wrong = sum(
        1
        for i, v in enumerate(c.labels)
        if v == UNASSIGNED or label_map[v] != truth.labels[i]
    )
    err = wrong / c.m
    exact = wrong == 0 and c.n_clusters == truth.n_clusters
    return Misclustering(err, exact, label_map)
