"""Config-driven multi-seed experiments, report emission and threshold tuning.

Everything in the emitted report is a pure function of the configuration;
wall-clock timings are kept in a separate ``timings`` mapping and written to
their own file.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .baselines import BaselineResult, IfcaConfig, evaluate_clients, fedavg_global, ifca, train_local
from .data import (
    FederatedDataset,
    SyntheticSpec,
    gen_mixture_linreg,
    load_federated_csv,
    make_transform_splits,
)
from .errors import ConfigError, FedClustError, NoClusterError
from .graphclust import Clustering, misclustering
from .models import TrainConfig, loss
from .srfca import (
    SrfcaConfig,
    assign_for_evaluation,
    one_shot,
    sr_fca,
    train_cluster_models,
    train_node_models,
    write_trace,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("srfca", "ifca", "global", "local")
FORMATS = ("json", "csv")


def _build(cls, values: dict, what: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {what} field(s): {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad {what} config: {exc}") from None


@dataclass
class ExperimentConfig:
    """One experiment: a dataset recipe, the algorithms to compare, and the seeds.

    ``dataset`` is one of::

        {"kind": "synthetic", "m": 100, "n": 100, "d": 1000, "clusters": 2, "sigma": 0.001}
        {"kind": "path", "path": "fed_dir"}
        {"kind": "transform", "path": "base.csv", "transforms": ["identity", "rot180"], "m": 8, "n": 50}

    For ``synthetic`` and ``transform`` datasets the seed also drives data
    generation; ``path`` datasets are identical across seeds.
    """

    dataset: dict = field(default_factory=lambda: {"kind": "synthetic"})
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    train: TrainConfig = field(default_factory=TrainConfig)
    srfca: dict = field(default_factory=dict)
    ifca: dict = field(default_factory=dict)
    global_participation: float = 1.0
    lambda_grid: list[float] | None = None
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    output_dir: str | None = None
    format: str = "json"

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = _build(TrainConfig, self.train, "train")
        if not self.algorithms:
            raise ConfigError("select at least one algorithm")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS}")
        self.algorithms = [a for a in ALGORITHMS if a in self.algorithms]
        if not self.seeds:
            raise ConfigError("need at least one seed")
        self.seeds = [int(s) for s in self.seeds]
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if self.dataset.get("kind") not in ("synthetic", "path", "transform"):
            raise ConfigError("dataset.kind must be synthetic, path or transform")
        if self.lambda_grid is not None and not self.lambda_grid:
            raise ConfigError("lambda_grid must be non-empty when given")
        # fail early on malformed sub-configs
        self.srfca_config(0)
        self.ifca_config(0)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return _build(cls, dict(d), "experiment")

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        return d

    def srfca_config(self, seed: int) -> SrfcaConfig:
        return _build(SrfcaConfig, {"train": self.train, "seed": seed, **self.srfca}, "srfca")

    def ifca_config(self, seed: int) -> IfcaConfig:
        return _build(IfcaConfig, {"train": self.train, "seed": seed, **self.ifca}, "ifca")


def load_dataset(spec: dict, seed: int) -> FederatedDataset:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "synthetic":
        return gen_mixture_linreg(_build(SyntheticSpec, {**spec, "seed": seed}, "dataset"))
    if kind == "path":
        return load_federated_csv(spec["path"])
    raw = np.loadtxt(spec["path"], delimiter=",", skiprows=1, ndmin=2)
    return make_transform_splits(
        raw[:, :-1],
        raw[:, -1],
        spec["transforms"],
        int(spec["m"]),
        int(spec["n"]),
        seed=seed,
        n_classes=spec.get("n_classes"),
        train_fraction=spec.get("train_fraction", 0.8),
    )


@dataclass
class ExperimentReport:
    config: dict
    cells: list[dict]
    summary: dict
    timings: dict = field(default_factory=dict)

    @property
    def failed(self) -> list[dict]:
        return [c for c in self.cells if c["error"] is not None]

    def to_dict(self, include_timings: bool = False) -> dict:
        d = {"config": self.config, "cells": self.cells, "summary": self.summary}
        if include_timings:
            d["timings"] = self.timings
        return d


# -- tuning ---------------------------------------------------------------------


@dataclass
class TuneResult:
    lam: float
    diagnostics: list[dict]


def tune_lambda(fd: FederatedDataset, grid: Sequence[float], cfg: SrfcaConfig) -> TuneResult:
    """Pick the threshold whose ONE_SHOT clustering most improves held-out loss over local models.

    For every ``lam`` in ``grid`` the clusters found by ONE_SHOT are trained
    with trimmed-mean GD; the objective is the mean over clients of
    ``local test loss - cluster-model test loss`` (zero for unassigned
    clients). Ties go to the earliest grid value.
    """
    if len(grid) == 0:
        raise ConfigError("lambda grid is empty")
    node_models = train_node_models(fd, cfg.train)
    local_loss = np.array([loss(fd.kind, node_models[c.client_id], c.test) for c in fd.clients])
    cache: dict[tuple, float] = {}
    diagnostics, best = [], None
    for lam in grid:
        lam = float(lam)
        try:
            state = one_shot(fd, replace(cfg, lam=lam), node_models)
        except NoClusterError as exc:
            diagnostics.append({"lambda": lam, "n_clusters": 0, "unassigned": fd.m, "objective": None, "error": str(exc)})
            continue
        key = state.clustering.labels
        if key not in cache:
            models = train_cluster_models(fd, state.clustering, cfg, 0)
            gain = np.zeros(fd.m)
            for i, v in enumerate(key):
                if v >= 0:
                    gain[i] = local_loss[i] - loss(fd.kind, models[v], fd.clients[i].test)
            cache[key] = float(np.mean(gain))
        obj = cache[key]
        diagnostics.append(
            {
                "lambda": lam,
                "n_clusters": state.clustering.n_clusters,
                "unassigned": len(state.clustering.unassigned),
                "objective": obj,
                "error": None,
            }
        )
        if best is None or obj > best[1]:
            best = (lam, obj)
    if best is None:
        raise NoClusterError("every lambda in the grid left no cluster of size >= t")
    return TuneResult(best[0], diagnostics)


def parse_grid(text: str) -> list[float]:
    """``a:b:N`` (linear), ``a:b:Nlog`` (geometric) or a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            geometric = n.endswith("log")
            n = int(n[:-3] if geometric else n)
            vals = np.geomspace(float(a), float(b), n) if geometric else np.linspace(float(a), float(b), n)
            return [float(v) for v in vals]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse lambda grid {text!r}") from None


# -- running ----------------------------------------------------------------------


def _cell(algorithm: str, seed: int) -> dict:
    return {
        "algorithm": algorithm,
        "seed": seed,
        "test_loss": None,
        "test_accuracy": None,
        "misclustering": None,
        "exact_match": None,
        "n_clusters": None,
        "lambda": None,
        "error": None,
    }


def _fill(cell: dict, fd: FederatedDataset, result: BaselineResult, clustering: Clustering) -> None:
    cell["test_loss"] = result.test_loss
    cell["test_accuracy"] = result.test_accuracy
    cell["n_clusters"] = clustering.n_clusters
    if fd.ground_truth is not None:
        mc = misclustering(clustering, fd.ground_truth)
        cell["misclustering"] = mc.error_fraction
        cell["exact_match"] = mc.exact_match


def _run_srfca(cfg: ExperimentConfig, fd: FederatedDataset, seed: int, cell: dict) -> None:
    scfg = cfg.srfca_config(seed)
    if scfg.lam is None and cfg.lambda_grid:
        scfg = replace(scfg, lam=tune_lambda(fd, cfg.lambda_grid, scfg).lam)
    res = sr_fca(fd, scfg)
    labels = assign_for_evaluation(res.state, fd, scfg)
    client_models = [res.state.cluster_models[v] for v in labels]
    br = BaselineResult(client_models, *evaluate_clients(fd, client_models))
    _fill(cell, fd, br, res.clustering)
    cell["lambda"] = res.state.lam
    if cfg.output_dir is not None:
        write_trace(res, Path(cfg.output_dir) / f"srfca_seed{seed}")


def _run_cell(cfg: ExperimentConfig, fd: FederatedDataset, algorithm: str, seed: int, cell: dict) -> None:
    if algorithm == "srfca":
        _run_srfca(cfg, fd, seed, cell)
    elif algorithm == "ifca":
        r = ifca(fd, cfg.ifca_config(seed))
        _fill(cell, fd, r, r.clustering)
    elif algorithm == "global":
        r = fedavg_global(fd, cfg.train, cfg.global_participation, seed)
        _fill(cell, fd, r, Clustering((0,) * fd.m))
    else:
        r = train_local(fd, cfg.train)
        _fill(cell, fd, r, Clustering(tuple(range(fd.m))))


def _stats(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "std": None}
    std = statistics.stdev(values) if len(values) > 1 else None
    return {"mean": statistics.fmean(values), "std": std}


def summarize(cells: list[dict], algorithms: Sequence[str]) -> dict:
    out = {}
    for a in algorithms:
        mine = [c for c in cells if c["algorithm"] == a and c["error"] is None]
        out[a] = {
            key: _stats([c[key] for c in mine if c[key] is not None])
            for key in ("test_loss", "test_accuracy", "misclustering")
        }
        out[a]["exact_matches"] = sum(1 for c in mine if c["exact_match"])
        out[a]["failures"] = sum(1 for c in cells if c["algorithm"] == a and c["error"] is not None)
    return out


def run_experiment(cfg: ExperimentConfig, progress: Callable[[str], None] | None = None) -> ExperimentReport:
    cells, timings = [], {}
    for seed in cfg.seeds:
        try:
            fd = load_dataset(cfg.dataset, seed)
        except (FedClustError, OSError, KeyError) as exc:
            for a in cfg.algorithms:
                cell = _cell(a, seed)
                cell["error"] = f"dataset: {exc}"
                cells.append(cell)
            continue
        for a in cfg.algorithms:
            cell = _cell(a, seed)
            start = time.perf_counter()
            try:
                _run_cell(cfg, fd, a, seed, cell)
            except Exception as exc:  # a failing cell must not sink the sweep
                log.warning("%s seed %d failed: %s", a, seed, exc)
                cell["error"] = f"{type(exc).__name__}: {exc}"
            timings[f"{a}/{seed}"] = time.perf_counter() - start
            cells.append(cell)
            if progress is not None:
                progress(f"{a} seed={seed} loss={cell['test_loss']} err={cell['error']}")
    return ExperimentReport(cfg.to_dict(), cells, summarize(cells, cfg.algorithms), timings)


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


CSV_FIELDS = ("algorithm", "seed", "test_loss", "test_accuracy", "misclustering", "exact_match", "n_clusters", "lambda", "error")


def _csv_value(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def emit_report(report: ExperimentReport, fmt: str, path: str | Path) -> Path:
    """Write ``report`` as JSON (full precision) or CSV (6 decimals)."""
    path = Path(path)
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path.write_text(json.dumps(_json_safe(report.to_dict()), indent=2) + "\n")
            return path
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for c in report.cells:
                w.writerow([_csv_value(c[k]) for k in CSV_FIELDS])
            for a, s in report.summary.items():
                for stat in ("mean", "std"):
                    row = {k: "" for k in CSV_FIELDS}
                    row.update(algorithm=a, seed=stat)
                    row["test_loss"] = _csv_value(s["test_loss"][stat])
                    row["test_accuracy"] = _csv_value(s["test_accuracy"][stat])
                    row["misclustering"] = _csv_value(s["misclustering"][stat])
                    w.writerow([row[k] for k in CSV_FIELDS])
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_json_report(path: str | Path) -> ExperimentReport:
    d = json.loads(Path(path).read_text())
    return ExperimentReport(d["config"], d["cells"], d["summary"], d.get("timings", {}))
