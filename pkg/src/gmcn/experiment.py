"""Experiment configs, reports and sweeps on top of the trainer.

A report is a JSON document holding the full config (including the resolved
run seeds), per-run results, the summary statistics and provenance. Per-epoch
metrics go to a sibling CSV file. Any report can be rerun with :func:`replay`.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import platform
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import find_dataset_files, load_citation_dataset, planted_partition, row_normalize, two_clique_dataset
from .dense import AdamHyper
from .errors import ConfigError, ValidationError
from .graph import perturb_graph
from .mask import MaskSolverConfig
from .propagation import PropagationConfig
from .training import LAYER_KINDS, GraphDataset, ModelSpec, repeat_runs

log = logging.getLogger(__name__)

REPORT_FORMAT = "gmcn-report/1"
BUILTIN_DATASETS = ("two-cliques", "synthetic")
SWEEP_AXES = ("alpha", "gamma", "depth", "noise")
DATA_ENV = "GMCN_DATA"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "cora"
    data_dir: str | None = None
    content_path: str | None = None
    cites_path: str | None = None
    layer_kind: str = "gmc"
    hidden: int = 16
    depth: int = 2
    alpha: float = 0.8
    gamma: float = 0.001
    epsilon: float = 1e-3
    outer_iters: int = 4
    proj_iters: int = 3
    agg_iters: int = 3
    learning_rate: float = 0.01
    label_fraction: float = 0.1
    runs: int = 5
    seed: int = 0
    seeds: tuple[int, ...] | None = None
    noise_p: float = 0.0
    max_epochs: int = 10_000
    patience: int = 100
    row_normalize: bool = True
    stratified: bool = False
    dropout: float = 0.0
    weight_decay: float = 0.0
    mask_every: int = 1
    synthetic_nodes: int = 600
    synthetic_seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
            if len(self.seeds) != self.runs:
                raise ConfigError(f"{len(self.seeds)} seeds given for {self.runs} runs")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.layer_kind not in LAYER_KINDS:
            raise ConfigError(f"layer_kind must be one of {LAYER_KINDS}")
        if self.depth < 2 or self.hidden < 1:
            raise ConfigError("depth must be >= 2 and hidden >= 1")
        if not 0.0 <= self.noise_p <= 1.0:
            raise ConfigError(f"noise_p must lie in [0, 1], got {self.noise_p}")
        if not 0.0 < self.label_fraction < 1.0:
            raise ConfigError(f"label_fraction must lie in (0, 1), got {self.label_fraction}")
        try:
            self.model_spec()
            self.adam()
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None

    def run_seeds(self) -> tuple[int, ...]:
        return self.seeds if self.seeds is not None else tuple(self.seed + r for r in range(self.runs))

    def model_spec(self) -> ModelSpec:
        prop = PropagationConfig(
            alpha=self.alpha,
            outer_iters=self.outer_iters,
            agg_iters=self.agg_iters,
            mask_cfg=MaskSolverConfig(gamma=self.gamma, epsilon=self.epsilon, inner_iters=self.proj_iters),
        )
        return ModelSpec(
            kind=self.layer_kind,
            hidden=(self.hidden,) * (self.depth - 1),
            propagation=prop,
            dropout=self.dropout,
            weight_decay=self.weight_decay,
            mask_every=self.mask_every,
        )

    def adam(self) -> AdamHyper:
        return AdamHyper(learning_rate=self.learning_rate)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.run_seeds())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("seeds") is not None:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


def resolve_dataset_paths(cfg: ExperimentConfig) -> tuple[Path, Path] | None:
    """Dataset files for ``cfg``, or None for a built-in graph.

    Explicit ``content_path``/``cites_path`` win; otherwise the files are
    looked up under ``data_dir``, then ``$GMCN_DATA``, then ``./data``.
    """
    if cfg.content_path or cfg.cites_path:
        if not (cfg.content_path and cfg.cites_path):
            raise ConfigError("content_path and cites_path must be given together")
        paths = Path(cfg.content_path), Path(cfg.cites_path)
        for p in paths:
            if not p.is_file():
                raise ConfigError(f"dataset file not found: {p}")
        return paths
    if cfg.dataset in BUILTIN_DATASETS:
        return None
    roots = [cfg.data_dir] if cfg.data_dir else [os.environ.get(DATA_ENV), "data"]
    for root in filter(None, roots):
        try:
            return find_dataset_files(root, cfg.dataset)
        except FileNotFoundError:
            continue
    where = cfg.data_dir or f"${DATA_ENV} or ./data"
    raise ConfigError(f"no {cfg.dataset}.content/{cfg.dataset}.cites found under {where}")


def load_dataset(cfg: ExperimentConfig) -> GraphDataset:
    paths = resolve_dataset_paths(cfg)
    if paths is not None:
        ds = load_citation_dataset(*paths, name=cfg.dataset)
    elif cfg.dataset == "two-cliques":
        ds = two_clique_dataset(seed=cfg.synthetic_seed)
    else:
        ds = planted_partition(n=cfg.synthetic_nodes, seed=cfg.synthetic_seed)
    if cfg.row_normalize:
        ds = replace(ds, features=row_normalize(ds.features))
    return ds


def provenance() -> dict:
    from . import __version__

    info = {
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "git_commit": None,
        "git_dirty": None,
    }
    import scipy

    info["scipy"] = scipy.__version__
    root = Path(__file__).resolve().parent
    try:
        commit = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=root, capture_output=True, text=True, timeout=5
        )
        if commit.returncode == 0:
            info["git_commit"] = commit.stdout.strip()
            status = subprocess.run(
                ["git", "status", "--porcelain"], cwd=root, capture_output=True, text=True, timeout=5
            )
            info["git_dirty"] = bool(status.stdout.strip())
    except (OSError, subprocess.SubprocessError):
        pass
    return info


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    dataset: dict
    accuracies: list[float]
    mean: float
    std: float
    runs: list[dict]
    wall_clock: float
    provenance: dict = field(default_factory=dict)
    adam: dict = field(default_factory=dict)
    histories: list[list[dict]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "config": self.config.to_dict(),
            "dataset": self.dataset,
            "adam": self.adam,
            "accuracies": self.accuracies,
            "mean": self.mean,
            "std": self.std,
            "wall_clock_seconds": self.wall_clock,
            "runs": self.runs,
            "provenance": self.provenance,
        }

    def write(self, path) -> tuple[Path, Path]:
        """Write the JSON report and its per-epoch CSV; returns both paths."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        metrics = metrics_path(path)
        keys = sorted({k for h in self.histories for rec in h for k in rec} - {"epoch"})
        base = ["train_loss", "val_loss", "train_acc", "val_acc", "test_acc"]
        columns = ["run", "epoch"] + base + [k for k in keys if k not in base]
        with metrics.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            for run, history in enumerate(self.histories):
                for rec in history:
                    writer.writerow({"run": run, **rec})
        return path, metrics


def metrics_path(report_path) -> Path:
    report_path = Path(report_path)
    return report_path.with_name(report_path.stem + ".metrics.csv")


def read_report(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"report not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not a JSON report ({exc})") from None
    if data.get("format") != REPORT_FORMAT:
        raise ConfigError(f"{path}: unsupported report format {data.get('format')!r}")
    return data


def run_experiment(cfg: ExperimentConfig, on_epoch=None) -> ExperimentReport:
    """Load data, train ``cfg.runs`` times and write the report if ``cfg.out`` is set.

    Dataset paths are checked before any computation starts.
    """
    ds = load_dataset(cfg)
    seeds = cfg.run_seeds()
    transform = None
    if cfg.noise_p > 0:
        transform = lambda adj, seed: perturb_graph(adj, cfg.noise_p, seed)  # noqa: E731
    log.info("%s: n=%d d=%d classes=%d, %s x%d", ds.name, ds.n, ds.features.shape[1],
             ds.class_count, cfg.layer_kind, cfg.runs)
    start = time.perf_counter()
    summary = repeat_runs(
        cfg.model_spec(),
        ds,
        cfg.label_fraction,
        seeds,
        hyper=cfg.adam(),
        max_epochs=cfg.max_epochs,
        patience=cfg.patience,
        graph_transform=transform,
        stratified=cfg.stratified,
        on_epoch=on_epoch,
    )
    wall = time.perf_counter() - start
    histories = [r.pop("history") for r in summary.runs]
    for run, history in zip(summary.runs, histories):
        run["mask_density_trajectory"] = [
            [rec[k] for k in sorted(rec) if k.startswith("mask_density_")] for rec in history
        ]
    report = ExperimentReport(
        config=cfg,
        dataset={
            "name": ds.name,
            "nodes": ds.n,
            "features": int(ds.features.shape[1]),
            "classes": ds.class_count,
            "undirected_edges": ds.adjacency.num_edges,
            **{k: v for k, v in ds.info.items() if k != "undirected_edges"},
        },
        accuracies=summary.accuracies,
        mean=summary.mean,
        std=summary.std,
        runs=summary.runs,
        wall_clock=wall,
        provenance=provenance(),
        adam=asdict(cfg.adam()),
        histories=histories,
    )
    if cfg.out:
        report.write(cfg.out)
    return report


def replay(report_path, out: str | None = None) -> tuple[ExperimentReport, dict]:
    """Rerun the config echoed in a report; returns the new report and the old data."""
    old = read_report(report_path)
    cfg = ExperimentConfig.from_dict({**old["config"], "out": out})
    return run_experiment(cfg), old


def _check_axis_value(axis: str, value) -> None:
    ok = {
        "alpha": lambda v: 0.0 < v < 1.0,
        "gamma": lambda v: v > 0,
        "depth": lambda v: float(v).is_integer() and v >= 2,
        "noise": lambda v: 0.0 <= v <= 1.0,
    }[axis]
    if not ok(value):
        raise ValidationError(f"invalid {axis} value {value!r}")


def sweep_point_configs(cfg: ExperimentConfig, axis: str, values) -> list[ExperimentConfig]:
    """One config per (value, layer kind); the noise axis pairs GmC with GCN."""
    if axis not in SWEEP_AXES:
        raise ValidationError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    if not values:
        raise ValidationError("sweep needs at least one value")
    for v in values:
        _check_axis_value(axis, v)
    kinds = ("gmc", "gcn") if axis == "noise" else (cfg.layer_kind,)
    out = []
    for v in values:
        change = {
            "alpha": {"alpha": float(v)},
            "gamma": {"gamma": float(v)},
            "depth": {"depth": int(v)},
            "noise": {"noise_p": float(v)},
        }[axis]
        for kind in kinds:
            point_out = None
            if cfg.out:
                base = Path(cfg.out)
                point_out = str(base.with_name(f"{base.stem}-{axis}{v:g}-{kind}{base.suffix or '.json'}"))
            out.append(replace(cfg, layer_kind=kind, out=point_out, **change))
    return out


def sweep(cfg: ExperimentConfig, axis: str, values) -> list[ExperimentReport]:
    """Run one experiment per sweep point; writes a summary CSV next to ``cfg.out``."""
    points = sweep_point_configs(cfg, axis, values)
    resolve_dataset_paths(cfg)
    reports = [run_experiment(p) for p in points]
    if cfg.out:
        base = Path(cfg.out)
        base.parent.mkdir(parents=True, exist_ok=True)
        with base.with_name(f"{base.stem}-{axis}.summary.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([axis, "layer_kind", "mean", "std", "report"])
            for p, r in zip(points, reports):
                value = {"alpha": p.alpha, "gamma": p.gamma, "depth": p.depth, "noise": p.noise_p}[axis]
                writer.writerow([value, p.layer_kind, r.mean, r.std, p.out])
    return reports
