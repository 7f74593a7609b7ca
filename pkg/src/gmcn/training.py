"""Semi-supervised node classification: splits, the layer stack, training loop."""
from __future__ import annotations

import logging
import math
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dense import AdamHyper, LayerParams, adam_step, glorot_init, relu_grad, softmax_cross_entropy
from .errors import NumericError, ValidationError
from .graph import SparseAdjacency, normalize_adjacency
from .propagation import (
    PropagationConfig,
    PropagationTape,
    gcn_aggregate,
    gmc_propagate,
    propagate_backward,
)

log = logging.getLogger(__name__)

LAYER_KINDS = ("gmc", "gcn")


@dataclass(frozen=True, eq=False)
class GraphDataset:
    adjacency: SparseAdjacency
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    node_ids: tuple = ()
    class_names: tuple = ()
    name: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.adjacency.n
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValidationError(f"features {self.features.shape} do not match {n} nodes")
        if self.labels.shape != (n,):
            raise ValidationError("one label per node is required")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValidationError("labels must lie in [0, class_count)")

    @property
    def n(self) -> int:
        return self.adjacency.n

    def with_adjacency(self, adjacency: SparseAdjacency) -> "GraphDataset":
        return replace(self, adjacency=adjacency)

    def permuted(self, perm: np.ndarray) -> "GraphDataset":
        """Relabel nodes so that new node ``k`` is old node ``perm[k]``."""
        perm = np.asarray(perm)
        adj = SparseAdjacency.from_matrix(self.adjacency.matrix[perm][:, perm])
        ids = tuple(self.node_ids[i] for i in perm) if self.node_ids else ()
        return replace(self, adjacency=adj, features=self.features[perm], labels=self.labels[perm], node_ids=ids)


@dataclass(frozen=True)
class SplitSpec:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        parts = [np.asarray(p, dtype=np.int64) for p in (self.train, self.validation, self.test)]
        joined = np.concatenate(parts)
        if np.unique(joined).size != joined.size:
            raise ValidationError("train, validation and test subsets must be disjoint")

    def permuted(self, perm: np.ndarray) -> "SplitSpec":
        inverse = np.argsort(perm)
        return SplitSpec(inverse[self.train], inverse[self.validation], inverse[self.test], self.seed)


@dataclass(frozen=True)
class ModelSpec:
    """Layer stack: ``d_in -> hidden... -> classes``.

    ``propagation`` is shared by every GmC layer unless a tuple with one
    config per layer is given. ``mask_every`` > 1 reuses the previous masks
    of the non-input layers for that many epochs.
    """

    kind: str = "gmc"
    hidden: tuple[int, ...] = (16,)
    propagation: PropagationConfig | tuple[PropagationConfig, ...] = field(default_factory=PropagationConfig)
    dropout: float = 0.0
    weight_decay: float = 0.0
    mask_every: int = 1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValidationError(f"layer kind must be one of {LAYER_KINDS}, got {self.kind!r}")
        if len(self.hidden) < 1 or min(self.hidden) < 1:
            raise ValidationError("at least one hidden layer of positive width is required")
        if isinstance(self.propagation, tuple) and len(self.propagation) != self.depth:
            raise ValidationError(f"need {self.depth} propagation configs, got {len(self.propagation)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")
        if self.weight_decay < 0 or self.mask_every < 1:
            raise ValidationError("weight_decay must be >= 0 and mask_every >= 1")

    @property
    def depth(self) -> int:
        return len(self.hidden) + 1

    def dims(self, d_in: int, classes: int) -> list[tuple[int, int]]:
        widths = [d_in, *self.hidden, classes]
        return list(zip(widths[:-1], widths[1:]))

    def layer_config(self, i: int) -> PropagationConfig:
        return self.propagation[i] if isinstance(self.propagation, tuple) else self.propagation


@dataclass
class _LayerCache:
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    tape: PropagationTape | None
    drop: np.ndarray | None


class Network:
    """A GmC (or GCN) layer stack with hand-written backward pass."""

    def __init__(self, spec: ModelSpec, a_hat: SparseAdjacency, params: list[LayerParams]):
        self.spec = spec
        self.a_hat = a_hat
        self.params = params
        self._input_cache = None
        self._masks: list | None = None

    @classmethod
    def initialize(cls, spec: ModelSpec, a_hat: SparseAdjacency, d_in: int, classes: int, seed) -> "Network":
        rng = np.random.default_rng(seed)
        params = [glorot_init(i, o, rng) for i, o in spec.dims(d_in, classes)]
        return cls(spec, a_hat, params)

    def _aggregate(self, i: int, x: np.ndarray, reuse_masks: bool):
        if self.spec.kind == "gcn":
            return gcn_aggregate(x, self.a_hat), None
        masks = self._masks[i] if reuse_masks and self._masks is not None else None
        return gmc_propagate(x, self.a_hat, self.spec.layer_config(i), masks=masks)

    def forward(self, features: np.ndarray, training: bool = False, rng=None, reuse_masks: bool = False):
        """Logits for every node plus the per-layer state used by :meth:`backward`."""
        caches = []
        x = features
        last = len(self.params) - 1
        for i, p in enumerate(self.params):
            drop = None
            if training and self.spec.dropout > 0:
                keep = 1.0 - self.spec.dropout
                drop = (rng.random(x.shape) < keep) / keep
                x = x * drop
            if i == 0 and drop is None:
                # the input never changes during training, so its aggregation is computed once
                if self._input_cache is not None and self._input_cache[0] is features:
                    u, tape = self._input_cache[1:]
                else:
                    u, tape = self._aggregate(0, x, reuse_masks)
                    if not reuse_masks:
                        self._input_cache = (features, u, tape)
            else:
                u, tape = self._aggregate(i, x, reuse_masks)
            act = "identity" if i == last else "relu"
            z = u @ p.theta
            out = z if act == "identity" else np.maximum(z, 0.0)
            caches.append(_LayerCache(x, u, z, tape, drop))
            x = out
        if self.spec.kind == "gmc" and not reuse_masks:
            self._masks = [c.tape.masks for c in caches]
        return x, caches

    def backward(self, caches: list[_LayerCache], d_logits: np.ndarray) -> list[np.ndarray]:
        grads = [None] * len(self.params)
        g = d_logits
        last = len(self.params) - 1
        for i in range(last, -1, -1):
            c = caches[i]
            d_z = g if i == last else g * relu_grad(c.z)
            grads[i] = c.u.T @ d_z
            if i == 0:
                break
            d_u = d_z @ self.params[i].theta.T
            if self.spec.kind == "gcn":
                g = self.a_hat.matrix.T @ d_u + d_u
            else:
                g = propagate_backward(c.tape, d_u)
            if c.drop is not None:
                g = g * c.drop
        if self.spec.weight_decay:
            grads[0] = grads[0] + self.spec.weight_decay * self.params[0].theta
        return grads

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.forward(features)[0]

    def mask_density(self, caches) -> list[float]:
        return [c.tape.mask_density() for c in caches if c.tape is not None]

    def copy_params(self) -> list[LayerParams]:
        return [p.copy() for p in self.params]


@dataclass
class TrainResult:
    network: Network
    history: list[dict]
    best_epoch: int | None
    epochs_run: int
    wall_clock: float = 0.0


def make_splits(ds: GraphDataset, label_fraction: float, seed: int, stratified: bool = False) -> SplitSpec:
    """Random train/validation/test split.

    ``label_fraction`` of the nodes are labeled; 10% of the rest go to
    validation and the remainder to test.
    """
    if not 0.0 < label_fraction < 1.0:
        raise ValidationError(f"label_fraction must lie in (0, 1), got {label_fraction}")
    n = ds.n
    n_train = int(round(label_fraction * n))
    n_val = int(round(0.1 * (n - n_train)))
    if n_train < 1 or n_val < 1 or n - n_train - n_val < 1:
        raise ValidationError(f"cannot split {n} nodes with label fraction {label_fraction}")
    rng = np.random.default_rng(seed)
    if stratified:
        train = []
        for c in range(ds.class_count):
            members = rng.permutation(np.flatnonzero(ds.labels == c))
            train.append(members[: int(round(label_fraction * members.size))])
        train = np.sort(np.concatenate(train))
        rest = rng.permutation(np.setdiff1d(np.arange(n), train))
        n_val = int(round(0.1 * rest.size))
        return SplitSpec(train, np.sort(rest[:n_val]), np.sort(rest[n_val:]), seed)
    perm = rng.permutation(n)
    return SplitSpec(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
        seed,
    )


def accuracy(logits: np.ndarray, labels: np.ndarray, subset) -> float:
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        raise ValidationError("accuracy needs a non-empty subset")
    # argmax breaks ties toward the lowest class index
    return float(np.mean(np.argmax(logits[subset], axis=1) == labels[subset]))


def evaluate(network: Network, ds: GraphDataset, subset) -> float:
    """Fraction of ``subset`` whose predicted class equals its label."""
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        raise ValidationError("evaluate needs a non-empty subset")
    return accuracy(network.predict(ds.features), ds.labels, subset)


def train(
    model: ModelSpec,
    ds: GraphDataset,
    split: SplitSpec,
    hyper: AdamHyper = AdamHyper(),
    max_epochs: int = 10_000,
    patience: int = 100,
    seed: int = 0,
    a_hat: SparseAdjacency | None = None,
    on_epoch=None,
) -> TrainResult:
    """Full-batch Adam training with early stopping on validation loss.

    Metrics of epoch ``e`` describe the parameters *before* that epoch's
    update. Training stops once the validation loss has not improved for
    ``patience`` epochs, and the parameters of the best epoch are restored.
    """
    if max_epochs < 0 or patience < 1:
        raise ValidationError("max_epochs must be >= 0 and patience >= 1")
    init_seed, dropout_seed = np.random.SeedSequence(seed).generate_state(2)
    a_hat = a_hat if a_hat is not None else normalize_adjacency(ds.adjacency)
    net = Network.initialize(model, a_hat, ds.features.shape[1], ds.class_count, init_seed)
    drop_rng = np.random.default_rng(dropout_seed)
    history: list[dict] = []
    best_loss, best_epoch, best_params, wait = math.inf, None, net.copy_params(), 0
    eval_separately = model.dropout > 0
    start = time.perf_counter()
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        reuse = model.mask_every > 1 and (epoch - 1) % model.mask_every != 0
        logits, caches = net.forward(ds.features, training=True, rng=drop_rng, reuse_masks=reuse)
        train_loss, d_logits = softmax_cross_entropy(logits, ds.labels, split.train)
        if not math.isfinite(train_loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        eval_logits = net.forward(ds.features)[0] if eval_separately else logits
        val_loss, _ = softmax_cross_entropy(eval_logits, ds.labels, split.validation)
        record = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "train_acc": accuracy(eval_logits, ds.labels, split.train),
            "val_acc": accuracy(eval_logits, ds.labels, split.validation),
            "test_acc": accuracy(eval_logits, ds.labels, split.test),
        }
        for i, d in enumerate(net.mask_density(caches)):
            record[f"mask_density_{i + 1}"] = d
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)

        if val_loss < best_loss:
            best_loss, best_epoch, best_params, wait = val_loss, epoch, net.copy_params(), 0
        else:
            wait += 1
            if wait >= patience:
                break
        grads = net.backward(caches, d_logits)
        net.params = [adam_step(p, g, hyper) for p, g in zip(net.params, grads)]
    net.params = best_params
    return TrainResult(net, history, best_epoch, len(history), time.perf_counter() - start)


@dataclass
class RunSummary:
    accuracies: list[float]
    runs: list[dict]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        # exact rational arithmetic, so identical accuracies give exactly 0
        return statistics.stdev(self.accuracies)


def run_seeds(seed: int) -> tuple[int, int, int]:
    """Independent (split, train, graph-noise) seeds derived from one run seed."""
    return tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(3))


def repeat_runs(
    model: ModelSpec,
    ds: GraphDataset,
    label_fraction: float,
    seeds,
    hyper: AdamHyper = AdamHyper(),
    max_epochs: int = 10_000,
    patience: int = 100,
    graph_transform=None,
    stratified: bool = False,
    on_epoch=None,
) -> RunSummary:
    """Train once per seed on fresh splits; test accuracy at the best-validation epoch.

    ``graph_transform(adjacency, seed)`` is applied before training (used for
    the structural-noise experiments).
    """
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("repeat_runs needs at least one seed")
    accs, runs = [], []
    for run, seed in enumerate(seeds):
        split_seed, train_seed, noise_seed = run_seeds(seed)
        run_ds = ds
        if graph_transform is not None:
            run_ds = ds.with_adjacency(graph_transform(ds.adjacency, noise_seed))
        split = make_splits(run_ds, label_fraction, split_seed, stratified=stratified)
        hook = None if on_epoch is None else (lambda rec, run=run: on_epoch(run, rec))
        result = train(model, run_ds, split, hyper, max_epochs, patience, seed=train_seed, on_epoch=hook)
        acc = evaluate(result.network, run_ds, split.test)
        best = result.history[result.best_epoch - 1] if result.best_epoch else {}
        log.info("run %d seed %d: test acc %.4f (best epoch %s)", run, seed, acc, result.best_epoch)
        accs.append(acc)
        runs.append({
            "seed": seed,
            "test_acc": acc,
            "best_epoch": result.best_epoch,
            "epochs_run": result.epochs_run,
            "val_acc": best.get("val_acc"),
            "train_acc": best.get("train_acc"),
            "wall_clock": result.wall_clock,
            "mask_density": [best[k] for k in sorted(best) if k.startswith("mask_density_")],
            "history": result.history,
        })
    return RunSummary(accs, runs)
