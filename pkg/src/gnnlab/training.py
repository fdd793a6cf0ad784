"""Loss, Adam with coupled weight decay, the epoch loop, and k-fold harness.

Graphs are processed one at a time; a mini-batch is a gradient accumulation
over its graphs (mean of per-graph gradients) followed by one optimiser
step. Everything is keyed by seeds, so a fold run is bit-reproducible.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .errors import HarnessError, ShapeError
from .graphdata import Dataset, FoldSplit, stratified_folds
from .init import InitScheme, reinit
from .models import Model, ModelSpec, build
from .numcore import Rng


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 0.0
    epochs: int = 100
    batch_size: int = 64
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 12345
    init: InitScheme = field(default_factory=InitScheme)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")

    def to_dict(self) -> dict:
        return {"lr": self.lr, "weight_decay": self.weight_decay,
                "epochs": self.epochs, "batch_size": self.batch_size,
                "betas": list(self.betas), "eps": self.eps, "seed": self.seed,
                "init": self.init.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        from .errors import ConfigError
        known = {"lr", "weight_decay", "epochs", "batch_size", "betas", "eps",
                 "seed", "init"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train key(s): {sorted(unknown)}")
        kwargs = dict(d)
        if "betas" in kwargs:
            kwargs["betas"] = tuple(kwargs["betas"])
        if "init" in kwargs:
            kwargs["init"] = InitScheme.from_dict(kwargs["init"])
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class FoldResult:
    fold: int
    accuracy: float            # percentage on the held-out fold
    train_losses: list         # one mean loss per epoch
    best_epoch: int            # 1-based epoch with the lowest train loss

    def to_dict(self) -> dict:
        return {"fold": self.fold, "accuracy": self.accuracy,
                "train_losses": [float(v) for v in self.train_losses],
                "best_epoch": self.best_epoch}


@dataclass
class RunReport:
    model: dict
    config: dict
    dataset: str
    feature_policy: str
    folds: list
    mean: float
    std: float
    reinit_divisors: list | None
    wall_clock_s: float

    def to_dict(self) -> dict:
        out = {"model": self.model, "config": self.config, "dataset": self.dataset,
               "feature_policy": self.feature_policy,
               "folds": [f.to_dict() for f in self.folds],
               "mean": self.mean, "std": self.std,
               "wall_clock_s": self.wall_clock_s}
        if self.reinit_divisors is not None:
            out["reinit_divisors"] = self.reinit_divisors
        return out


def cross_entropy(scores: np.ndarray, label: int):
    """Softmax cross-entropy in log-sum-exp form; returns (loss, grad_scores)."""
    if not (0 <= label < scores.shape[0]):
        raise ShapeError(f"label {label} out of range for {scores.shape[0]} classes")
    shift = scores - scores.max()
    expd = np.exp(shift)
    total = expd.sum()
    loss = float(np.log(total) - shift[label])
    grad = expd / total
    grad[label] -= 1.0
    return loss, grad


class Adam:
    """Adam with classic coupled L2 decay (grad += wd * param before moments)."""

    def __init__(self, params: dict, frozen=frozenset(), lr=5e-4,
                 betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.frozen = set(frozen)
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    @classmethod
    def from_config(cls, model: Model, cfg: TrainConfig) -> "Adam":
        return cls(model.params, model.frozen, lr=cfg.lr, betas=cfg.betas,
                   eps=cfg.eps, weight_decay=cfg.weight_decay)

    def step(self, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, param in self.params.items():
            if name in self.frozen:
                continue
            g = grads[name]
            if g.shape != param.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, "
                                 f"parameter has {param.shape}")
            if self.weight_decay:
                g = g + self.weight_decay * param
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            param -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.shape[0], batch_size):
        yield order[start:start + batch_size]


def train_model(model: Model, graphs, cfg: TrainConfig, shuffle_rng: Rng,
                sink=None, opt: Adam | None = None) -> list:
    """Run the epoch loop on ``graphs``; returns per-epoch mean train losses.

    Optimiser steps use the mean gradient over each batch. When a trace sink
    is given, per-epoch activation/gradient statistics and the train loss are
    recorded through it; tracing never perturbs the trajectory.
    """
    if not graphs:
        raise HarnessError("cannot train on an empty graph list")
    if opt is None:
        opt = Adam.from_config(model, cfg)
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(graphs))
        total = 0.0
        for batch in _batches(order, cfg.batch_size):
            accum = {name: np.zeros_like(p) for name, p in model.params.items()}
            inv = 1.0 / batch.shape[0]
            for gi in batch:
                g = graphs[int(gi)]
                scores = model.forward(g)
                loss, grad_scores = cross_entropy(scores, g.label)
                total += loss
                grads = model.backward(grad_scores)
                for name in accum:
                    accum[name] += inv * grads[name]
                if sink is not None:
                    diagnostics.record_forward(sink, epoch, model)
            model.last_grads = accum
            if sink is not None:
                diagnostics.record_backward(sink, epoch, model)
            opt.step(accum)
        losses.append(total / len(graphs))
        if sink is not None:
            diagnostics.record_loss(sink, epoch, losses[-1])
    return losses


def evaluate(model: Model, graphs) -> float:
    """Accuracy percentage of argmax predictions."""
    if not graphs:
        raise HarnessError("cannot evaluate on an empty graph list")
    correct = sum(1 for g in graphs if model.predict(g) == g.label)
    return 100.0 * correct / len(graphs)


def prepare_fold_model(ds: Dataset, train_graphs, spec: ModelSpec,
                       cfg: TrainConfig, fold: int):
    """Build and initialise the model for one fold; returns (model, report)."""
    seed = cfg.init.seed if cfg.init.seed is not None else cfg.seed
    model = build(spec, ds.feature_dim, ds.num_classes, Rng(seed ^ fold))
    report = None
    if cfg.init.kind == "standard_then_reinit":
        cap = cfg.init.reinit_sample_cap
        calibration = list(train_graphs if cap is None else train_graphs[:cap])
        report = reinit(model, calibration)
    return model, report


def train_fold(ds: Dataset, split: FoldSplit, fold: int, spec: ModelSpec,
               cfg: TrainConfig, sink=None) -> FoldResult:
    """Train on every fold but ``fold`` and test on ``fold`` at the final epoch."""
    if fold >= split.fold_count:
        raise HarnessError(f"fold {fold} out of range for {split.fold_count}-fold split")
    train_graphs = [ds.graphs[i] for i in split.train_indices(fold)]
    test_graphs = [ds.graphs[i] for i in split.test_indices(fold)]
    if not train_graphs:
        raise HarnessError(f"training fold {fold} is empty")
    model, reinit_report = prepare_fold_model(ds, train_graphs, spec, cfg, fold)
    shuffle_rng = Rng(cfg.seed ^ fold).derive(1)
    losses = train_model(model, train_graphs, cfg, shuffle_rng, sink=sink)
    acc = evaluate(model, test_graphs)
    result = FoldResult(fold=fold, accuracy=acc, train_losses=losses,
                        best_epoch=int(np.argmin(losses)) + 1)
    result.reinit_report = reinit_report
    return result


def _run_fold_job(args):
    ds, split, fold, spec, cfg, trace = args
    sink = diagnostics.TraceSink() if trace else None
    result = train_fold(ds, split, fold, spec, cfg, sink=sink)
    events = sink.events() if sink is not None else None
    report = getattr(result, "reinit_report", None)
    return result, events, report.to_dict() if report is not None else None


def run_cv(ds: Dataset, spec: ModelSpec, cfg: TrainConfig, folds: int = 10,
           fold_seed: int = 12345, jobs: int = 1, trace: bool = False):
    """Cross-validate over stratified folds; returns (RunReport, fold traces).

    Folds are independent; with ``jobs > 1`` they run in worker processes and
    are reduced in fold order, so results match the sequential run exactly.
    """
    split = stratified_folds(ds, folds, seed=fold_seed)
    started = time.perf_counter()
    jobs_args = [(ds, split, fold, spec, cfg, trace) for fold in range(folds)]
    if jobs > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(min(jobs, folds)) as pool:
            outcomes = pool.map(_run_fold_job, jobs_args)
    else:
        outcomes = [_run_fold_job(a) for a in jobs_args]
    results = [o[0] for o in outcomes]
    traces = [o[1] for o in outcomes]
    reinit_reports = [o[2] for o in outcomes]
    accs = np.array([r.accuracy for r in results])
    report = RunReport(
        model=spec.to_dict(), config=cfg.to_dict(), dataset=ds.name,
        feature_policy=ds.feature_policy, folds=results,
        mean=float(accs.mean()), std=float(accs.std()),
        reinit_divisors=(reinit_reports
                         if cfg.init.kind == "standard_then_reinit" else None),
        wall_clock_s=time.perf_counter() - started)
    return report, traces
