"""Loss, optimizers, stratified splitting, k-fold plans, the training loop and sweeps."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Optional, Protocol, Sequence

import numpy as np

from dbfga import ops
from dbfga.metrics import EvalReport
from dbfga.model import DualBackboneNet, ModelSpec
from dbfga.tensor import Tape, Tensor, Variable, backward

log = logging.getLogger(__name__)

LOG_EPS = 1e-12


class TrainingError(RuntimeError):
    pass


class OptimizerError(KeyError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 30
    early_stop_patience: int = 5
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {sorted(OPTIMIZERS)}, got {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.early_stop_patience < 0:
            raise ValueError("batch_size and epochs must be >= 1, patience >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- loss

def cross_entropy(probs: Tensor, onehot: Tensor) -> Tensor:
    """Batch mean of -sum_k y_k log(p_k + 1e-12)."""
    if probs.shape != onehot.shape:
        raise ValueError(f"probs {probs.shape} vs labels {onehot.shape}")
    per_sample = ops.sum(ops.mul(onehot, ops.log(probs, LOG_EPS)), axis=-1)
    return ops.mul(-1.0, ops.mean(per_sample))


# ---------------------------------------------------------------- optimizers

@dataclass
class OptimizerState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Optimizer:
    def __init__(self, lr: float):
        self.lr = lr
        self.state = OptimizerState()

    def step(self, params: Mapping[str, Variable], grads: Mapping[str, np.ndarray]) -> None:
        for name, var in params.items():
            if not var.trainable:
                continue
            if name not in grads or grads[name] is None:
                raise OptimizerError(f"missing gradient for parameter {name!r}")
        self.state.step += 1
        for name, var in params.items():
            if var.trainable:
                var.data = var.data - self._delta(name, np.asarray(grads[name]))

    def _delta(self, name: str, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SGD(Optimizer):
    def _delta(self, name, g):
        return self.lr * g


class Adam(Optimizer):
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def _delta(self, name, g):
        st = self.state
        m = self.beta1 * st.m.get(name, 0.0) + (1 - self.beta1) * g
        v = self.beta2 * st.v.get(name, 0.0) + (1 - self.beta2) * g * g
        st.m[name], st.v[name] = m, v
        m_hat = m / (1 - self.beta1 ** st.step)
        v_hat = v / (1 - self.beta2 ** st.step)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Adamax(Adam):
    def _delta(self, name, g):
        st = self.state
        m = self.beta1 * st.m.get(name, 0.0) + (1 - self.beta1) * g
        u = np.maximum(self.beta2 * st.v.get(name, 0.0), np.abs(g))
        st.m[name], st.v[name] = m, u
        return (self.lr / (1 - self.beta1 ** st.step)) * m / (u + self.eps)


OPTIMIZERS: dict[str, type[Optimizer]] = {"adam": Adam, "adamax": Adamax, "sgd": SGD}


def make_optimizer(name: str, lr: float) -> Optimizer:
    return OPTIMIZERS[name](lr)


def optimizer_step(params, grads, optimizer: Optimizer) -> OptimizerState:
    optimizer.step(params, grads)
    return optimizer.state


# ---------------------------------------------------------------- splitting

def _class_indices(labels: np.ndarray) -> dict[int, np.ndarray]:
    labels = np.asarray(labels).reshape(-1)
    return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def stratified_split(labels, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per class, round-half-up(n_c * fraction) samples (at least 1) go to validation."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c, idx in _class_indices(labels).items():
        if idx.size < 2:
            raise ValueError(f"class {c} has {idx.size} sample(s); need at least 2 to split")
        n_val = min(idx.size - 1, max(1, math.floor(idx.size * val_fraction + 0.5)))
        shuffled = rng.permutation(idx)
        val.append(shuffled[:n_val])
        train.append(shuffled[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray

    def fold(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == i)

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return np.flatnonzero(self.assignments != i), self.fold(i)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def kfold_partition(labels, k: int, seed: int) -> FoldPlan:
    """Stratified round-robin folds after a seeded per-class shuffle.

    Each class continues the round-robin where the previous class stopped,
    which keeps total fold sizes within one of each other as well.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    labels = np.asarray(labels).reshape(-1)
    rng = np.random.default_rng(seed)
    assignments = np.full(labels.size, -1, dtype=np.int64)
    offset = 0
    for c, idx in _class_indices(labels).items():
        if idx.size < k:
            raise ValueError(f"class {c} has {idx.size} samples, fewer than k={k}")
        shuffled = rng.permutation(idx)
        assignments[shuffled] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return FoldPlan(k, assignments)


# ---------------------------------------------------------------- training loop

class Dataset(Protocol):
    images: np.ndarray
    labels: np.ndarray


@dataclass
class ArrayDataset:
    images: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if not self.class_names:
            self.class_names = [str(i) for i in range(self.labels.shape[1])]

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, idx) -> "ArrayDataset":
        return ArrayDataset(self.images[idx], self.labels[idx], list(self.class_names))

    @property
    def label_indices(self) -> np.ndarray:
        return self.labels.argmax(axis=1)


def as_array_dataset(ds) -> ArrayDataset:
    if isinstance(ds, ArrayDataset):
        return ds
    return ArrayDataset(np.asarray(ds.images), np.asarray(ds.labels), list(getattr(ds, "class_names", [])))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: Optional[float]
    val_acc: Optional[float]


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.epochs]

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(r) for r in self.epochs],
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }


def evaluate_loss_acc(model: DualBackboneNet, ds: ArrayDataset, batch_size: int = 64) -> tuple[float, float]:
    probs = model.predict_proba(ds.images, batch_size)
    loss = float(np.mean(-np.sum(ds.labels * np.log(probs + LOG_EPS), axis=1)))
    acc = float(np.mean(probs.argmax(axis=1) == ds.label_indices))
    return loss, acc


def train_loop(
    model: DualBackboneNet,
    dataset,
    config: TrainConfig,
    validation=None,
    on_epoch: Optional[Callable[[EpochRecord], Optional[bool]]] = None,
) -> tuple[dict[str, np.ndarray], History]:
    """Minibatch training with early stopping on validation loss.

    Without an explicit ``validation`` set, ``config.val_fraction`` of the
    data is held out by stratified split; a fraction of 0 disables early
    stopping. The model ends holding the best-epoch parameters. ``on_epoch``
    may return True to end training after the current epoch.
    """
    train = as_array_dataset(dataset)
    if len(train) == 0:
        raise TrainingError("empty training set")
    val = as_array_dataset(validation) if validation is not None else None
    if val is None and config.val_fraction > 0:
        tr_idx, va_idx = stratified_split(train.label_indices, config.val_fraction, config.seed)
        train, val = train.subset(tr_idx), train.subset(va_idx)

    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config.optimizer, config.lr)
    params = model.parameters()
    history = History()
    best_loss, best_state, wait = math.inf, None, 0
    n = len(train)

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            dropout_seed = int(rng.integers(2**32))
            model.zero_grad()
            with Tape() as tape:
                out = model.forward(Tensor(train.images[idx]), training=True, dropout_seed=dropout_seed)
                loss = cross_entropy(out.probs, Tensor(train.labels[idx]))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch} step {step}")
            backward(tape, loss)
            opt.step(params, {k: v.grad for k, v in params.items()})
            loss_sum += value * idx.size
            correct += int(np.sum(out.probs.data.argmax(axis=1) == train.label_indices[idx]))

        val_loss = val_acc = None
        if val is not None:
            val_loss, val_acc = evaluate_loss_acc(model, val, max(config.batch_size, 64))
        record = EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc)
        history.epochs.append(record)
        log.debug("epoch %d: %s", epoch, record)
        if on_epoch is not None and on_epoch(record):
            break

        if val is None:
            continue
        if val_loss < best_loss:
            best_loss, best_state, wait = val_loss, model.state(), 0
            history.best_epoch = epoch
        else:
            wait += 1
            if wait > config.early_stop_patience:
                history.stopped_early = True
                break

    if best_state is not None:
        model.load_state(best_state)
    else:
        history.best_epoch = len(history.epochs) - 1
    return model.state(), history


def evaluate(model: DualBackboneNet, dataset, class_names: Optional[Sequence[str]] = None) -> EvalReport:
    ds = as_array_dataset(dataset)
    probs = model.predict_proba(ds.images)
    return EvalReport.build(ds.label_indices, probs, class_names or ds.class_names)


# ---------------------------------------------------------------- cross-validation and sweeps

METRIC_COLUMNS = ("acc", "macroP", "macroR", "macroF1")


def _metric_row(report: EvalReport) -> dict[str, float]:
    macro = report.metrics.macro
    return {"acc": macro["accuracy"], "macroP": macro["precision"], "macroR": macro["recall"], "macroF1": macro["f1"]}


def mean_row(rows: Sequence[Mapping[str, float]], columns: Sequence[str] = METRIC_COLUMNS) -> dict[str, float]:
    return {c: float(np.mean([r[c] for r in rows])) for c in columns}


def cross_validate(spec: ModelSpec, dataset, config: TrainConfig, k: int = 5, model_seed: int = 0) -> list[dict]:
    """Train one fresh model per fold, evaluate on the held-out fold.

    Returns per-fold rows followed by a ``Mean`` row.
    """
    ds = as_array_dataset(dataset)
    plan = kfold_partition(ds.label_indices, k, config.seed)
    rows = []
    for i in range(k):
        tr, te = plan.split(i)
        model = DualBackboneNet(spec, seed=model_seed + i)
        # early stopping (if any) uses an inner split of the training folds
        train_loop(model, ds.subset(tr), config)
        report = evaluate(model, ds.subset(te))
        rows.append({"fold": f"Fold {i + 1}", "n_test": int(te.size), **_metric_row(report)})
    rows.append({"fold": "Mean", "n_test": int(len(ds)), **mean_row(rows)})
    return rows


SWEEP_COLUMNS = ("optimizer", "batch", "lr", *METRIC_COLUMNS)


def sensitivity_sweep(
    spec: ModelSpec,
    dataset,
    optimizers: Sequence[str],
    batch_sizes: Sequence[int],
    lrs: Sequence[float],
    base: TrainConfig = TrainConfig(),
    validation=None,
    model_seed: int = 0,
) -> list[dict]:
    """One train/eval run per (optimizer, batch, lr) cell; failed cells carry an ``error``."""
    grid = list(itertools.product(optimizers, batch_sizes, lrs))
    if not grid:
        raise ValueError("empty sweep grid")
    ds = as_array_dataset(dataset)
    if validation is None:
        tr, va = stratified_split(ds.label_indices, base.val_fraction or 0.2, base.seed)
        ds, val = ds.subset(tr), ds.subset(va)
    else:
        val = as_array_dataset(validation)
    rows = []
    for opt_name, batch, lr in grid:
        row = {"optimizer": opt_name, "batch": int(batch), "lr": float(lr)}
        try:
            cfg = replace(base, optimizer=opt_name, batch_size=int(batch), lr=float(lr), val_fraction=0.0)
            model = DualBackboneNet(spec, seed=model_seed)
            train_loop(model, ds, cfg, validation=val)
            row.update(_metric_row(evaluate(model, val)))
            row["error"] = ""
        except Exception as exc:  # a failed cell is recorded, not fatal
            log.warning("sweep cell %s failed: %s", row, exc)
            row.update({c: float("nan") for c in METRIC_COLUMNS})
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows
