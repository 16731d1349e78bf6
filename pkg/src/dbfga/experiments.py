"""Desk-scale experiments on synthetic gratings: overfit smoke test,
attention mechanism comparison and the optimizer-collapse sweep."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from dbfga.model import DualBackboneNet, ModelSpec
from dbfga.synthetic import gratings
from dbfga.training import TrainConfig, evaluate_loss_acc, train_loop

log = logging.getLogger(__name__)

# 32x32 texture task: backbone A ends at 8x8x16, backbone B at 4x4x32
GRATING_SPEC = ModelSpec(
    input_size=(32, 32),
    backbone_a=(8, 16),
    backbone_b=(8, 16, 32),
    fuse_channels=32,
    classes=4,
    reduction=4,
    spatial_kernel=7,
    gate_hidden=16,
)

SMOKE_SPEC = ModelSpec(
    input_size=(16, 16),
    backbone_a=(8, 16),
    backbone_b=(8, 16),
    fuse_channels=16,
    classes=4,
    dropout=0.3,
    reduction=4,
    spatial_kernel=7,
    gate_hidden=8,
)


@dataclass
class TaskData:
    train: object
    val: object


def grating_task(seed: int, n_train: int = 50, n_val: int = 25, size: int = 32, noise: float = 0.1) -> TaskData:
    """200 train / 100 val images at the defaults (per-class counts x 4 frequencies)."""
    return TaskData(
        gratings(n_train, size=size, noise=noise, seed=100 + seed),
        gratings(n_val, size=size, noise=noise, seed=200 + seed),
    )


def fit_and_score(spec: ModelSpec, task: TaskData, config: TrainConfig, model_seed: int) -> dict:
    t0 = time.perf_counter()
    model = DualBackboneNet(spec, seed=model_seed)
    _, history = train_loop(model, task.train, config, validation=task.val)
    _, acc = evaluate_loss_acc(model, task.val)
    return {
        "val_acc": acc,
        "epochs": len(history.epochs),
        "best_epoch": history.best_epoch,
        "seconds": time.perf_counter() - t0,
    }


# ---------------------------------------------------------------- overfit smoke test

@dataclass
class SmokeResult:
    reached: bool
    epochs: int
    train_acc: float
    losses: list[float] = field(default_factory=list)
    seconds: float = 0.0


def overfit_smoke(
    spec: ModelSpec = SMOKE_SPEC,
    n_per_class: int = 16,
    max_epochs: int = 200,
    lr: float = 1e-3,
    batch_size: int = 16,
    seed: int = 0,
) -> SmokeResult:
    """Train on 64 images until inference-mode train accuracy reaches 100%."""
    size = spec.input_size[0]
    data = gratings(n_per_class, size=size, frequencies=(1.0, 2.0, 3.0, 4.0), noise=0.05, seed=seed)
    model = DualBackboneNet(spec, seed=seed)
    config = TrainConfig(lr=lr, batch_size=batch_size, epochs=max_epochs, seed=seed, val_fraction=0.0)
    state = {"acc": 0.0, "epochs": 0}

    def check(record):
        _, acc = evaluate_loss_acc(model, data)
        state["acc"], state["epochs"] = acc, record.epoch + 1
        return acc == 1.0

    t0 = time.perf_counter()
    _, history = train_loop(model, data, config, on_epoch=check)
    return SmokeResult(state["acc"] == 1.0, state["epochs"], state["acc"], history.column("train_loss"), time.perf_counter() - t0)


# ---------------------------------------------------------------- mechanism check

MECHANISM_CONFIG = TrainConfig(optimizer="adam", lr=1e-3, batch_size=16, epochs=30, early_stop_patience=10)


def mechanism_check(seeds=range(5), spec: ModelSpec = GRATING_SPEC, config: TrainConfig = MECHANISM_CONFIG) -> dict:
    """Median validation accuracy of the FGA model and the no-attention baseline."""
    runs = {"fga": [], "none": []}
    for s in seeds:
        task = grating_task(s)
        for kind in runs:
            r = fit_and_score(replace(spec, attention=kind), task, replace(config, seed=s), model_seed=s)
            log.info("mechanism seed %d %s: %s", s, kind, r)
            runs[kind].append(r)
    fga = float(np.median([r["val_acc"] for r in runs["fga"]]))
    base = float(np.median([r["val_acc"] for r in runs["none"]]))
    return {"fga_median": fga, "none_median": base, "margin": fga - base, "runs": runs}


# ---------------------------------------------------------------- optimizer collapse

COLLAPSE_CELLS = (("adam", 1e-4), ("sgd", 1e-5))


def optimizer_collapse(seeds=range(3), spec: ModelSpec = GRATING_SPEC, batch_size: int = 16, epochs: int = 30) -> dict:
    """Median accuracy per (optimizer, lr) cell on the grating task."""
    cells: dict[str, list[float]] = {f"{o}-{lr:g}": [] for o, lr in COLLAPSE_CELLS}
    for s in seeds:
        task = grating_task(s)
        for opt, lr in COLLAPSE_CELLS:
            cfg = TrainConfig(optimizer=opt, lr=lr, batch_size=batch_size, epochs=epochs, early_stop_patience=epochs, seed=s)
            r = fit_and_score(spec, task, cfg, model_seed=s)
            log.info("collapse seed %d %s %g: %s", s, opt, lr, r)
            cells[f"{opt}-{lr:g}"].append(r["val_acc"])
    medians = {k: float(np.median(v)) for k, v in cells.items()}
    return {"medians": medians, "cells": cells}
