import math

import numpy as np
import pytest
from conftest import tiny_spec
from hypothesis import given
from hypothesis import strategies as st

from dbfga.model import DualBackboneNet
from dbfga.synthetic import brightness_classes
from dbfga.tensor import Tensor, Variable
from dbfga.training import (
    SWEEP_COLUMNS,
    Adam,
    Adamax,
    OptimizerError,
    SGD,
    TrainConfig,
    TrainingError,
    cross_entropy,
    cross_validate,
    evaluate_loss_acc,
    kfold_partition,
    mean_row,
    sensitivity_sweep,
    stratified_split,
    train_loop,
)


def test_cross_entropy_examples():
    assert abs(cross_entropy(Tensor(np.full((1, 4), 0.25)), Tensor(np.eye(4)[:1])).item() - math.log(4)) < 1e-10
    assert cross_entropy(Tensor(np.eye(4)), Tensor(np.eye(4))).item() <= 1e-11
    p = np.array([[0.2, 0.8], [0.6, 0.4]])
    y = np.array([[0.0, 1.0], [0.0, 1.0]])
    per = [-math.log(0.8 + 1e-12), -math.log(0.4 + 1e-12)]
    assert abs(cross_entropy(Tensor(p), Tensor(y)).item() - sum(per) / 2) < 1e-15
    with pytest.raises(ValueError):
        cross_entropy(Tensor(p), Tensor(np.eye(3)))


def test_adam_first_step():
    v = Variable([0.0])
    Adam(1e-4).step({"w": v}, {"w": np.array([1.0])})
    assert abs(v.data[0] - (-1e-4 / (1 + 1e-8))) < 1e-20


def test_sgd_exact():
    v = Variable([1.0, 2.0])
    SGD(0.1).step({"w": v}, {"w": np.array([0.5, -1.0])})
    assert v.data.tolist() == [1.0 - 0.1 * 0.5, 2.0 + 0.1 * 1.0]


def test_adamax_first_step():
    v = Variable([0.0])
    Adamax(1e-3).step({"w": v}, {"w": np.array([2.0])})
    # m = 0.2, u = 2, correction 1/(1-0.9): step = 1e-3 * 2 / (2 + 1e-8)
    assert abs(v.data[0] + 1e-3 * 2 / (2 + 1e-8)) < 1e-18


@pytest.mark.parametrize("cls", [Adam, Adamax, SGD])
def test_zero_gradient_fixed_point(cls, rng):
    w = rng.standard_normal((3, 2))
    v = Variable(w.copy())
    opt = cls(1e-2)
    for _ in range(3):
        opt.step({"w": v}, {"w": np.zeros_like(w)})
    assert np.array_equal(v.data, w)
    assert opt.state.step == 3


def test_missing_gradient_named():
    with pytest.raises(OptimizerError, match="bias"):
        Adam(1e-3).step({"bias": Variable([1.0])}, {})


def test_split_examples():
    tr, va = stratified_split(np.zeros(10, dtype=int), 0.2, seed=0)
    assert (tr.size, va.size) == (8, 2)
    labels = np.repeat(np.arange(4), [1321, 1339, 1595, 1457])
    tr, va = stratified_split(labels, 0.2, seed=0)
    assert np.bincount(labels[va]).tolist() == [264, 268, 319, 291]
    with pytest.raises(ValueError):
        stratified_split(np.array([0, 1, 1]), 0.2, 0)


@given(st.lists(st.integers(0, 3), min_size=8, max_size=80), st.floats(0.05, 0.5), st.integers(0, 1000))
def test_split_partition(labels, frac, seed):
    labels = np.array(labels)
    counts = np.bincount(labels)
    if np.any(counts[counts > 0] < 2):
        return
    tr, va = stratified_split(labels, frac, seed)
    assert np.intersect1d(tr, va).size == 0
    assert np.array_equal(np.sort(np.concatenate([tr, va])), np.arange(labels.size))
    for c in np.unique(labels):
        n = counts[c]
        assert (labels[va] == c).sum() == min(n - 1, max(1, math.floor(n * frac + 0.5)))


def test_kfold_examples():
    assert kfold_partition(np.zeros(10, dtype=int), 5, 0).sizes() == [2] * 5
    assert sorted(kfold_partition(np.zeros(11, dtype=int), 5, 0).sizes(), reverse=True) == [3, 2, 2, 2, 2]
    with pytest.raises(ValueError):
        kfold_partition(np.array([0, 0, 1, 1, 1]), 3, 0)


@given(st.lists(st.integers(0, 3), min_size=20, max_size=120), st.integers(2, 6), st.integers(0, 1000))
def test_kfold_partition_properties(labels, k, seed):
    labels = np.array(labels)
    counts = np.bincount(labels)
    if np.any(counts[counts > 0] < k):
        return
    plan = kfold_partition(labels, k, seed)
    folds = [plan.fold(i) for i in range(k)]
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(labels.size))
    for c in np.unique(labels):
        per = [int((labels[f] == c).sum()) for f in folds]
        assert max(per) - min(per) <= 1
    assert max(plan.sizes()) - min(plan.sizes()) <= 1


def test_mean_row_is_arithmetic_mean():
    rows = [{"acc": a, "macroP": a, "macroR": a, "macroF1": a} for a in (0.98, 0.99, 0.985, 0.99, 0.989)]
    m = mean_row(rows)
    assert abs(m["acc"] - sum(r["acc"] for r in rows) / 5) < 1e-15


def test_train_config_validation():
    for kw in ({"lr": 0}, {"batch_size": 0}, {"epochs": 0}, {"early_stop_patience": -1}, {"optimizer": "rmsprop"}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def _fixture():
    return brightness_classes(8, size=8, classes=3, seed=0)


def test_train_determinism():
    cfg = TrainConfig(lr=1e-2, epochs=4, batch_size=8, seed=2)
    h = []
    for _ in range(2):
        net = DualBackboneNet(tiny_spec(), seed=1)
        state, hist = train_loop(net, _fixture(), cfg)
        h.append((hist.to_dict(), state))
    assert h[0][0] == h[1][0]
    assert all(h[0][1][k].tobytes() == h[1][1][k].tobytes() for k in h[0][1])


def test_patience_zero_stops_at_first_increase():
    cfg = TrainConfig(lr=0.3, epochs=40, batch_size=4, early_stop_patience=0, seed=0)
    net = DualBackboneNet(tiny_spec(), seed=0)
    _, hist = train_loop(net, _fixture(), cfg)
    losses = hist.column("val_loss")
    if hist.stopped_early:
        assert losses[-1] >= min(losses[:-1])
        assert all(b < a for a, b in zip(losses[:-2], losses[1:-1]))


def test_restores_best_epoch():
    data = _fixture()
    tr, va = stratified_split(data.label_indices, 0.25, 0)
    cfg = TrainConfig(lr=0.05, epochs=12, batch_size=4, early_stop_patience=2, seed=0)
    net = DualBackboneNet(tiny_spec(), seed=0)
    _, hist = train_loop(net, data.subset(tr), cfg, validation=data.subset(va))
    loss, _ = evaluate_loss_acc(net, data.subset(va))
    assert loss == min(hist.column("val_loss"))
    assert hist.epochs[hist.best_epoch].val_loss == loss


def test_on_epoch_can_stop():
    net = DualBackboneNet(tiny_spec(), seed=0)
    _, hist = train_loop(net, _fixture(), TrainConfig(epochs=10, val_fraction=0.0), on_epoch=lambda r: r.epoch == 2)
    assert len(hist.epochs) == 3


def test_nan_loss_names_step():
    net = DualBackboneNet(tiny_spec(), seed=0)
    data = _fixture()
    net.params["head.b"].data[0] = np.nan
    with pytest.raises(TrainingError, match="epoch 0 step"):
        train_loop(net, data, TrainConfig(epochs=1, val_fraction=0.0, batch_size=64))


def test_empty_dataset():
    data = _fixture().subset(np.array([], dtype=int))
    with pytest.raises(TrainingError):
        train_loop(DualBackboneNet(tiny_spec()), data, TrainConfig(val_fraction=0.0))


def test_sweep_cells_and_columns():
    rows = sensitivity_sweep(tiny_spec(), _fixture(), ["adam", "sgd"], [16], [1e-4], base=TrainConfig(epochs=1))
    assert len(rows) == 2
    assert set(SWEEP_COLUMNS) == {"optimizer", "batch", "lr", "acc", "macroP", "macroR", "macroF1"}
    assert all(set(SWEEP_COLUMNS) <= set(r) and r["error"] == "" for r in rows)


def test_sweep_records_failed_cell():
    rows = sensitivity_sweep(tiny_spec(), _fixture(), ["adam", "nesterov"], [8], [1e-3], base=TrainConfig(epochs=1))
    assert rows[0]["error"] == "" and rows[1]["error"].startswith("ValueError")
    assert math.isnan(rows[1]["acc"])


def test_cross_validate_rows():
    data = brightness_classes(5, size=8, classes=2, seed=0)
    rows = cross_validate(tiny_spec(classes=2), data, TrainConfig(epochs=2, lr=1e-2, batch_size=4), k=5)
    assert [r["fold"] for r in rows] == [f"Fold {i}" for i in range(1, 6)] + ["Mean"]
    assert sum(r["n_test"] for r in rows[:-1]) == 10
    for col in ("acc", "macroF1"):
        assert abs(rows[-1][col] - np.mean([r[col] for r in rows[:-1]])) < 1e-15
