from types import SimpleNamespace

import numpy as np
import pytest
from conftest import tiny_spec
from hypothesis import given
from hypothesis import strategies as st

from dbfga import ops
from dbfga.explain import (
    UnknownTapError,
    colormap,
    gradcam,
    heatmap_filename,
    logit_gradient,
    normalize_heatmap,
    overlay,
    overlay_emit,
    read_png,
    render_gray,
)
from dbfga.model import DualBackboneNet
from dbfga.tensor import Tape, Tensor, backward


def toy_model(weight=2.0):
    """logit_0 = weight * GAP(A) with A = sum of input channels minus 0.5."""

    def forward(x, training=False):
        a = ops.sub(ops.sum(x, axis=-1, keepdims=True), 0.5)
        logit0 = ops.mul(ops.global_avg(a), weight)
        logits = ops.reshape(ops.concat([logit0, ops.mul(logit0, -1.0)], axis=-1), (x.shape[0], 2))
        return SimpleNamespace(logits=logits, probs=ops.softmax(logits), taps={"map": a})

    return forward


def test_toy_closed_form(rng):
    img = rng.random((6, 6, 1))
    heat = gradcam(toy_model(), img, target=0, tap="map")
    a = img[..., 0] - 0.5
    expected = np.maximum(a, 0) / np.maximum(a, 0).max()
    assert np.max(np.abs(heat.values - expected)) < 1e-9
    # the other class sees the negated map
    other = gradcam(toy_model(), img, target=1, tap="map")
    assert np.max(np.abs(other.values - np.maximum(-a, 0) / np.maximum(-a, 0).max())) < 1e-9


def test_unknown_tap_lists_available():
    with pytest.raises(UnknownTapError, match="fuse"):
        gradcam(DualBackboneNet(tiny_spec()), np.zeros((8, 8, 3)), 0, tap="nope")


def test_target_range():
    with pytest.raises(ValueError):
        gradcam(DualBackboneNet(tiny_spec()), np.zeros((8, 8, 3)), 7)


@given(st.integers(0, 2**31), st.sampled_from(["fuse", "attn_a", "backbone_b", "concat"]))
def test_heatmap_range(seed, tap):
    rng = np.random.default_rng(seed)
    net = DualBackboneNet(tiny_spec(), seed=seed % 50)
    net.params["head.w"].data = rng.standard_normal(net.params["head.w"].shape)
    heat = gradcam(net, rng.random((8, 8, 3)), int(rng.integers(3)), tap)
    for v in (heat.values, heat.upsampled):
        assert np.all((v >= 0) & (v <= 1))
        assert v.max() == 1.0 or not v.any()
    assert heat.upsampled.shape == (8, 8)


def test_same_gradient_as_training_path(rng):
    net = DualBackboneNet(tiny_spec(), seed=2)
    net.params["head.w"].data = rng.standard_normal(net.params["head.w"].shape)
    img = rng.random((8, 8, 3))
    a, g = logit_gradient(net, img, 1, "fuse")
    with Tape() as tape:
        res = net.forward(Tensor(img[None]), training=False)
        score = ops.sum(ops.mul(res.logits, Tensor([[0.0, 1.0, 0.0]])))
    g2 = backward(tape, score)[res.taps["fuse"]][0]
    assert a.tobytes() == res.taps["fuse"].data[0].tobytes()
    assert g.tobytes() == g2.tobytes()


def test_target_contrast_on_trained_toy(rng):
    img = rng.random((6, 6, 1))
    a = gradcam(toy_model(), img, 0, "map").values
    b = gradcam(toy_model(), img, 1, "map").values
    assert np.linalg.norm(a - b) > 0


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
def test_normalize_idempotent(vals):
    once = normalize_heatmap(np.array(vals))
    assert np.array_equal(normalize_heatmap(once), once)


def test_colormap_stops():
    assert colormap(np.array([0.0, 0.5, 1.0])).tolist() == [[0, 0, 255], [0, 255, 0], [255, 0, 0]]


def test_overlay_alpha_cases(rng):
    img = rng.random((5, 7, 3))
    heat = rng.random((5, 7))
    assert np.array_equal(overlay(img, heat, 0.0), render_gray(img))
    top = overlay(img, np.ones((5, 7)), 1.0)
    assert np.all(top == np.array([255, 0, 0], dtype=np.uint8))
    with pytest.raises(ValueError):
        overlay(img, heat, 1.5)


def test_png_round_trip(tmp_path, rng):
    heat = gradcam(toy_model(), rng.random((6, 6, 1)), 0, "map")
    img = rng.random((6, 6, 3))
    path = overlay_emit(img, heat, 0.4, tmp_path / "x.cam.png")
    assert np.array_equal(read_png(path), overlay(img, heat.upsampled, 0.4))


def test_unwritable_path(tmp_path, rng):
    heat = gradcam(toy_model(), rng.random((6, 6, 1)), 0, "map")
    with pytest.raises(OSError):
        overlay_emit(rng.random((6, 6, 3)), heat, 0.4, tmp_path / "missing" / "x.png")


def test_filename():
    assert heatmap_filename("/a/b/scan_01.png", "glioma") == "scan_01.glioma.cam.png"
