"""Grad-CAM heatmaps and colour overlays."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from dbfga import ops
from dbfga.tensor import Tape, Tensor, backward

DEFAULT_TAP = "fuse"
DEFAULT_ALPHA = 0.4

# blue -> green -> red, piecewise linear at 0, 0.5, 1
_CMAP_STOPS = np.array([0.0, 0.5, 1.0])
_CMAP_COLORS = np.array([[0.0, 0.0, 255.0], [0.0, 255.0, 0.0], [255.0, 0.0, 0.0]])


class UnknownTapError(KeyError):
    pass


@dataclass
class Heatmap:
    values: np.ndarray
    tap: str
    target: int
    upsampled: np.ndarray


def normalize_heatmap(raw: np.ndarray) -> np.ndarray:
    """ReLU then divide by the max; an all-zero map stays zero."""
    cam = np.maximum(raw, 0.0)
    peak = cam.max()
    return cam / peak if peak > 0 else cam


def logit_gradient(model, image: np.ndarray, target: int, tap: str) -> tuple[np.ndarray, np.ndarray]:
    """(A, d logit_target / dA) for the tapped map, from one tape sweep.

    ``model`` is any callable returning an object with ``logits`` and ``taps``
    (see :class:`dbfga.model.ForwardResult`).
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    with Tape() as tape:
        # the input is watched so every tap is on the tape, even for parameter-free models
        res = model(Tensor(x, requires_grad=True), training=False)
        if tap not in res.taps:
            raise UnknownTapError(f"unknown tap {tap!r}; available: {', '.join(sorted(res.taps))}")
        classes = res.logits.shape[-1]
        if not 0 <= target < classes:
            raise ValueError(f"target class {target} outside [0, {classes})")
        score = ops.pick(res.logits, (0, target))
    grads = backward(tape, score)
    fmap = res.taps[tap]
    return fmap.data[0], grads[fmap][0]


def gradcam(model, image: np.ndarray, target: int, tap: str = DEFAULT_TAP) -> Heatmap:
    fmap, grad = logit_gradient(model, image, target, tap)
    weights = grad.mean(axis=(0, 1))  # one alpha per channel
    values = normalize_heatmap(np.tensordot(fmap, weights, axes=([2], [0])))
    h, w = np.asarray(image).shape[-3:-1]
    up = ops.resize(Tensor(values[None, :, :, None]), h, w, "bilinear").data[0, :, :, 0]
    return Heatmap(values, tap, target, normalize_heatmap(up))


# ---------------------------------------------------------------- overlay rendering

def colormap(values: np.ndarray) -> np.ndarray:
    v = np.clip(values, 0.0, 1.0)
    return np.stack([np.interp(v, _CMAP_STOPS, _CMAP_COLORS[:, c]) for c in range(3)], axis=-1)


def render_gray(image: np.ndarray) -> np.ndarray:
    """H x W x 3 float image in [0, 1] -> uint8 grayscale replicated to RGB."""
    gray = np.clip(np.asarray(image, dtype=np.float64).mean(axis=-1), 0.0, 1.0)
    return np.repeat(np.round(gray * 255.0).astype(np.uint8)[..., None], 3, axis=-1)


def overlay(image: np.ndarray, heat: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    base = render_gray(image)
    if heat.shape != base.shape[:2]:
        raise ValueError(f"heatmap {heat.shape} does not match image {base.shape[:2]}")
    blended = (1.0 - alpha) * base + alpha * colormap(heat)
    return np.clip(np.round(blended), 0, 255).astype(np.uint8)


def write_png(pixels: np.ndarray, path) -> Path:
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8), mode="RGB").save(path, format="PNG")
    return path


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def overlay_emit(image: np.ndarray, heatmap: Heatmap, alpha: float, out_path) -> Path:
    return write_png(overlay(image, heatmap.upsampled, alpha), out_path)


def heatmap_filename(input_path, class_name: str) -> str:
    return f"{Path(input_path).stem}.{class_name}.cam.png"
