"""Synthetic image tasks for desk-scale experiments and fixtures."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from dbfga.training import ArrayDataset

DEFAULT_FREQUENCIES = (2.0, 4.0, 6.0, 8.0)


def gratings(
    n_per_class: int,
    size: int = 32,
    frequencies: Sequence[float] = DEFAULT_FREQUENCIES,
    noise: float = 0.1,
    contrast: float = 0.25,
    seed: int = 0,
) -> ArrayDataset:
    """Sinusoidal gratings, one class per spatial frequency (cycles per image).

    Orientation and phase are uniform at random, so only frequency carries
    the label. Pixels are in [0, 1], grayscale replicated to three channels.
    """
    rng = np.random.default_rng(seed)
    k = len(frequencies)
    yy, xx = np.mgrid[0:size, 0:size] / size
    images = np.empty((n_per_class * k, size, size, 3))
    labels = np.zeros((n_per_class * k, k))
    i = 0
    for c, freq in enumerate(frequencies):
        for _ in range(n_per_class):
            theta = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
            img = np.clip(0.5 + contrast * wave + rng.normal(0, noise, wave.shape), 0.0, 1.0)
            images[i] = img[..., None]
            labels[i, c] = 1.0
            i += 1
    order = rng.permutation(len(images))
    names = [f"freq{f:g}" for f in frequencies]
    return ArrayDataset(images[order], labels[order], names)


def brightness_classes(n_per_class: int, size: int = 16, classes: int = 2, seed: int = 0) -> ArrayDataset:
    """Flat images whose mean intensity encodes the class; trivially separable."""
    rng = np.random.default_rng(seed)
    levels = np.linspace(0.15, 0.85, classes)
    images, labels = [], []
    for c, level in enumerate(levels):
        for _ in range(n_per_class):
            images.append(np.clip(level + rng.normal(0, 0.03, (size, size, 1)), 0, 1).repeat(3, axis=-1))
            onehot = np.zeros(classes)
            onehot[c] = 1.0
            labels.append(onehot)
    order = rng.permutation(len(images))
    return ArrayDataset(np.array(images)[order], np.array(labels)[order], [f"level{c}" for c in range(classes)])
