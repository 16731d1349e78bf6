"""Central-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from dbfga.tensor import Tape, Tensor, Variable, backward, no_tape


def numerical_gradient(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-6,
    coords: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``; perturbs ``x.data`` in place and restores it."""
    flat = x.data.reshape(-1)
    if not np.shares_memory(flat, x.data):
        raise ValueError("tensor data must be contiguous for in-place probing")
    coords = np.arange(flat.size) if coords is None else coords
    out = np.zeros(flat.size)
    with no_tape():
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            fp = f(x).item()
            flat[i] = orig - step
            fm = f(x).item()
            flat[i] = orig
            out[i] = (fp - fm) / (2 * step)
    return out.reshape(x.shape)


def analytic_gradient(f: Callable[[Tensor], Tensor], x: Tensor) -> np.ndarray:
    """d f / d x through the tape, leaving any Variable.grad untouched."""
    watched = x.requires_grad
    saved = x.grad.copy() if isinstance(x, Variable) else None
    x.requires_grad = True
    try:
        with Tape() as tape:
            loss = f(x)
        grads = backward(tape, loss)
        return grads[x].copy()
    finally:
        x.requires_grad = watched
        if saved is not None:
            x.grad = saved


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-6,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |numeric|).

    ``f`` must return a scalar tensor. ``max_coords`` samples a random subset
    of coordinates for large tensors.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x.data = np.ascontiguousarray(x.data)
    coords = None
    if max_coords is not None and x.size > max_coords:
        coords = np.random.default_rng(seed).choice(x.size, size=max_coords, replace=False)
    analytic = analytic_gradient(f, x).reshape(-1)
    numeric = numerical_gradient(f, x, step, coords).reshape(-1)
    idx = np.arange(x.size) if coords is None else coords
    if idx.size == 0:
        return 0.0
    err = np.abs(analytic[idx] - numeric[idx]) / np.maximum(1.0, np.abs(numeric[idx]))
    return float(err.max())
