"""Differentiable operations over :class:`~dbfga.tensor.Tensor`.

Each function computes its forward value with numpy and, when a tape is
active and some input requires gradients, records a backward rule that maps
the upstream gradient to one gradient per input (``None`` for constants).
Spatial operations expect rank-4 N x H x W x C input.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dbfga.tensor import ShapeError, Tensor, active_tape


class UnsupportedKernelError(ValueError):
    pass


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {b.shape} against {a.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def elementwise(a, b, kind: str) -> Tensor:
    try:
        fn = {"add": add, "sub": sub, "mul": mul}[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(a, b)


# ---------------------------------------------------------------- activations

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# largest double below 1 and smallest normal double: sigmoid never rounds onto the bounds
_SIG_HI = 1.0 - 2.0**-53
_SIG_LO = float(np.finfo(np.float64).tiny)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(s, _SIG_LO, _SIG_HI)


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result(s, (x,), bw)


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax}[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def log(x: Tensor, eps: float = 0.0) -> Tensor:
    shifted = x.data + eps
    return _result(np.log(shifted), (x,), lambda g: (g / shifted,))


# ---------------------------------------------------------------- reductions / reshaping

def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), bw)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _result(out, (x,), bw)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def pick(x: Tensor, index: tuple[int, ...]) -> Tensor:
    """Select one element as a scalar tensor."""
    def bw(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _result(np.asarray(x.data[index]), (x,), bw)


# ---------------------------------------------------------------- dense

def dense(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """y = x W^T (+ b) over the last axis; ``w`` is (out, in)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"dense: input length {x.shape[-1]} does not match weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"dense: bias {b.shape} does not match {w.shape[0]} outputs")
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data

    def bw(g):
        g2 = g.reshape(-1, w.shape[0])
        x2 = x.data.reshape(-1, w.shape[1])
        grads = [g @ w.data, g2.T @ x2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    inputs = (x, w) if b is None else (x, w, b)
    return _result(y, inputs, bw)


# ---------------------------------------------------------------- convolution

def _conv_geometry(h: int, w: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    if padding == "same":
        return (k - 1) // 2, -(-h // stride), -(-w // stride)
    if padding == "valid":
        if h < k or w < k:
            raise ShapeError(f"valid convolution needs input >= kernel {k}, got {h}x{w}")
        return 0, (h - k) // stride + 1, (w - k) // stride + 1
    raise ValueError(f"unknown padding {padding!r}")


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    padding: str = "same",
    depthwise: bool = False,
) -> Tensor:
    """2-D cross-correlation, NHWC input, ``w`` of shape k x k x Cin x Cout.

    With ``depthwise`` the weight is k x k x C x 1 and each channel is
    filtered by its own kernel (Cout = Cin).
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects N x H x W x C input, got {x.shape}")
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"conv2d expects a square k x k x Cin x Cout kernel, got {w.shape}")
    k = w.shape[0]
    if k % 2 == 0:
        raise UnsupportedKernelError(f"even kernel size {k} is not supported")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n, h, wd, cin = x.shape
    if w.shape[2] != cin:
        raise ShapeError(f"kernel expects {w.shape[2]} input channels, input has {cin}")
    if depthwise and w.shape[3] != 1:
        raise ShapeError(f"depthwise kernel must be k x k x C x 1, got {w.shape}")
    cout = cin if depthwise else w.shape[3]
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"bias {b.shape} does not match {cout} output channels")

    pad, ho, wo = _conv_geometry(h, wd, k, stride, padding)
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.data
    span_h, span_w = (ho - 1) * stride + 1, (wo - 1) * stride + 1

    def window(i, j):
        return xp[:, i:i + span_h:stride, j:j + span_w:stride, :]

    if depthwise:
        out = np.zeros((n, ho, wo, cin))
        for i in range(k):
            for j in range(k):
                out += window(i, j) * w.data[i, j, :, 0]
        cols = None
    else:
        # patches: N, Ho, Wo, Cin, k, k -> rows of (k, k, Cin) matching w's layout
        patches = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
        cols = patches.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * cin)
        out = (cols @ w.data.reshape(k * k * cin, cout)).reshape(n, ho, wo, cout)
    if b is not None:
        out = out + b.data

    def bw(g):
        gxp = np.zeros_like(xp)
        if depthwise:
            gw = np.zeros_like(w.data)
            for i in range(k):
                for j in range(k):
                    gw[i, j, :, 0] = (window(i, j) * g).sum(axis=(0, 1, 2))
                    gxp[:, i:i + span_h:stride, j:j + span_w:stride, :] += g * w.data[i, j, :, 0]
        else:
            g2 = g.reshape(-1, cout)
            gw = (cols.T @ g2).reshape(w.shape)
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + span_h:stride, j:j + span_w:stride, :] += g @ w.data[i, j].T
        gx = gxp[:, pad:pad + h, pad:pad + wd, :] if pad else gxp
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 1, 2)))
        return grads

    inputs = (x, w) if b is None else (x, w, b)
    return _result(out, inputs, bw)


# ---------------------------------------------------------------- pooling

def maxpool2x2(x: Tensor) -> Tensor:
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even height and width, got {h}x{w}")
    win = x.data.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)[..., None]
    out = np.take_along_axis(win, idx, axis=-1)[..., 0]

    def bw(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, idx, g[..., None], axis=-1)
        gw = gw.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return (gw.reshape(n, h, w, c),)

    return _result(out, (x,), bw)


def global_avg(x: Tensor) -> Tensor:
    """N x H x W x C -> N x 1 x 1 x C."""
    n, h, w, _ = x.shape
    out = x.data.mean(axis=(1, 2), keepdims=True)
    return _result(out, (x,), lambda g: (np.broadcast_to(g / (h * w), x.shape).copy(),))


def global_max(x: Tensor) -> Tensor:
    n, h, w, c = x.shape
    flat = x.data.reshape(n, h * w, c)
    idx = flat.argmax(axis=1)[:, None, :]
    out = np.take_along_axis(flat, idx, axis=1).reshape(n, 1, 1, c)

    def bw(g):
        gf = np.zeros_like(flat)
        np.put_along_axis(gf, idx, g.reshape(n, 1, c), axis=1)
        return (gf.reshape(x.shape),)

    return _result(out, (x,), bw)


def channel_avg(x: Tensor) -> Tensor:
    """N x H x W x C -> N x H x W x 1."""
    c = x.shape[-1]
    out = x.data.mean(axis=-1, keepdims=True)
    return _result(out, (x,), lambda g: (np.broadcast_to(g / c, x.shape).copy(),))


def channel_max(x: Tensor) -> Tensor:
    idx = x.data.argmax(axis=-1)[..., None]
    out = np.take_along_axis(x.data, idx, axis=-1)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g, axis=-1)
        return (gx,)

    return _result(out, (x,), bw)


def pool(x: Tensor, kind: str) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"pool expects N x H x W x C input, got {x.shape}")
    fns = {
        "maxpool2x2": maxpool2x2,
        "global_avg": global_avg,
        "global_max": global_max,
        "channel_avg": channel_avg,
        "channel_max": channel_max,
    }
    if kind not in fns:
        raise ValueError(f"unknown pool kind {kind!r}")
    return fns[kind](x)


# ---------------------------------------------------------------- resampling

def _cubic_weight(d: np.ndarray, a: float = -0.5) -> np.ndarray:
    d = np.abs(d)
    near = ((a + 2) * d - (a + 3)) * d * d + 1
    far = ((a * d - 5 * a) * d + 8 * a) * d - 4 * a
    return np.where(d <= 1, near, np.where(d < 2, far, 0.0))


def interp_matrix(n_in: int, n_out: int, kind: str) -> np.ndarray:
    """Row-stochastic n_out x n_in matrix for 1-D half-pixel-centred resampling."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if kind == "bilinear":
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        t = src - i0
        np.add.at(m, (rows, i0), 1.0 - t)
        np.add.at(m, (rows, i1), t)
    elif kind == "bicubic":
        i0 = np.floor(src).astype(int)
        t = src - i0
        for off in (-1, 0, 1, 2):
            idx = np.clip(i0 + off, 0, n_in - 1)
            np.add.at(m, (rows, idx), _cubic_weight(t - off))
    else:
        raise ValueError(f"unknown resize kind {kind!r}")
    return m


def resize(x: Tensor, out_h: int, out_w: int, kind: str = "bilinear") -> Tensor:
    """Per-channel separable resize of N x H x W x C maps.

    Bicubic uses the Catmull-Rom kernel with clamped edge sampling; bilinear
    uses half-pixel centres (align-corners false).
    """
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be >= 1, got {out_h}x{out_w}")
    n, h, w, c = x.shape
    ry = interp_matrix(h, out_h, kind)
    rx = interp_matrix(w, out_w, kind)
    out = np.einsum("oh,nhwc->nowc", ry, x.data, optimize=True)
    out = np.einsum("pw,nowc->nopc", rx, out, optimize=True)

    def bw(g):
        gi = np.einsum("pw,nopc->nowc", rx, g, optimize=True)
        return (np.einsum("oh,nowc->nhwc", ry, gi, optimize=True),)

    return _result(out, (x,), bw)


# ---------------------------------------------------------------- regularization

def dropout(x: Tensor, rate: float, training: bool, seed: int = 0) -> Tensor:
    """Inverted dropout; the identity at inference time or when rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = np.random.default_rng(seed).random(x.shape) >= rate
    scale = keep / (1.0 - rate)
    return _result(x.data * scale, (x,), lambda g: (g * scale,))
