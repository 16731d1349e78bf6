"""Frequency-gated attention (FGA) and the CBAM baseline.

Both blocks map an N x H x W x C feature map to one of the same shape and
return every intermediate map so range and fusion properties can be checked.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from dbfga import ops
from dbfga.spectral import fft_magnitude
from dbfga.tensor import ShapeError, Tensor, Variable, init_tensor


@dataclass(frozen=True)
class AttentionConfig:
    channels: int
    reduction: int = 16
    spatial_kernel: int = 7
    gate_hidden: int = 32
    bias: bool = True

    def __post_init__(self):
        if self.channels < 1 or self.reduction < 1:
            raise ValueError("channels and reduction must be >= 1")
        if self.spatial_kernel % 2 == 0:
            raise ValueError(f"spatial kernel must be odd, got {self.spatial_kernel}")
        if self.gate_hidden < 1:
            raise ValueError("gate_hidden must be >= 1")

    @property
    def hidden(self) -> int:
        """Bottleneck width C // r, floored at 1."""
        return max(1, self.channels // self.reduction)


def _var(shape, scheme, seed, name, **kw) -> Variable:
    return Variable(init_tensor(shape, scheme, seed=seed, **kw).data, name=name)


def _zeros(n, name) -> Variable:
    return Variable(np.zeros(n), name=name)


class _ParamSet:
    """Dataclass mixin: named iteration over the Variable fields."""

    def variables(self, prefix: str = "") -> dict[str, Variable]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Variable):
                out[prefix + f.name] = v
        return out

    def count(self) -> int:
        return int(np.sum([v.size for v in self.variables().values()]))


@dataclass
class CbamParams(_ParamSet):
    config: AttentionConfig
    w1: Variable
    w2: Variable
    spatial_w: Variable
    b1: Optional[Variable] = None
    b2: Optional[Variable] = None
    spatial_b: Optional[Variable] = None

    @classmethod
    def init(cls, config: AttentionConfig, seed: int = 0) -> "CbamParams":
        c, m, k = config.channels, config.hidden, config.spatial_kernel
        ss = np.random.SeedSequence(seed).generate_state(3)
        p = cls(
            config,
            w1=_var((m, c), "he_uniform", int(ss[0]), "w1"),
            w2=_var((c, m), "glorot_uniform", int(ss[1]), "w2"),
            spatial_w=_var((k, k, 2, 1), "glorot_uniform", int(ss[2]), "spatial_w"),
        )
        if config.bias:
            p.b1, p.b2, p.spatial_b = _zeros(m, "b1"), _zeros(c, "b2"), _zeros(1, "spatial_b")
        return p


@dataclass
class FgaParams(_ParamSet):
    config: AttentionConfig
    w1: Variable
    w2: Variable
    spatial_w: Variable
    freq1_w: Variable
    freq2_w: Variable
    gate1_w: Variable
    gate2_w: Variable
    b1: Optional[Variable] = None
    b2: Optional[Variable] = None
    spatial_b: Optional[Variable] = None
    freq1_b: Optional[Variable] = None
    freq2_b: Optional[Variable] = None
    gate1_b: Optional[Variable] = None
    gate2_b: Optional[Variable] = None

    @classmethod
    def init(cls, config: AttentionConfig, seed: int = 0) -> "FgaParams":
        c, m, k, gh = config.channels, config.hidden, config.spatial_kernel, config.gate_hidden
        ss = [int(s) for s in np.random.SeedSequence(seed).generate_state(7)]
        p = cls(
            config,
            w1=_var((m, c), "he_uniform", ss[0], "w1"),
            w2=_var((c, m), "glorot_uniform", ss[1], "w2"),
            spatial_w=_var((k, k, 2, 1), "glorot_uniform", ss[2], "spatial_w"),
            freq1_w=_var((1, 1, c, m), "he_uniform", ss[3], "freq1_w"),
            freq2_w=_var((3, 3, m, c), "he_uniform", ss[4], "freq2_w"),
            gate1_w=_var((gh, c), "he_uniform", ss[5], "gate1_w"),
            gate2_w=_var((1, gh), "glorot_uniform", ss[6], "gate2_w"),
        )
        if config.bias:
            p.b1, p.b2, p.spatial_b = _zeros(m, "b1"), _zeros(c, "b2"), _zeros(1, "spatial_b")
            p.freq1_b, p.freq2_b = _zeros(m, "freq1_b"), _zeros(c, "freq2_b")
            p.gate1_b, p.gate2_b = _zeros(gh, "gate1_b"), _zeros(1, "gate2_b")
        return p


def param_count(config: AttentionConfig, kind: str) -> int:
    """Closed-form parameter count of an attention block."""
    c, m, k, gh = config.channels, config.hidden, config.spatial_kernel, config.gate_hidden
    bias = 1 if config.bias else 0
    if kind == "none":
        return 0
    shared = (m * c + bias * m) + (c * m + bias * c) + (k * k * 2 + bias)
    if kind == "cbam":
        return shared
    if kind == "fga":
        freq = (c * m + bias * m) + (9 * m * c + bias * c)
        gate = (c * gh + bias * gh) + (gh + bias)
        return shared + freq + gate
    raise ValueError(f"unknown attention kind {kind!r}")


def _check_channels(x: Tensor, config: AttentionConfig) -> None:
    if x.ndim != 4 or x.shape[-1] != config.channels:
        raise ShapeError(f"expected N x H x W x {config.channels} input, got {x.shape}")


def _mlp(desc: Tensor, p) -> Tensor:
    return ops.dense(ops.relu(ops.dense(desc, p.w1, p.b1)), p.w2, p.b2)


def channel_attention(x: Tensor, params) -> tuple[Tensor, Tensor]:
    """M_c = sigmoid(W2 relu(W1 GAP(x))), X_c = x * M_c."""
    _check_channels(x, params.config)
    m_c = ops.sigmoid(_mlp(ops.global_avg(x), params))
    return m_c, ops.mul(x, m_c)


def spatial_attention(x: Tensor, params) -> tuple[Tensor, Tensor]:
    """M_s = sigmoid(conv_k([avg_c(x), max_c(x)])), X_s = x * M_s."""
    pooled = ops.concat([ops.channel_avg(x), ops.channel_max(x)], axis=-1)
    m_s = ops.sigmoid(ops.conv2d(pooled, params.spatial_w, params.spatial_b, padding="same"))
    return m_s, ops.mul(x, m_s)


def frequency_attention(x: Tensor, params: FgaParams) -> tuple[Tensor, Tensor]:
    """M_f = sigmoid(relu(conv3x3(relu(conv1x1(|FFT2D(x)|))))), X_f = x * M_f.

    The sigmoid sees a ReLU output, so M_f lies in [0.5, 1).
    """
    _check_channels(x, params.config)
    spectrum = fft_magnitude(x)
    reduced = ops.relu(ops.conv2d(spectrum, params.freq1_w, params.freq1_b))
    restored = ops.relu(ops.conv2d(reduced, params.freq2_w, params.freq2_b))
    m_f = ops.sigmoid(restored)
    return m_f, ops.mul(x, m_f)


def dynamic_gate(x_co: Tensor, params: FgaParams) -> Tensor:
    """Per-sample scalar gate, shape N x 1 x 1 x 1."""
    hidden = ops.relu(ops.dense(ops.global_avg(x_co), params.gate1_w, params.gate1_b))
    return ops.sigmoid(ops.dense(hidden, params.gate2_w, params.gate2_b))


@dataclass
class FgaOutput:
    out: Tensor
    m_c: Tensor
    x_c: Tensor
    m_s: Tensor
    x_s: Tensor
    x_co: Tensor
    m_f: Tensor
    x_f: Tensor
    gate: Tensor
    x_fuse: Tensor


def fga_block(x: Tensor, params: FgaParams) -> FgaOutput:
    m_c, x_c = channel_attention(x, params)
    m_s, x_s = spatial_attention(x, params)
    x_co = ops.mul(x_c, x_s)
    m_f, x_f = frequency_attention(x, params)
    gate = dynamic_gate(x_co, params)
    mix = ops.add(ops.mul(x_co, gate), ops.mul(x_f, ops.sub(1.0, gate)))
    # rounding can put the mix one ulp outside [min, max]; snap it back with a
    # constant correction so the gradient stays that of the convex combination
    lo, hi = np.minimum(x_co.data, x_f.data), np.maximum(x_co.data, x_f.data)
    x_fuse = ops.add(mix, Tensor(np.clip(mix.data, lo, hi) - mix.data))
    out = ops.add(x, x_fuse)
    return FgaOutput(out, m_c, x_c, m_s, x_s, x_co, m_f, x_f, gate, x_fuse)


@dataclass
class CbamOutput:
    out: Tensor
    m_c: Tensor
    m_s: Tensor
    refined: Tensor


def cbam_block(x: Tensor, params: CbamParams, residual: bool = True) -> CbamOutput:
    """Channel attention over shared-MLP avg+max descriptors, then spatial attention."""
    _check_channels(x, params.config)
    logits = ops.add(_mlp(ops.global_avg(x), params), _mlp(ops.global_max(x), params))
    m_c = ops.sigmoid(logits)
    m_s, refined = spatial_attention(ops.mul(x, m_c), params)
    out = ops.add(x, refined) if residual else refined
    return CbamOutput(out, m_c, m_s, refined)
