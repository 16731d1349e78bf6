"""Mini dual-backbone classifier with per-backbone attention and a concat-fuse head.

Backbone A is VGG-style (two 3x3 conv + ReLU per stage, then 2x2 max-pool);
backbone B is depthwise-separable (depthwise 3x3, pointwise 1x1 + ReLU, then
2x2 max-pool). Their attention-refined maps are aligned, concatenated, fused
by a 1x1 conv and classified through GAP, dropout, dense and softmax.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from dbfga import ops
from dbfga.attention import AttentionConfig, CbamParams, FgaParams, cbam_block, fga_block
from dbfga.tensor import ShapeError, Tensor, Variable, init_tensor

ATTENTION_KINDS = ("fga", "cbam", "none")


@dataclass(frozen=True)
class ModelSpec:
    input_size: tuple[int, int] = (64, 64)
    backbone_a: tuple[int, ...] = (16, 32, 64)
    backbone_b: tuple[int, ...] = (16, 32, 64, 128)
    fuse_channels: int = 64
    dropout: float = 0.3
    classes: int = 4
    attention: str = "fga"
    reduction: int = 16
    spatial_kernel: int = 7
    gate_hidden: int = 32
    bias: bool = True
    cbam_residual: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "backbone_a", tuple(int(v) for v in self.backbone_a))
        object.__setattr__(self, "backbone_b", tuple(int(v) for v in self.backbone_b))
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.attention not in ATTENTION_KINDS:
            raise ValueError(f"attention must be one of {ATTENTION_KINDS}, got {self.attention!r}")
        if not self.backbone_a or not self.backbone_b:
            raise ValueError("both backbones need at least one stage")
        h, w = self.input_size
        stride = 2 ** max(len(self.backbone_a), len(self.backbone_b))
        if h % stride or w % stride:
            raise ShapeError(f"input size {h}x{w} is not divisible by the total pool stride {stride}")

    def output_shape(self, which: str) -> tuple[int, int, int]:
        stages = self.backbone_a if which == "a" else self.backbone_b
        h, w = self.input_size
        return h // 2 ** len(stages), w // 2 ** len(stages), stages[-1]

    def attention_config(self, which: str) -> AttentionConfig:
        return AttentionConfig(
            channels=self.output_shape(which)[2],
            reduction=self.reduction,
            spatial_kernel=self.spatial_kernel,
            gate_hidden=self.gate_hidden,
            bias=self.bias,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("input_size", "backbone_a", "backbone_b"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class ForwardResult(NamedTuple):
    logits: Tensor
    probs: Tensor
    taps: dict


class Prediction(NamedTuple):
    index: int
    confidence: float
    probs: np.ndarray


def argmax_prediction(probs: np.ndarray) -> Prediction:
    """Argmax with lowest-index tie-breaking."""
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    idx = int(np.argmax(probs))
    return Prediction(idx, float(probs[idx]), probs)


class DualBackboneNet:
    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.params: dict[str, Variable] = {}
        self._seeds = np.random.SeedSequence(seed)
        self.attention: dict[str, Optional[object]] = {}
        self._build()

    # ------------------------------------------------------------ construction
    def _next_seed(self) -> int:
        return int(self._seeds.spawn(1)[0].generate_state(1)[0])

    def _add(self, name: str, shape, scheme: str, **kw) -> Variable:
        if scheme == "zeros":
            v = Variable(np.zeros(shape), name=name)
        else:
            v = Variable(init_tensor(shape, scheme, seed=self._next_seed(), **kw).data, name=name)
        self.params[name] = v
        return v

    def _build(self) -> None:
        spec = self.spec
        cin = 3
        for i, cout in enumerate(spec.backbone_a):
            self._add(f"a.{i}.conv1.w", (3, 3, cin, cout), "he_uniform")
            self._add(f"a.{i}.conv1.b", (cout,), "zeros")
            self._add(f"a.{i}.conv2.w", (3, 3, cout, cout), "he_uniform")
            self._add(f"a.{i}.conv2.b", (cout,), "zeros")
            cin = cout
        cin = 3
        for i, cout in enumerate(spec.backbone_b):
            # depthwise output is not rectified, hence glorot
            self._add(f"b.{i}.dw.w", (3, 3, cin, 1), "glorot_uniform", fan_in=9, fan_out=9)
            self._add(f"b.{i}.pw.w", (1, 1, cin, cout), "he_uniform")
            self._add(f"b.{i}.pw.b", (cout,), "zeros")
            cin = cout
        for which in ("a", "b"):
            cfg = spec.attention_config(which)
            if spec.attention == "fga":
                block = FgaParams.init(cfg, self._next_seed())
            elif spec.attention == "cbam":
                block = CbamParams.init(cfg, self._next_seed())
            else:
                block = None
            self.attention[which] = block
            if block is not None:
                for name, v in block.variables(prefix=f"attn_{which}.").items():
                    v.name = name
                    self.params[name] = v
        concat_c = spec.backbone_a[-1] + spec.backbone_b[-1]
        self._add("fuse.w", (1, 1, concat_c, spec.fuse_channels), "he_uniform")
        self._add("fuse.b", (spec.fuse_channels,), "zeros")
        # zero head: the untrained softmax starts uniform instead of saturated
        self._add("head.w", (spec.classes, spec.fuse_channels), "zeros")
        self._add("head.b", (spec.classes,), "zeros")

    # ------------------------------------------------------------ bookkeeping
    def parameters(self) -> dict[str, Variable]:
        return self.params

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.params.items()}

    def param_count(self) -> int:
        return int(np.sum([v.size for v in self.params.values()]))

    def zero_grad(self) -> None:
        for v in self.params.values():
            v.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in self.params.items():
            if state[k].shape != v.shape:
                raise ShapeError(f"{k}: expected {v.shape}, got {state[k].shape}")
            v.data = np.array(state[k], dtype=np.float64, copy=True)

    # ------------------------------------------------------------ forward
    def backbone(self, x: Tensor, which: str) -> Tensor:
        p = self.params
        stages = self.spec.backbone_a if which == "a" else self.spec.backbone_b
        for i in range(len(stages)):
            if which == "a":
                x = ops.relu(ops.conv2d(x, p[f"a.{i}.conv1.w"], p[f"a.{i}.conv1.b"]))
                x = ops.relu(ops.conv2d(x, p[f"a.{i}.conv2.w"], p[f"a.{i}.conv2.b"]))
            else:
                x = ops.conv2d(x, p[f"b.{i}.dw.w"], depthwise=True)
                x = ops.relu(ops.conv2d(x, p[f"b.{i}.pw.w"], p[f"b.{i}.pw.b"]))
            x = ops.maxpool2x2(x)
        return x

    def _attend(self, x: Tensor, which: str, taps: dict) -> Tensor:
        block = self.attention[which]
        if self.spec.attention == "fga":
            res = fga_block(x, block)
            taps[f"gate_{which}"] = res.gate
            return res.out
        if self.spec.attention == "cbam":
            return cbam_block(x, block, residual=self.spec.cbam_residual).out
        return x

    def _check_input(self, x: Tensor) -> None:
        h, w = self.spec.input_size
        if x.ndim != 4 or x.shape[1:] != (h, w, 3):
            raise ShapeError(f"expected N x {h} x {w} x 3 input, got {x.shape}")

    def forward(self, x: Tensor, training: bool = False, dropout_seed: int = 0) -> ForwardResult:
        self._check_input(x)
        taps: dict[str, Tensor] = {}
        fa = self.backbone(x, "a")
        fb = self.backbone(x, "b")
        taps["backbone_a"], taps["backbone_b"] = fa, fb
        fa = self._attend(fa, "a", taps)
        fb = self._attend(fb, "b", taps)
        taps["attn_a"], taps["attn_b"] = fa, fb
        ha, wa = fa.shape[1:3]
        hb, wb = fb.shape[1:3]
        if (ha, wa) != (hb, wb):
            if ha * wa < hb * wb:
                fa = ops.resize(fa, hb, wb, "bilinear")
            else:
                fb = ops.resize(fb, ha, wa, "bilinear")
        concat = ops.concat([fa, fb], axis=-1)
        taps["concat"] = concat
        fused = ops.relu(ops.conv2d(concat, self.params["fuse.w"], self.params["fuse.b"]))
        taps["fuse"] = fused
        pooled = ops.global_avg(fused)
        dropped = ops.dropout(pooled, self.spec.dropout, training, dropout_seed)
        n = x.shape[0]
        logits = ops.reshape(ops.dense(dropped, self.params["head.w"], self.params["head.b"]), (n, self.spec.classes))
        probs = ops.softmax(logits)
        return ForwardResult(logits, probs, taps)

    __call__ = forward

    def predict_proba(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        out = []
        for start in range(0, len(images), batch_size):
            out.append(self.forward(Tensor(images[start:start + batch_size])).probs.data)
        return np.concatenate(out, axis=0)

    def predict(self, image) -> Prediction:
        arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.shape[0] != 1:
            raise ShapeError(f"predict takes a single image, got batch of {arr.shape[0]}")
        return argmax_prediction(self.forward(Tensor(arr)).probs.data[0])


def backbone_forward(model: DualBackboneNet, x: Tensor, which: str) -> Tensor:
    return model.backbone(x, which)


def dual_fuse_forward(model: DualBackboneNet, x: Tensor, training: bool = False, dropout_seed: int = 0) -> ForwardResult:
    return model.forward(x, training, dropout_seed)
