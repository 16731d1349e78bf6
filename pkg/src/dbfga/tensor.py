"""Dense double-precision tensors, trainable variables and the operation tape.

Layout convention for rank-4 data is sample x height x width x channel.
Every differentiable operation in :mod:`dbfga.ops` records itself on the
active :class:`Tape`; :func:`backward` replays the record in reverse.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

MAX_RANK = 4


class ShapeError(ValueError):
    """Raised for invalid extents or non-conforming operand shapes."""


class MissingTapeError(RuntimeError):
    """Raised when backward reaches a tensor that was not recorded on the tape."""


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not 1 <= len(dims) <= MAX_RANK:
        raise ShapeError(f"rank must be 1..{MAX_RANK}, got shape {dims}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all extents must be >= 1, got shape {dims}")
    return dims


class Tensor:
    """Immutable-by-convention float64 array with an optional gradient link."""

    __slots__ = ("data", "requires_grad", "name", "_tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"rank {arr.ndim} exceeds the maximum of {MAX_RANK}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from dbfga import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from dbfga import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from dbfga import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from dbfga import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from dbfga import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from dbfga import ops
        return ops.mul(other, self)


class Variable(Tensor):
    """A leaf tensor whose gradient accumulates in ``grad``."""

    __slots__ = ("grad", "trainable")

    def __init__(self, data, trainable: bool = True, name: Optional[str] = None):
        super().__init__(data, requires_grad=trainable, name=name)
        self.data = np.array(self.data, dtype=np.float64, copy=True)
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Variable(shape={self.shape}, name={self.name!r}, trainable={self.trainable})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Record:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


_ACTIVE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("dbfga_tape", default=None)


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; operations executed inside the block whose
    inputs require gradients are appended in execution order, which is a
    topological order by construction.
    """

    def __init__(self):
        self.records: list[Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> None:
        output.requires_grad = True
        output._tape = self
        self.records.append(Record(output, tuple(inputs), backward_fn))


def active_tape() -> Optional[Tape]:
    return _ACTIVE.get()


@contextlib.contextmanager
def no_tape() -> Iterator[None]:
    """Suspend recording, e.g. for finite-difference probes or inference."""
    token = _ACTIVE.set(None)
    try:
        yield
    finally:
        _ACTIVE.reset(token)


class Gradients:
    """Mapping from tensors reached by :func:`backward` to d(loss)/d(tensor)."""

    def __init__(self, grads: dict[int, np.ndarray], tensors: dict[int, Tensor]):
        self._grads = grads
        self._tensors = tensors

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads and self._tensors[id(t)] is t

    def __getitem__(self, t: Tensor) -> np.ndarray:
        if t in self:
            return self._grads[id(t)]
        return np.zeros_like(t.data)

    def __len__(self) -> int:
        return len(self._grads)


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse-mode sweep over ``tape`` seeded with d(loss)/d(loss) = 1.

    Gradients of :class:`Variable` leaves are added to their ``grad`` slot;
    the returned :class:`Gradients` also exposes intermediate tensors.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if loss._tape is not tape:
        raise MissingTapeError("loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: dict[int, Tensor] = {id(loss): loss}
    for rec in reversed(tape.records):
        g = grads.get(id(rec.output))
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp._tape is not None and inp._tape is not tape:
                raise MissingTapeError(f"{inp!r} was recorded on a different tape")
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                tensors[key] = inp
    for key, t in tensors.items():
        if isinstance(t, Variable):
            t.grad = t.grad + grads[key]
    return Gradients(grads, tensors)


def fans(shape: Sequence[int]) -> tuple[int, int]:
    """(fan_in, fan_out) for dense ``(out, in)`` or conv ``(k, k, cin, cout)`` weights."""
    shape = tuple(shape)
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[1], shape[0]
    receptive = int(np.prod(shape[:-2]))
    return receptive * shape[-2], receptive * shape[-1]


def init_tensor(
    shape: Sequence[int],
    scheme: str = "zeros",
    *,
    value: float = 0.0,
    seed: Optional[int] = None,
    fan_in: Optional[int] = None,
    fan_out: Optional[int] = None,
) -> Tensor:
    """Create a tensor from an initialization scheme.

    ``glorot_uniform`` draws from +-sqrt(6/(fan_in+fan_out)) and is meant for
    sigmoid/softmax-terminated layers; ``he_uniform`` draws from
    +-sqrt(6/fan_in) for ReLU-terminated layers.
    """
    dims = check_shape(shape)
    if scheme == "zeros":
        return Tensor(np.zeros(dims))
    if scheme == "constant":
        return Tensor(np.full(dims, float(value)))
    if scheme not in ("glorot_uniform", "he_uniform"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    if seed is None:
        raise ValueError(f"{scheme} requires a seed")
    fi, fo = fans(dims)
    fi = fan_in if fan_in is not None else fi
    fo = fan_out if fan_out is not None else fo
    limit = np.sqrt(6.0 / (fi + fo)) if scheme == "glorot_uniform" else np.sqrt(6.0 / fi)
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-limit, limit, size=dims))
