"""Binary weight files.

Layout (all integers u32 little-endian)::

    b"FGAW" | version | blob_len | JSON blob | n_tensors |
    per tensor: name_len | UTF-8 name | rank | dims[rank] | float64 LE data

The JSON blob holds the model spec, class names and the init seed.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from dbfga.model import DualBackboneNet, ModelSpec

MAGIC = b"FGAW"
VERSION = 1
_U32 = struct.Struct("<I")
_SPEC_OFFSET = 12  # spec mismatches are reported against the JSON blob


class CheckpointError(ValueError):
    """Load failure; ``offset`` is the byte position where parsing stopped."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def encode(model: DualBackboneNet, class_names: Optional[Sequence[str]] = None, version: int = VERSION) -> bytes:
    meta = {
        "model": model.spec.to_dict(),
        "class_names": list(class_names) if class_names is not None else None,
        "seed": int(model.seed),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, _U32.pack(version), _U32.pack(len(blob)), blob, _U32.pack(len(model.params))]
    for name, var in model.params.items():
        raw = name.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _U32.pack(var.data.ndim)]
        parts += [_U32.pack(d) for d in var.data.shape]
        parts.append(np.ascontiguousarray(var.data, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model: DualBackboneNet, path, class_names: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(model, class_names))
    return path


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated file: need {n} bytes for {what}, {len(self.buf) - self.pos} left", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a checkpoint into (metadata, name -> array)."""
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}, this build reads version {VERSION}", 4)
    blob_len = r.u32("spec length")
    start = r.pos
    try:
        meta = json.loads(r.take(blob_len, "spec blob").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable spec blob: {exc}", start) from None
    count = r.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        at = r.pos
        name_len = r.u32("name length")
        try:
            name = r.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"tensor name is not UTF-8: {exc}", at + 4) from None
        rank = r.u32(f"rank of {name}")
        if rank > 4:
            raise CheckpointError(f"{name}: rank {rank} exceeds 4", r.pos - 4)
        dims = tuple(r.u32(f"dims of {name}") for _ in range(rank))
        n = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(8 * n, f"data of {name}"), dtype="<f8").astype(np.float64).reshape(dims)
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name}", at)
        tensors[name] = data
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes", r.pos)
    return meta, tensors


def load_checkpoint(path) -> tuple[DualBackboneNet, Optional[list[str]]]:
    """Rebuild the model from its stored spec and load the weights."""
    buf = Path(path).read_bytes()
    meta, tensors = decode(buf)
    try:
        spec = ModelSpec.from_dict(meta["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid model spec: {exc}", _SPEC_OFFSET) from None
    model = DualBackboneNet(spec, seed=int(meta.get("seed", 0)))
    expected = model.param_shapes()
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise CheckpointError(f"parameters do not match spec: missing {missing}, unexpected {extra}", _SPEC_OFFSET)
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise CheckpointError(f"{name}: stored shape {tensors[name].shape} but spec needs {shape}", _SPEC_OFFSET)
    model.load_state(tensors)
    return model, meta.get("class_names")
