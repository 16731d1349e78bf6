"""Wall-clock and parameter-count comparison of the attention blocks."""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from dbfga import ops
from dbfga.attention import AttentionConfig, CbamParams, FgaParams, cbam_block, fga_block
from dbfga.tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)

BENCH_KINDS = ("none", "cbam", "fga")
BENCH_COLUMNS = (
    "H", "W", "C", "kind", "params",
    "fwd_median_s", "fwd_iqr_s", "fwdbwd_median_s", "fwdbwd_iqr_s", "error",
)


def _block(kind: str, config: AttentionConfig, seed: int):
    if kind == "none":
        return (lambda x: x), 0, []
    if kind == "cbam":
        p = CbamParams.init(config, seed)
        return (lambda x: cbam_block(x, p).out), p.count(), list(p.variables().values())
    if kind == "fga":
        p = FgaParams.init(config, seed)
        return (lambda x: fga_block(x, p).out), p.count(), list(p.variables().values())
    raise ValueError(f"unknown attention kind {kind!r}")


def _timings(fn, repeats: int) -> np.ndarray:
    out = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        fn()
        out[i] = time.perf_counter() - t0
    return out


def _median_iqr(t: np.ndarray) -> tuple[float, float]:
    q1, med, q3 = np.percentile(t, [25, 50, 75])
    return float(med), float(q3 - q1)


def bench_attention(
    shapes: Sequence[tuple[int, int, int]],
    repeats: int = 5,
    batch: int = 1,
    kinds: Sequence[str] = BENCH_KINDS,
    reduction: int = 16,
    spatial_kernel: int = 7,
    gate_hidden: int = 32,
    seed: int = 0,
) -> list[dict]:
    """One row per (H, W, C) x kind; a failing cell records its error instead of timings."""
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    rng = np.random.default_rng(seed)
    rows = []
    for h, w, c in shapes:
        x_data = rng.standard_normal((batch, h, w, c))
        for kind in kinds:
            row = {"H": int(h), "W": int(w), "C": int(c), "kind": kind}
            try:
                config = AttentionConfig(channels=c, reduction=reduction, spatial_kernel=spatial_kernel, gate_hidden=gate_hidden)
                block, count, variables = _block(kind, config, seed)
                x = Tensor(x_data)

                def fwd():
                    block(x)

                def fwd_bwd():
                    xv = Tensor(x_data, requires_grad=True)
                    with Tape() as tape:
                        loss = ops.sum(block(xv))
                    backward(tape, loss)

                fwd()  # warm-up
                row["params"] = count
                row["fwd_median_s"], row["fwd_iqr_s"] = _median_iqr(_timings(fwd, repeats))
                row["fwdbwd_median_s"], row["fwdbwd_iqr_s"] = _median_iqr(_timings(fwd_bwd, repeats))
                row["error"] = ""
            except Exception as exc:  # recorded per cell
                log.warning("bench cell %s failed: %s", row, exc)
                row.setdefault("params", "")
                for col in BENCH_COLUMNS[5:9]:
                    row.setdefault(col, float("nan"))
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def write_csv(rows: Sequence[dict], path, columns: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path
