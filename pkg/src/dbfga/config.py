"""JSON run configuration.

Recognised top-level keys (all optional)::

    data        dataset root (directory per class)
    input_size  [H, W] model input size
    classes     class mode: 4, 3, 2 or null (every folder is a class)
    seed        model init and training seed
    out         output directory
    k           cross-validation folds
    model       ModelSpec fields
    train       TrainConfig fields
    sweep       {"optimizers": [...], "batch_sizes": [...], "lrs": [...]}
    bench       {"shapes": [[H, W, C], ...], "repeats": n}

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from dbfga.model import ModelSpec
from dbfga.training import TrainConfig

CONFIG_KEYS = frozenset({"data", "input_size", "classes", "seed", "out", "k", "model", "train", "sweep", "bench"})
CLASS_MODES = (4, 3, 2)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    optimizers: tuple[str, ...] = ("adam", "adamax", "sgd")
    batch_sizes: tuple[int, ...] = (16, 32)
    lrs: tuple[float, ...] = (1e-3, 1e-4, 1e-5)


@dataclass(frozen=True)
class BenchGrid:
    shapes: tuple[tuple[int, int, int], ...] = ((8, 8, 16), (16, 16, 32), (32, 32, 64))
    repeats: int = 5


@dataclass(frozen=True)
class RunConfig:
    data: Optional[Path] = None
    classes: Optional[int] = None
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: Path = Path("runs")
    seed: int = 0
    k: int = 5
    sweep: SweepGrid = field(default_factory=SweepGrid)
    bench: BenchGrid = field(default_factory=BenchGrid)

    def __post_init__(self):
        if self.classes is not None and self.classes not in CLASS_MODES:
            raise ConfigError(f"classes must be one of {CLASS_MODES}, got {self.classes}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")

    def with_overrides(self, **kw) -> "RunConfig":
        """Apply non-None overrides (CLI flags win over the file)."""
        kw = {k: v for k, v in kw.items() if v is not None}
        if "data" in kw:
            kw["data"] = Path(kw["data"]).resolve()
        if "out" in kw:
            kw["out"] = Path(kw["out"]).resolve()
        cfg = replace(self, **kw)
        if "seed" in kw:
            cfg = replace(cfg, train=replace(cfg.train, seed=kw["seed"]))
        return cfg


def _known(cls, d: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")
    return d


def _resolve(base: Path, value) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value)
    return (p if p.is_absolute() else base / p).resolve()


def from_dict(d: dict, base: Path = Path(".")) -> RunConfig:
    unknown = sorted(set(d) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    try:
        model_kw = dict(_known(ModelSpec, d.get("model", {}), "model"))
        if "input_size" in d:
            model_kw["input_size"] = tuple(d["input_size"])
        model = ModelSpec(**model_kw)
        seed = int(d.get("seed", 0))
        train_kw = dict(_known(TrainConfig, d.get("train", {}), "train"))
        train_kw.setdefault("seed", seed)
        train = TrainConfig(**train_kw)
        sweep = SweepGrid(**{k: tuple(v) for k, v in _known(SweepGrid, d.get("sweep", {}), "sweep").items()})
        bench_d = dict(_known(BenchGrid, d.get("bench", {}), "bench"))
        if "shapes" in bench_d:
            bench_d["shapes"] = tuple(tuple(int(v) for v in s) for s in bench_d["shapes"])
        bench = BenchGrid(**bench_d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        data=_resolve(base, d.get("data")),
        classes=d.get("classes"),
        model=model,
        train=train,
        out=_resolve(base, d.get("out", "runs")),
        seed=seed,
        k=int(d.get("k", 5)),
        sweep=sweep,
        bench=bench,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(d, path.parent.resolve())
