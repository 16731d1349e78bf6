"""Command-line entry point: ``dbfga <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from dbfga import bench as bench_mod
from dbfga.checkpoint import load_checkpoint, save_checkpoint
from dbfga.config import CLASS_MODES, RunConfig, load_config
from dbfga.data import LabeledDataset, load_dataset, load_image
from dbfga.explain import DEFAULT_ALPHA, DEFAULT_TAP, gradcam, heatmap_filename, overlay_emit
from dbfga.model import DualBackboneNet
from dbfga.training import (
    METRIC_COLUMNS,
    SWEEP_COLUMNS,
    cross_validate,
    evaluate,
    sensitivity_sweep,
    train_loop,
)

log = logging.getLogger("dbfga")

COMMANDS = ("train", "eval", "crossval", "sweep", "infer", "heatmap", "bench")
CHECKPOINT_NAME = "model.fgaw"
HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")
CROSSVAL_COLUMNS = ("fold", "n_test", *METRIC_COLUMNS)


class CliError(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--data", type=Path, help="dataset root, one folder per class")
    common.add_argument("--checkpoint", type=Path, help="weights file")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="model init and training seed")
    common.add_argument("--classes", type=int, choices=CLASS_MODES, help="class mode")
    common.add_argument("--k", type=int, help="cross-validation folds")
    common.add_argument("--tap", default=DEFAULT_TAP, help="feature map used for Grad-CAM")
    common.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="heatmap overlay opacity")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dbfga", description="Dual-backbone frequency-gated attention classifier")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    helps = {
        "train": "fit a model, write checkpoint and history",
        "eval": "evaluate a checkpoint on a dataset",
        "crossval": "stratified k-fold cross-validation",
        "sweep": "optimizer / batch size / learning rate sweep",
        "infer": "predict class and confidence per image",
        "heatmap": "write Grad-CAM overlay PNGs",
        "bench": "time and count attention blocks",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name in ("infer", "heatmap"):
            p.add_argument("inputs", nargs="+", type=Path, help="image files")
    return parser


# ---------------------------------------------------------------- helpers

def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(data=args.data, out=args.out, seed=args.seed, classes=args.classes, k=args.k)


def _dataset(cfg: RunConfig, input_size) -> LabeledDataset:
    if cfg.data is None:
        raise CliError("no dataset: pass --data or set 'data' in the config")
    return load_dataset(cfg.data, input_size, cfg.classes)


def _provenance(ds: LabeledDataset, root: Path) -> dict:
    folders, counts = np.unique(ds.source_folders, return_counts=True)
    return {
        "source_folders": {str(f): int(c) for f, c in zip(folders, counts)},
        "skipped": [Path(p).relative_to(root).as_posix() for p in ds.skipped],
    }


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _write_table(path: Path, rows, columns) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def _load(args):
    if args.checkpoint is None:
        raise CliError("--checkpoint is required")
    model, class_names = load_checkpoint(args.checkpoint)
    return model, class_names or [str(i) for i in range(model.spec.classes)]


def _format_table(rows, columns) -> str:
    lines = ["\t".join(columns)]
    for r in rows:
        lines.append("\t".join(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in columns))
    return "\n".join(lines)


# ---------------------------------------------------------------- commands

def cmd_train(args, cfg: RunConfig) -> int:
    ds = _dataset(cfg, cfg.model.input_size)
    spec = replace(cfg.model, classes=len(ds.class_names))
    model = DualBackboneNet(spec, seed=cfg.seed)
    _, history = train_loop(model, ds, cfg.train)
    ckpt = save_checkpoint(model, cfg.out / CHECKPOINT_NAME, ds.class_names)
    _write_json(cfg.out / "history.json", {**history.to_dict(), "train": cfg.train.to_dict(), **_provenance(ds, cfg.data)})
    _write_table(cfg.out / "history.csv", [vars(r) for r in history.epochs], HISTORY_COLUMNS)
    last = history.epochs[history.best_epoch]
    print(f"trained {len(history.epochs)} epochs, best epoch {last.epoch}, train_acc {last.train_acc:.4f}; wrote {ckpt}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    model, class_names = _load(args)
    ds = _dataset(cfg, model.spec.input_size)
    if list(ds.class_names) != list(class_names):
        raise CliError(f"dataset classes {ds.class_names} do not match checkpoint classes {class_names}")
    report = evaluate(model, ds, class_names)
    report.extra.update(_provenance(ds, cfg.data))
    paths = report.write(cfg.out, "eval")
    macro = report.metrics.macro
    print(f"accuracy {report.metrics.accuracy:.4f} macroF1 {macro['f1']:.4f}; wrote {paths[0]}")
    return 0


def cmd_crossval(args, cfg: RunConfig) -> int:
    ds = _dataset(cfg, cfg.model.input_size)
    spec = replace(cfg.model, classes=len(ds.class_names))
    rows = cross_validate(spec, ds, cfg.train, k=cfg.k, model_seed=cfg.seed)
    _write_table(cfg.out / "crossval.csv", rows, CROSSVAL_COLUMNS)
    _write_json(cfg.out / "crossval.json", {"k": cfg.k, "rows": rows, "classes": ds.class_names})
    print(_format_table(rows, CROSSVAL_COLUMNS))
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    ds = _dataset(cfg, cfg.model.input_size)
    spec = replace(cfg.model, classes=len(ds.class_names))
    g = cfg.sweep
    rows = sensitivity_sweep(spec, ds, g.optimizers, g.batch_sizes, g.lrs, base=cfg.train, model_seed=cfg.seed)
    columns = (*SWEEP_COLUMNS, "error")
    _write_table(cfg.out / "sweep.csv", rows, columns)
    _write_json(cfg.out / "sweep.json", {"rows": rows, "classes": ds.class_names})
    print(_format_table(rows, SWEEP_COLUMNS))
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    model, class_names = _load(args)
    for path in args.inputs:
        pred = model.predict(load_image(path, model.spec.input_size))
        print(f"{path}\t{class_names[pred.index]}\t{pred.confidence:.6f}")
    return 0


def cmd_heatmap(args, cfg: RunConfig) -> int:
    model, class_names = _load(args)
    cfg.out.mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        image = load_image(path, model.spec.input_size)
        pred = model.predict(image)
        heat = gradcam(model, image, pred.index, args.tap)
        out = overlay_emit(image, heat, args.alpha, cfg.out / heatmap_filename(path, class_names[pred.index]))
        print(f"{path}\t{class_names[pred.index]}\t{out}")
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    m = cfg.model
    rows = bench_mod.bench_attention(
        cfg.bench.shapes, cfg.bench.repeats,
        reduction=m.reduction, spatial_kernel=m.spatial_kernel, gate_hidden=m.gate_hidden, seed=cfg.seed,
    )
    path = bench_mod.write_csv(rows, cfg.out / "bench.csv", bench_mod.BENCH_COLUMNS)
    print(_format_table(rows, ("H", "W", "C", "kind", "params", "fwd_median_s", "fwdbwd_median_s")))
    print(f"wrote {path}")
    return 0


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "crossval": cmd_crossval,
    "sweep": cmd_sweep,
    "infer": cmd_infer,
    "heatmap": cmd_heatmap,
    "bench": cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)  # exits 2 with usage on bad flags
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _run_config(args)
        if not 0.0 <= args.alpha <= 1.0:
            raise CliError(f"--alpha must be in [0, 1], got {args.alpha}")
        return HANDLERS[args.command](args, cfg)
    except Exception as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
