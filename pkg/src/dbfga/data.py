"""Directory-per-class image ingestion and preprocessing.

Images are decoded (PNG, PGM/PPM), replicated to three channels, bicubic
resized to the model input size and scaled by 1/255. Labels are one-hot in
sorted folder order.
"""

from __future__ import annotations

import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from dbfga import ops
from dbfga.tensor import Tensor
from dbfga.training import ArrayDataset

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".pnm"}
NO_TUMOR_NAMES = {"notumor", "notumour", "notumors"}
TUMOR_CLASS = "tumor"


class DatasetError(ValueError):
    pass


def worker_count() -> int:
    """Worker cap from ``FGA_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("FGA_THREADS", "1")))
    except ValueError:
        return 1


def decode_image(path) -> np.ndarray:
    """Decode to an H x W x 3 float array of raw 0..255 intensities."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64)
            arr = arr * (255.0 / 65535.0)
            return np.repeat(arr[..., None], 3, axis=-1)
        if im.mode in ("L", "1", "LA"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)
            return np.repeat(arr[..., None], 3, axis=-1)
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def scale_pixels(raw: np.ndarray) -> np.ndarray:
    """I_norm = I / 255."""
    return np.asarray(raw, dtype=np.float64) / 255.0


def one_hot(labels: Sequence[int], classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"label outside [0, {classes})")
    out = np.zeros((labels.size, classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def preprocess(raw: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bicubic resize of raw intensities, clamp to [0, 255], scale to [0, 1]."""
    h, w = size
    if raw.shape[:2] != (h, w):
        raw = ops.resize(Tensor(raw[None]), h, w, "bicubic").data[0]
    return scale_pixels(np.clip(raw, 0.0, 255.0))


def load_image(path, size: tuple[int, int]) -> np.ndarray:
    return preprocess(decode_image(path), size)


@dataclass
class LabeledDataset(ArrayDataset):
    paths: list[str] = field(default_factory=list)
    source_folders: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def class_counts(self) -> dict[str, int]:
        counts = self.labels.sum(axis=0).astype(int)
        return dict(zip(self.class_names, counts.tolist()))


def _normalized(name: str) -> str:
    return re.sub(r"[^a-z]", "", name.lower())


def class_folders(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    folders = sorted(p for p in root.iterdir() if p.is_dir())
    if len(folders) < 2:
        raise DatasetError(f"{root} must contain at least 2 class folders, found {len(folders)}")
    return folders


def class_mapping(folder_names: Sequence[str], mode: Optional[int]) -> tuple[list[str], dict[str, Optional[str]]]:
    """Class names and folder -> class name (None = dropped) for a class mode.

    Mode 4 keeps all four folders, mode 3 drops the no-tumor folder, mode 2
    merges every tumor folder into one ``tumor`` class. ``None`` keeps every
    folder as its own class.
    """
    names = sorted(folder_names)
    if mode is None:
        return names, {n: n for n in names}
    no_tumor = [n for n in names if _normalized(n) in NO_TUMOR_NAMES]
    if mode == 4:
        if len(names) != 4:
            raise DatasetError(f"class mode 4 needs 4 folders, found {len(names)}: {names}")
        return names, {n: n for n in names}
    if len(no_tumor) != 1:
        raise DatasetError(f"class mode {mode} needs exactly one no-tumor folder, found {no_tumor}")
    tumors = [n for n in names if n != no_tumor[0]]
    if mode == 3:
        if len(tumors) != 3:
            raise DatasetError(f"class mode 3 needs 3 tumor folders, found {tumors}")
        mapping = {n: n for n in tumors}
        mapping[no_tumor[0]] = None
        return tumors, mapping
    if mode == 2:
        if not tumors:
            raise DatasetError("class mode 2 needs at least one tumor folder")
        mapping = {n: TUMOR_CLASS for n in tumors}
        mapping[no_tumor[0]] = no_tumor[0]
        return sorted([no_tumor[0], TUMOR_CLASS]), mapping
    raise DatasetError(f"unknown class mode {mode}; expected 4, 3 or 2")


def _try_load(path: Path, size: tuple[int, int]) -> Optional[np.ndarray]:
    try:
        return load_image(path, size)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        log.warning("skipping undecodable image %s: %s", path, exc)
        return None


def load_dataset(root, input_size: tuple[int, int], class_mode: Optional[int] = None, threads: Optional[int] = None) -> LabeledDataset:
    folders = class_folders(root)
    class_names, mapping = class_mapping([f.name for f in folders], class_mode)
    index = {name: i for i, name in enumerate(class_names)}

    entries: list[tuple[Path, str]] = []
    for folder in folders:
        if mapping.get(folder.name) is None:
            continue
        files = sorted(p for p in folder.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DatasetError(f"class folder {folder} contains no supported images")
        entries.extend((p, folder.name) for p in files)

    size = (int(input_size[0]), int(input_size[1]))
    with ThreadPoolExecutor(max_workers=threads or worker_count()) as pool:
        decoded = list(pool.map(lambda e: _try_load(e[0], size), entries))

    images, labels, paths, sources, skipped = [], [], [], [], []
    for (path, folder), img in zip(entries, decoded):
        if img is None:
            skipped.append(str(path))
            continue
        images.append(img)
        labels.append(index[mapping[folder]])
        paths.append(str(path))
        sources.append(folder)
    if not images:
        raise DatasetError(f"no decodable images under {root}")
    return LabeledDataset(
        images=np.stack(images),
        labels=one_hot(labels, len(class_names)),
        class_names=class_names,
        paths=paths,
        source_folders=sources,
        skipped=skipped,
    )


def write_image_tree(root, dataset: ArrayDataset, fmt: str = "png") -> list[Path]:
    """Write an :class:`ArrayDataset` as ``root/<class>/<index>.<fmt>`` (8-bit)."""
    root = Path(root)
    written = []
    for i, (img, label) in enumerate(zip(dataset.images, dataset.labels)):
        folder = root / dataset.class_names[int(np.argmax(label))]
        folder.mkdir(parents=True, exist_ok=True)
        pixels = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
        path = folder / f"{i:05d}.{fmt}"
        if fmt == "pgm":
            Image.fromarray(pixels[..., 0], mode="L").save(path)
        else:
            Image.fromarray(pixels, mode="RGB").save(path)
        written.append(path)
    return written
