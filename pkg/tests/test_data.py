import numpy as np
import pytest
from PIL import Image

from dbfga.data import (
    DatasetError,
    class_mapping,
    decode_image,
    load_dataset,
    one_hot,
    preprocess,
    scale_pixels,
)


def make_tree(root, counts, size=(6, 5), fmt="png", seed=0):
    rng = np.random.default_rng(seed)
    for name, n in counts.items():
        d = root / name
        d.mkdir(parents=True)
        for i in range(n):
            px = rng.integers(0, 256, size, dtype=np.uint8)
            Image.fromarray(px, mode="L").save(d / f"img{i:02d}.{fmt}")
    return root


def test_pixel_scaling_endpoints():
    assert scale_pixels(np.array([255.0, 0.0])).tolist() == [1.0, 0.0]


def test_one_hot():
    assert one_hot([2], 4).tolist() == [[0, 0, 1, 0]]
    with pytest.raises(ValueError):
        one_hot([4], 4)


def test_decode_gray_replicated(tmp_path):
    px = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    Image.fromarray(px, mode="L").save(tmp_path / "a.pgm")
    raw = decode_image(tmp_path / "a.pgm")
    assert raw.shape == (3, 4, 3) and np.array_equal(raw[..., 2], px)


def test_preprocess_bicubic_and_clip():
    raw = np.zeros((4, 4, 3))
    raw[:, 2:] = 255.0
    out = preprocess(raw, (8, 8))
    assert out.shape == (8, 8, 3)
    assert out.min() >= 0.0 and out.max() <= 1.0  # bicubic overshoot clipped
    assert np.array_equal(preprocess(np.full((4, 4, 3), 255.0), (4, 4)), np.ones((4, 4, 3)))


def test_tree_counts(tmp_path):
    make_tree(tmp_path, {"a": 3, "b": 5, "c": 2})
    ds = load_dataset(tmp_path, (8, 8))
    assert len(ds) == 10 and ds.class_names == ["a", "b", "c"]
    assert ds.class_counts() == {"a": 3, "b": 5, "c": 2}
    assert ds.images.shape == (10, 8, 8, 3)
    assert np.all(ds.labels.sum(axis=1) == 1)


def test_deterministic_across_thread_counts(tmp_path):
    make_tree(tmp_path, {"x": 4, "y": 4}, fmt="pgm")
    a = load_dataset(tmp_path, (8, 8), threads=1)
    b = load_dataset(tmp_path, (8, 8), threads=4)
    assert a.paths == b.paths
    assert a.images.tobytes() == b.images.tobytes() and a.labels.tobytes() == b.labels.tobytes()


def test_undecodable_skipped(tmp_path):
    make_tree(tmp_path, {"a": 2, "b": 2})
    (tmp_path / "a" / "broken.png").write_bytes(b"not an image")
    ds = load_dataset(tmp_path, (8, 8))
    assert len(ds) == 4 and len(ds.skipped) == 1 and ds.skipped[0].endswith("broken.png")


def test_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "nope", (8, 8))
    make_tree(tmp_path, {"a": 2})
    with pytest.raises(DatasetError):
        load_dataset(tmp_path, (8, 8))
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetError):
        load_dataset(tmp_path, (8, 8))


FOLDERS = {"glioma": 3, "meningioma": 2, "notumor": 4, "pituitary": 1}


def test_class_modes(tmp_path):
    make_tree(tmp_path, FOLDERS)
    four = load_dataset(tmp_path, (8, 8), class_mode=4)
    three = load_dataset(tmp_path, (8, 8), class_mode=3)
    two = load_dataset(tmp_path, (8, 8), class_mode=2)
    assert four.class_names == sorted(FOLDERS)
    assert three.class_names == ["glioma", "meningioma", "pituitary"]
    assert len(three) == len(four) - FOLDERS["notumor"]
    assert two.class_names == ["notumor", "tumor"]
    assert len(two) == len(four)
    assert two.class_counts() == {"notumor": 4, "tumor": 6}
    assert sorted(set(two.source_folders)) == sorted(FOLDERS)


def test_class_mode_errors():
    with pytest.raises(DatasetError):
        class_mapping(["a", "b", "c"], 4)
    with pytest.raises(DatasetError):
        class_mapping(["a", "b", "c", "d"], 3)
    with pytest.raises(DatasetError):
        class_mapping(["a", "no_tumor"], 5)
