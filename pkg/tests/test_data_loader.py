# Run with: pytest tests/test_data_loader.py -s

import numpy as np
import pytest

from engine.data_loader import (
    DATA_DIR_ENV,
    DataLoader,
    Dataset,
    batches,
    decode_targets,
    default_data_dir,
    encode_targets,
    load_idx,
    normalize_minmax,
)
from engine.errors import ConfigError, IdxDimensionError, IdxMagicError, IdxTruncatedError

IMAGES = 0x00000803
LABELS = 0x00000801


def _split_files(tmp_path, write_idx, prefix, n, *, gz=False, n_labels=None):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n_labels or n, dtype=np.uint8)
    suffix = ".gz" if gz else ""
    write_idx(tmp_path / f"{prefix}-images-idx3-ubyte{suffix}", images, IMAGES, gz=gz)
    write_idx(tmp_path / f"{prefix}-labels-idx1-ubyte{suffix}", labels, LABELS, gz=gz)
    return images, labels


def test_load_idx_images_and_labels(tmp_path, write_idx):
    images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    path = write_idx(tmp_path / "imgs", images, IMAGES)
    loaded = load_idx(path, "images")
    assert loaded.dtype == np.uint8
    np.testing.assert_array_equal(loaded, images)

    labels = write_idx(tmp_path / "labels", [3, 1, 4], LABELS)
    np.testing.assert_array_equal(load_idx(labels), [3, 1, 4])
    print(f"\n✓ Parsed {loaded.shape} images and 3 labels")


def test_load_idx_gzip(tmp_path, write_idx):
    labels = np.array([7, 0, 9], dtype=np.uint8)
    path = write_idx(tmp_path / "labels.gz", labels, LABELS, gz=True)
    np.testing.assert_array_equal(load_idx(path, "labels"), labels)


def test_wrong_magic_for_kind(tmp_path, write_idx):
    path = write_idx(tmp_path / "labels", [1, 2], LABELS)
    with pytest.raises(IdxMagicError):
        load_idx(path, "images")
    junk = write_idx(tmp_path / "junk", [1, 2], 0x00000901)
    with pytest.raises(IdxMagicError):
        load_idx(junk)


def test_truncated_and_trailing_payload(tmp_path, write_idx):
    path = tmp_path / "short"
    path.write_bytes(b"\x00\x00")
    with pytest.raises(IdxTruncatedError):
        load_idx(path)

    images = np.zeros((2, 2, 2), dtype=np.uint8)
    full = write_idx(tmp_path / "full", images, IMAGES).read_bytes()
    cut = tmp_path / "cut"
    cut.write_bytes(full[:-1])
    with pytest.raises(IdxTruncatedError):
        load_idx(cut, "images")

    trailing = write_idx(tmp_path / "trailing", images, IMAGES, extra=b"\x00")
    with pytest.raises(IdxDimensionError):
        load_idx(trailing, "images")


def test_missing_file_and_unknown_kind(tmp_path, write_idx):
    with pytest.raises(ConfigError):
        load_idx(tmp_path / "nope")
    path = write_idx(tmp_path / "labels", [1], LABELS)
    with pytest.raises(ConfigError):
        load_idx(path, "videos")


def test_normalize_minmax_range():
    out = normalize_minmax(np.array([0, 255, 51], dtype=np.uint8))
    np.testing.assert_allclose(out, [-1.0, 1.0, -0.6])


def test_signed_one_hot_targets():
    targets = encode_targets(np.array([2, 0]))
    assert targets.shape == (2, 10)
    assert targets[0, 2] == 1.0 and targets[1, 0] == 1.0
    assert np.sum(targets == 1.0) == 2
    assert np.all(targets[0, [0, 1, 3]] == -1.0)
    np.testing.assert_array_equal(decode_targets(targets), [2, 0])


def test_load_split_plain_and_subset(tmp_path, write_idx):
    images, labels = _split_files(tmp_path, write_idx, "train", 12)
    dataset = DataLoader(tmp_path).load_split("train", subset=5)
    assert len(dataset) == 5
    assert dataset.images.shape == (5, 784)
    assert dataset.images.min() >= -1.0 and dataset.images.max() <= 1.0
    np.testing.assert_array_equal(dataset.labels, labels[:5])
    np.testing.assert_allclose(dataset.images[0], normalize_minmax(images[0].ravel()))


def test_load_split_finds_gzip_files(tmp_path, write_idx):
    _split_files(tmp_path, write_idx, "t10k", 4, gz=True)
    dataset = DataLoader(tmp_path).load_split("test")
    assert dataset.split == "test"
    assert len(dataset) == 4


def test_load_split_errors(tmp_path, write_idx):
    loader = DataLoader(tmp_path)
    with pytest.raises(ConfigError):
        loader.load_split("validation")
    with pytest.raises(ConfigError):
        loader.load_split("train")
    _split_files(tmp_path, write_idx, "train", 6, n_labels=5)
    with pytest.raises(IdxDimensionError):
        loader.load_split("train")


def test_data_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    assert default_data_dir() == tmp_path
    assert DataLoader().data_dir == tmp_path
    monkeypatch.delenv(DATA_DIR_ENV)
    assert str(default_data_dir()) == "data"


def _dataset(n):
    return Dataset(np.arange(n, dtype=float)[:, None], np.arange(n) % 10, "train")


def test_batches_cover_dataset_once():
    data = _dataset(23)
    out = list(batches(data, batch_size=5, seed=3, epoch=1))
    assert [len(b.labels) for b in out] == [5, 5, 5, 5, 3]
    assert [b.index for b in out] == list(range(5))
    seen = np.concatenate([b.inputs[:, 0] for b in out])
    assert sorted(seen.astype(int)) == list(range(23))
    assert out[0].targets.shape == (5, 10)


def test_batch_order_depends_on_seed_and_epoch():
    data = _dataset(40)

    def order(seed, epoch):
        return np.concatenate([b.inputs[:, 0] for b in batches(data, 8, seed, epoch)])

    np.testing.assert_array_equal(order(0, 1), order(0, 1))
    assert not np.array_equal(order(0, 1), order(0, 2))
    assert not np.array_equal(order(0, 1), order(1, 1))


def test_batch_size_must_be_positive():
    with pytest.raises(ConfigError):
        next(batches(_dataset(3), 0, 0, 1))
