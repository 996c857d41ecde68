import struct

import numpy as np
import pytest

from sharpness_lab import (Dataset, SeededStream, load_digits64, load_idx,
                           synth_blobs, write_idx)
from sharpness_lab.errors import (IdxCountMismatchError, IdxMagicError,
                                  IdxTruncatedError)
from sharpness_lab.losses.data import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC


@pytest.fixture
def idx_pair(tmp_path, gen):
    feats = gen.integers(0, 256, size=(4, 784)).astype(float) / 255.0
    ds = Dataset(feats, np.array([3, 1, 4, 1]), "train", 10)
    images, labels = tmp_path / "imgs.idx", tmp_path / "labels.idx"
    write_idx(images, labels, ds, rows=28, cols=28)
    return images, labels


class TestLoadIdx:
    def test_round_trip(self, idx_pair):
        images, labels = idx_pair
        ds = load_idx(images, labels)
        assert ds.features.shape == (4, 784)
        assert np.array_equal(ds.labels, [3, 1, 4, 1])
        assert 0.0 <= ds.features.min() and ds.features.max() <= 1.0

    def test_wrong_label_magic(self, idx_pair, tmp_path):
        images, labels = idx_pair
        bad = tmp_path / "bad_labels.idx"
        raw = bytearray(labels.read_bytes())
        raw[:4] = struct.pack(">I", 0x00000999)
        bad.write_bytes(bytes(raw))
        with pytest.raises(IdxMagicError, match="magic"):
            load_idx(images, bad)

    def test_wrong_image_magic(self, idx_pair, tmp_path):
        images, labels = idx_pair
        bad = tmp_path / "bad_imgs.idx"
        raw = bytearray(images.read_bytes())
        raw[:4] = struct.pack(">I", IDX_LABELS_MAGIC)
        bad.write_bytes(bytes(raw))
        with pytest.raises(IdxMagicError):
            load_idx(bad, labels)

    def test_truncated_pixels(self, idx_pair, tmp_path):
        images, labels = idx_pair
        bad = tmp_path / "short.idx"
        bad.write_bytes(images.read_bytes()[:-10])
        with pytest.raises(IdxTruncatedError, match="expected 3136 bytes, got 3126"):
            load_idx(bad, labels)

    def test_count_mismatch(self, idx_pair, tmp_path):
        images, labels = idx_pair
        bad = tmp_path / "extra_labels.idx"
        bad.write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, 5) + bytes([1, 2, 3, 0, 1]))
        with pytest.raises(IdxCountMismatchError, match="4 images but 5 labels"):
            load_idx(images, bad)


class TestSynthBlobs:
    def test_defaults(self):
        ds = synth_blobs()
        assert ds.size == 300 and ds.dim == 2 and ds.num_classes == 3

    def test_deterministic(self):
        a = synth_blobs(stream=SeededStream(9))
        b = synth_blobs(stream=SeededStream(9))
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_zero_spread_hits_centers(self):
        ds = synth_blobs(num_classes=3, per_class=2, dim=2, spread=0.0,
                         stream=SeededStream(1))
        assert np.array_equal(ds.features[:2], [[1.0, 0.0], [1.0, 0.0]])
        assert np.array_equal(ds.features[2:4], [[0.0, 1.0], [0.0, 1.0]])
        # class count exceeding dim cycles outward
        assert np.array_equal(ds.features[4:6], [[2.0, 0.0], [2.0, 0.0]])

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            synth_blobs(num_classes=0)


class TestDataset:
    def test_label_range_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 3)), np.array([0, 5]), "train", 3)

    def test_immutable(self):
        ds = synth_blobs(per_class=2)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 99.0

    def test_take(self):
        ds = synth_blobs(per_class=5)
        sub = ds.take([0, 2, 4])
        assert sub.size == 3
        assert np.array_equal(sub.features, ds.features[[0, 2, 4]])


def test_digits64_split():
    train, test = load_digits64()
    assert train.size == 1437 and test.size == 360
    assert train.dim == 64 and train.num_classes == 10
    assert 0.0 <= train.features.min() and train.features.max() <= 1.0
    train2, _ = load_digits64()
    assert np.array_equal(train.features, train2.features)
