import numpy as np
import pytest
import torch

from progvit.data import (HEADER, DatasetFormatError, augment, batches, export_directory,
                          ingest_dataset, load_directory, read_records, synthetic, synthetic_pixels,
                          write_records)


def test_synthetic_contract():
    ds = synthetic(10, 5000, 32, seed=7, eval_count=200)
    assert ds.train.images.shape == (5000, 3, 32, 32)
    assert ds.train.images.dtype == torch.float32
    counts = torch.bincount(ds.train.labels, minlength=10)
    assert counts.min() >= 450 and counts.max() <= 550
    assert abs(float(ds.train.images.mean())) < 0.5


def test_synthetic_exactly_balanced_pool():
    _, labels = synthetic_pixels(10, 1000, 8, seed=1)
    assert np.bincount(labels).tolist() == [100] * 10


def test_same_seed_same_first_batch():
    a = synthetic(10, 300, 16, seed=3, eval_count=10)
    b = synthetic(10, 300, 16, seed=3, eval_count=10)
    xa, ya = next(batches(a.train, 32, torch.Generator().manual_seed(0)))
    xb, yb = next(batches(b.train, 32, torch.Generator().manual_seed(0)))
    assert torch.equal(xa, xb) and torch.equal(ya, yb)


def test_record_round_trip(tmp_path):
    px, lb = synthetic_pixels(4, 20, 8, seed=0)
    write_records(tmp_path / "a.bin", px, lb)
    px2, lb2 = read_records(tmp_path / "a.bin", classes=4)
    assert np.array_equal(px, px2) and np.array_equal(lb, lb2)


def test_truncated_record_names_index(tmp_path):
    px, lb = synthetic_pixels(4, 5, 8, seed=0)
    path = tmp_path / "a.bin"
    write_records(path, px, lb)
    raw = path.read_bytes()
    rec = 1 + 8 * 8 * 3
    path.write_bytes(raw[:HEADER.size + 3 * rec + 10])
    with pytest.raises(DatasetFormatError, match=r"record 3 truncated at byte offset %d" % (HEADER.size + 3 * rec)):
        read_records(path)


def test_bad_magic_and_labels(tmp_path):
    px, lb = synthetic_pixels(4, 5, 8, seed=0)
    path = tmp_path / "a.bin"
    write_records(path, px, lb)
    raw = bytearray(path.read_bytes())
    with pytest.raises(DatasetFormatError, match="record"):
        read_records(path, classes=2)
    raw[0:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError, match="byte offset 0"):
        read_records(path)
    path.write_bytes(b"PV")
    with pytest.raises(DatasetFormatError, match="byte offset"):
        read_records(path)


def test_directory_ingest(tmp_path):
    export_directory(tmp_path, classes=3, count=30, side=8, seed=2, eval_count=9)
    ds = ingest_dataset(str(tmp_path))
    assert ds.classes == 3
    assert len(ds.train) == 30 and len(ds.eval) == 9
    ref = load_directory(tmp_path)
    assert torch.equal(ds.train.images, ref.train.images)


def test_augment_shift_is_circular():
    x = torch.arange(16.0).reshape(1, 1, 4, 4)
    out = augment(x, torch.Generator().manual_seed(0), flip=False, max_shift=1)
    assert sorted(out.flatten().tolist()) == sorted(x.flatten().tolist())
