import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mprtkit.core import ParameterError
from mprtkit.data import (
    Dataset,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    feature_box,
    load_idx,
    minmax_record,
    normalize,
    read_idx,
    read_manifest,
    standard_record,
    subsample,
    synth_blobs,
    write_idx,
    write_manifest,
)
from mprtkit.nn import accuracy, mlp, train_sgd


def _write_pair(tmp_path, images, labels):
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ip, np.asarray(images, dtype=np.uint8))
    write_idx(lp, np.asarray(labels, dtype=np.uint8))
    return ip, lp


def test_crafted_idx_byte_scaling(tmp_path):
    ip = tmp_path / "img"
    ip.write_bytes(struct.pack(">IIII", 0x803, 1, 2, 2) + bytes([0, 255, 128, 64]))
    lp = tmp_path / "lab"
    lp.write_bytes(struct.pack(">II", 0x801, 1) + bytes([3]))
    ds = load_idx(ip, lp, num_classes=10)
    assert ds.inputs.shape == (1, 1, 2, 2)
    np.testing.assert_allclose(ds.inputs.ravel(), [0, 1, 0.50196, 0.25098], atol=5e-6)
    np.testing.assert_array_equal(ds.inputs.ravel(), np.array([0, 255, 128, 64]) / 255.0)
    assert ds.labels.tolist() == [3]


def test_idx_wrong_magic(tmp_path):
    ip, _ = _write_pair(tmp_path, np.zeros((2, 3, 3)), [0, 1])
    with pytest.raises(IdxMagicError):
        load_idx(ip, ip)  # image file passed as labels
    bad = tmp_path / "bad"
    bad.write_bytes(b"\x01\x02\x03\x04")
    with pytest.raises(IdxMagicError):
        read_idx(bad)


def test_idx_truncated_and_mismatch(tmp_path):
    ip, lp = _write_pair(tmp_path, np.zeros((2, 3, 3)), [0, 1, 1])
    with pytest.raises(IdxCountMismatchError):
        load_idx(ip, lp)
    raw = ip.read_bytes()
    ip.write_bytes(raw[:-3])
    with pytest.raises(IdxTruncatedError):
        read_idx(ip)
    ip.write_bytes(raw[:2])
    with pytest.raises(IdxTruncatedError):
        read_idx(ip)


@given(arrays(st.sampled_from([np.uint8, np.int8, np.dtype(">i2"), np.dtype(">i4"), np.dtype(">f8")]),
              st.tuples(st.integers(0, 4), st.integers(1, 4), st.integers(1, 4))))
def test_idx_round_trip_bit_exact(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("idx") / "a.idx"
    write_idx(p, a)
    b = read_idx(p)
    assert b.shape == a.shape
    assert a.tobytes() == b.astype(a.dtype).tobytes()


def test_synth_blobs_reproducible_and_separated():
    a = synth_blobs(5, 3, (1, 8, 8), 4.0, 7, split="train")
    b = synth_blobs(5, 3, (1, 8, 8), 4.0, 7, split="train")
    np.testing.assert_array_equal(a.inputs, b.inputs)
    assert np.bincount(a.labels).tolist() == [5, 5, 5]
    c = synth_blobs(5, 3, (1, 8, 8), 4.0, 7, split="test")
    assert not np.array_equal(a.inputs, c.inputs)
    with pytest.raises(ParameterError):
        synth_blobs(5, 10, 4, 1.0, 0)


def test_synth_blob_centre_distance():
    # noise 0: every sample sits on its centre; centres are `separation` apart
    ds = synth_blobs(1, 4, 16, 6.0, 1, noise=0.0)
    X = ds.inputs[np.argsort(ds.labels)]
    d = np.linalg.norm(X[:, None] - X[None], axis=-1)
    np.testing.assert_allclose(d[~np.eye(4, dtype=bool)], 6.0, rtol=1e-12)


def test_zero_separation_is_chance():
    train = synth_blobs(40, 4, 8, 0.0, 0, split="train")
    test = synth_blobs(40, 4, 8, 0.0, 0, split="test")
    m = train_sgd(mlp((8,), 4, (8,), seed=0), train, lr=0.01, epochs=10, seed=0)
    assert abs(accuracy(m, test) - 0.25) < 0.12


def test_subsample():
    ds = synth_blobs(4, 2, 3, 1.0, 0)
    full = subsample(ds, len(ds), 3)
    assert sorted(map(tuple, full.inputs.tolist())) == sorted(map(tuple, ds.inputs.tolist()))
    assert len(subsample(ds, 0, 3)) == 0
    np.testing.assert_array_equal(subsample(ds, 5, 9).inputs, subsample(ds, 5, 9).inputs)
    with pytest.raises(ParameterError):
        subsample(ds, 9, 0)


@given(st.integers(0, 30), st.integers(0, 1000))
def test_subsample_no_duplicates(n, seed):
    ds = Dataset(np.arange(30.0)[:, None], np.zeros(30, dtype=int), 1)
    vals = subsample(ds, n, seed).inputs.ravel()
    assert len(set(vals.tolist())) == n


def test_normalisation_records():
    train = synth_blobs(5, 2, 4, 2.0, 0, split="train")
    test = synth_blobs(5, 2, 4, 2.0, 0, split="test")
    mm = normalize(train)
    assert mm.inputs.min() == 0.0 and mm.inputs.max() == 1.0
    assert mm.normalization == minmax_record(train)
    st_ = normalize(train, kind="standard")
    assert abs(st_.inputs.mean()) < 1e-12 and abs(st_.inputs.std() - 1) < 1e-12
    again = normalize(test, standard_record(train))
    np.testing.assert_allclose(again.inputs, (test.inputs - train.inputs.mean()) / train.inputs.std())
    with pytest.raises(ParameterError):
        normalize(Dataset(np.ones((3, 2)), [0, 0, 0], 1))


def test_feature_box_and_manifest(tmp_path):
    ds = Dataset(np.array([[0.0, 2.0], [1.0, -1.0]]), [0, 1], 2)
    lo, hi = feature_box(ds)
    np.testing.assert_array_equal(lo, [0.0, -1.0])
    np.testing.assert_array_equal(hi, [1.0, 2.0])
    write_manifest(tmp_path / "m.json", {"train": "a.idx", "normalization": {"kind": "byte"}})
    assert read_manifest(tmp_path / "m.json")["train"] == "a.idx"


def test_dataset_validation():
    with pytest.raises(ParameterError):
        Dataset(np.zeros((2, 2)), [0, 3], 2)
