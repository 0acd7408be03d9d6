import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvclust import data
from mvclust.errors import DataFormatError, UsageError


def distinct_points(x, tol=1e-3):
    reps = []
    for row in x:
        if not any(np.abs(row - r).max() < tol for r in reps):
            reps.append(row)
    return len(reps)


def test_default_toy_shapes():
    ds = data.generate_toy(data.toy_spec(5))
    assert ds.n == 1000 and ds.n_views == 2 and ds.dims == (2, 2)
    assert Counter(ds.labels.tolist()) == {c: 200 for c in range(5)}


@pytest.mark.parametrize("k, expected", [(5, (2, 3)), (3, (2, 2))])
def test_partition_structure_at_zero_covariance(k, expected):
    ds = data.generate_toy(data.toy_spec(k, per_cluster=20, cov_scale=1e-12))
    assert tuple(distinct_points(x) for x in ds.views) == expected


def test_five_cluster_groups_match_caption():
    ds = data.generate_toy(data.toy_spec(5, per_cluster=3, cov_scale=1e-12))
    for v, groups in enumerate(data.TOY_PARTITIONS[5]):
        centre = {c: ds.views[v][ds.labels == c][0] for c in range(5)}
        for group in groups:
            assert distinct_points([centre[c] for c in group]) == 1
        assert distinct_points([centre[g[0]] for g in groups]) == len(groups)


def test_toy_is_deterministic():
    a = data.generate_toy(data.toy_spec(5, seed=3))
    b = data.generate_toy(data.toy_spec(5, seed=3))
    assert data.dumps_mvd(a) == data.dumps_mvd(b)
    assert data.dumps_mvd(a) != data.dumps_mvd(data.generate_toy(data.toy_spec(5, seed=4)))


def test_toy_rejects_unknown_k():
    with pytest.raises(UsageError):
        data.toy_spec(4)


def test_dataset_validation():
    with pytest.raises(UsageError):
        data.MultiViewDataset((np.zeros((3, 2)), np.zeros((4, 2))))
    with pytest.raises(UsageError):
        data.MultiViewDataset((np.zeros((3, 2)),), labels=[0, 1])


def test_corrupt_view_statistics():
    ds = data.generate_toy(data.toy_spec(5, per_cluster=1000))
    noisy = data.corrupt_view(ds, 1, 2.5, seed=9)
    diff = noisy.views[1] - ds.views[1]
    assert diff.size >= 10_000
    assert abs(diff.std() - 2.5) / 2.5 < 0.05
    assert noisy.views[0].tobytes() == ds.views[0].tobytes()
    assert np.array_equal(noisy.labels, ds.labels)


def test_corrupt_view_identity_and_idempotence():
    ds = data.generate_toy(data.toy_spec(3, per_cluster=10))
    same = data.corrupt_view(ds, 0, 0.0, seed=1)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(same.views, ds.views))
    once = data.corrupt_view(ds, 1, 1.0, seed=1)
    twice = data.corrupt_view(once, 1, 0.0, seed=5)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(once.views, twice.views))
    with pytest.raises(UsageError):
        data.corrupt_view(ds, 2, 1.0, seed=1)
    with pytest.raises(UsageError):
        data.corrupt_view(ds, 0, -1.0, seed=1)


def test_mvd_round_trip(tmp_path):
    ds = data.generate_toy(data.toy_spec(3, per_cluster=7))
    path = tmp_path / "toy.mvd"
    data.save(ds, path)
    back = data.load(path)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(back.views, ds.views))
    assert np.array_equal(back.labels, ds.labels)
    assert data.dumps_mvd(back) == path.read_bytes()


def test_mvd_without_labels():
    ds = data.MultiViewDataset((np.arange(6.0).reshape(3, 2), np.ones((3, 1))))
    back = data.loads_mvd(data.dumps_mvd(ds))
    assert back.labels is None and back.dims == (2, 1)


def test_mvd_layout():
    raw = data.dumps_mvd(data.MultiViewDataset((np.array([[1.5]]),), labels=[0]))
    assert raw[:4] == b"MVD1"
    # header (16) + dims (4) + flag (1) + one float64 + one u32 label
    assert len(raw) == 16 + 4 + 1 + 8 + 4


@given(st.integers(0, 80))
def test_truncated_mvd_is_format_error(cut):
    raw = data.dumps_mvd(data.MultiViewDataset((np.ones((3, 2)), np.zeros((3, 1))), labels=[0, 1, 0]))
    cut = min(cut, len(raw) - 1)
    with pytest.raises(DataFormatError) as info:
        data.loads_mvd(raw[:cut])
    assert info.value.offset is not None and info.value.offset <= cut


def test_mvd_corruptions():
    raw = data.dumps_mvd(data.MultiViewDataset((np.ones((2, 2)),), labels=[0, 1]))
    with pytest.raises(DataFormatError):
        data.loads_mvd(b"MVD2" + raw[4:])
    with pytest.raises(DataFormatError):
        data.loads_mvd(raw + b"x")
    bad_flag = bytearray(raw)
    bad_flag[20] = 7
    with pytest.raises(DataFormatError):
        data.loads_mvd(bytes(bad_flag))


def test_hand_written_csv_manifest(tmp_path):
    (tmp_path / "a.csv").write_text("1.0,2.0\n3.5,-4.0\n")
    (tmp_path / "b.csv").write_text("0.25\n0.5\n")
    (tmp_path / "y.csv").write_text("1\n0\n")
    manifest = {"name": "hand", "views": [{"path": "a.csv", "dim": 2}, {"path": "b.csv", "dim": 1}],
                "labels": "y.csv"}
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    ds = data.load(tmp_path / "m.json")
    np.testing.assert_array_equal(ds.views[0], [[1.0, 2.0], [3.5, -4.0]])
    np.testing.assert_array_equal(ds.views[1], [[0.25], [0.5]])
    np.testing.assert_array_equal(ds.labels, [1, 0])
    assert ds.name == "hand"


def test_csv_round_trip(tmp_path):
    ds = data.generate_toy(data.toy_spec(3, per_cluster=4))
    data.save_csv(ds, tmp_path / "toy.json")
    back = data.load(tmp_path / "toy.json", format="csv")
    assert all(a.tobytes() == b.tobytes() for a, b in zip(back.views, ds.views))
    assert np.array_equal(back.labels, ds.labels)


def test_csv_errors(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"views": [{"path": "missing.csv"}]}))
    with pytest.raises(FileNotFoundError):
        data.load(tmp_path / "m.json")
    (tmp_path / "a.csv").write_text("1,2\n3\n")
    (tmp_path / "m2.json").write_text(json.dumps({"views": [{"path": "a.csv"}]}))
    with pytest.raises(DataFormatError):
        data.load(tmp_path / "m2.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(DataFormatError):
        data.load(tmp_path / "bad.json")
    with pytest.raises(FileNotFoundError):
        data.load(tmp_path / "nope.mvd")


def test_drop_last_and_evaluation_cover():
    assert len(data.batch_indices(250, 100, seed=0, epoch=0)) == 2
    evaluation = data.batch_indices(250, 100, seed=0, epoch=0, train=False)
    assert [len(b) for b in evaluation] == [100, 100, 50]
    np.testing.assert_array_equal(np.concatenate(evaluation), np.arange(250))


@given(st.integers(2, 300), st.integers(2, 50), st.integers(0, 2**32), st.integers(0, 5))
def test_shuffle_is_a_permutation(n, batch, seed, epoch):
    batch = min(batch, n)
    got = data.batch_indices(n, batch, seed, epoch)
    assert all(len(b) == batch for b in got) and len(got) == n // batch
    flat = np.concatenate(got)
    assert len(set(flat.tolist())) == len(flat)
    assert set(flat.tolist()) <= set(range(n))


def test_shuffle_depends_on_seed_and_epoch():
    a = data.batch_indices(50, 10, seed=1, epoch=0)
    assert np.array_equal(np.concatenate(a), np.concatenate(data.batch_indices(50, 10, seed=1, epoch=0)))
    assert not np.array_equal(np.concatenate(a), np.concatenate(data.batch_indices(50, 10, seed=1, epoch=1)))


def test_batch_size_validation():
    with pytest.raises(UsageError):
        data.batch_indices(10, 1, 0, 0)
    with pytest.raises(UsageError):
        data.batch_indices(10, 11, 0, 0)


def test_batches_slice_every_view():
    ds = data.generate_toy(data.toy_spec(3, per_cluster=10))
    first = next(data.batches(ds, 8, seed=0, epoch=0))
    assert [x.shape for x in first] == [(8, 2), (8, 2)]
