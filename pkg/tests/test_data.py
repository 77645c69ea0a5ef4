import json

import numpy as np
import pytest

from grassfm.data import (Dataset, DatasetError, OrderingVector, arrange_columns,
                          compose_history, load_dataset, load_matrix,
                          permute_point_rows, restore_columns, restore_values,
                          save_dataset, save_matrix, save_shape, to_frame_major,
                          to_point_major)


def _rotations(F, seed=0):
    rng = np.random.default_rng(seed)
    R = np.empty((F, 2, 3))
    for f in range(F):
        Q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        R[f] = Q[:2]
    return R


def test_point_major_single_point_single_frame():
    S = np.array([[1.0], [2.0], [3.0]])
    out = to_point_major(S)
    np.testing.assert_array_equal(out, [[1.0], [2.0], [3.0]])


def test_point_major_two_frames():
    S = np.array([[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]])
    out = to_point_major(S)
    assert out.shape == (3, 2)
    np.testing.assert_array_equal(out[:, 0], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(out[:, 1], [4.0, 5.0, 6.0])


def test_point_major_round_trip_exact():
    rng = np.random.default_rng(1)
    S = rng.standard_normal((12, 7))
    np.testing.assert_array_equal(to_frame_major(to_point_major(S)), S)
    M = rng.standard_normal((21, 4))
    np.testing.assert_array_equal(to_point_major(to_frame_major(M)), M)


def test_point_major_linear():
    rng = np.random.default_rng(2)
    X, Y = rng.standard_normal((2, 9, 5))
    a, b = 0.3, -1.7
    np.testing.assert_allclose(to_point_major(a * X + b * Y),
                               a * to_point_major(X) + b * to_point_major(Y), atol=1e-14)


def test_point_major_rejects_bad_rows():
    with pytest.raises(ValueError):
        to_point_major(np.zeros((7, 3)))
    with pytest.raises(ValueError):
        to_frame_major(np.zeros((8, 3)))


def test_permute_point_rows_matches_column_permutation():
    rng = np.random.default_rng(3)
    S = rng.standard_normal((9, 6))
    perm = rng.permutation(6)
    np.testing.assert_allclose(permute_point_rows(to_point_major(S), perm),
                               to_point_major(S[:, perm]), atol=1e-14)


def test_arrange_columns_identity():
    order = OrderingVector(np.array([1, 1, 2]))
    M = np.array([[1.0, 2.0, 3.0]])
    M2, order2 = arrange_columns(order, M)
    np.testing.assert_array_equal(M2, M)
    np.testing.assert_array_equal(order2.labels, [1, 1, 2])


def test_arrange_columns_swap():
    order = OrderingVector(np.array([2, 1]))
    M = np.array([[10.0, 20.0]])
    M2, order2 = arrange_columns(order, M)
    np.testing.assert_array_equal(M2, [[20.0, 10.0]])
    np.testing.assert_array_equal(order2.labels, [1, 2])


def test_arrange_columns_round_trip_and_norm():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((5, 8))
    order = OrderingVector(rng.integers(1, 4, size=8))
    M2, order2 = arrange_columns(order, M)
    assert np.isclose(np.linalg.norm(M2), np.linalg.norm(M))
    # multiset of columns preserved
    assert sorted(map(tuple, M2.T.round(12))) == sorted(map(tuple, M.T.round(12)))
    np.testing.assert_array_equal(restore_columns(M2, order2.history), M)


def test_history_composition_tracks_column_ids():
    rng = np.random.default_rng(5)
    ids = np.arange(10)
    M = rng.standard_normal((3, 10))
    order = OrderingVector(rng.integers(1, 4, size=10))
    cur_ids = ids.copy()
    cur = M.copy()
    for _ in range(4):
        cur, order = arrange_columns(order, cur)
        cur_ids = cur_ids[order.history[-1]]
        order = order.with_labels(rng.integers(1, 4, size=10))
    comp = compose_history(order.history, 10)
    np.testing.assert_array_equal(ids[comp], cur_ids)
    np.testing.assert_array_equal(restore_values(cur_ids, order.history), ids)


def test_ordering_vector_validates():
    with pytest.raises(ValueError):
        OrderingVector(np.array([0, 1]))
    with pytest.raises(ValueError):
        OrderingVector(np.array([[1, 2]]))


def test_dataset_invariants(tmp_path):
    F, P = 2, 4
    R = _rotations(F)
    rng = np.random.default_rng(6)
    S_gt = rng.standard_normal((3 * F, P))
    W = np.einsum("fij,fjp->fip", R, S_gt.reshape(F, 3, P)).reshape(2 * F, P)
    ds = Dataset(W=W, R=R, S_gt=S_gt)
    assert ds.F == F and ds.P == P
    np.testing.assert_array_equal(ds.column_ids, np.arange(P))

    bad_R = R.copy()
    bad_R[0, 0] *= 2.0
    with pytest.raises(DatasetError, match="orthonormal"):
        Dataset(W=W, R=bad_R)
    bad_W = W.copy()
    bad_W[0, 0] = np.nan
    with pytest.raises(DatasetError, match="non-finite"):
        Dataset(W=bad_W, R=R)


def test_dataset_directory_round_trip(tmp_path):
    F, P = 2, 4
    R = _rotations(F, seed=7)
    rng = np.random.default_rng(8)
    S_gt = rng.standard_normal((3 * F, P))
    W = np.einsum("fij,fjp->fip", R, S_gt.reshape(F, 3, P)).reshape(2 * F, P)
    ds = Dataset(W=W, R=R, S_gt=S_gt)
    save_dataset(ds, tmp_path / "scene", extra_meta={"K": 2})
    loaded = load_dataset(tmp_path / "scene")
    assert loaded.F == F and loaded.P == P
    np.testing.assert_allclose(loaded.W, W, atol=0, rtol=0)
    np.testing.assert_allclose(loaded.S_gt, S_gt, atol=0, rtol=0)
    meta = json.loads((tmp_path / "scene" / "meta.json").read_text())
    assert meta["frames"] == F and meta["points"] == P and meta["K"] == 2


def test_load_dataset_missing_rotations(tmp_path):
    root = tmp_path / "scene"
    root.mkdir()
    save_matrix(root / "W.csv", np.zeros((4, 3)))
    with pytest.raises(DatasetError, match="missing rotations"):
        load_dataset(root)


def test_load_dataset_meta_mismatch(tmp_path):
    F, P = 2, 3
    root = tmp_path / "scene"
    root.mkdir()
    save_matrix(root / "W.csv", np.zeros((2 * F, P)))
    save_matrix(root / "R.csv", _rotations(F).reshape(2 * F, 3))
    (root / "meta.json").write_text(json.dumps({"frames": F, "points": P + 1}))
    with pytest.raises(DatasetError, match="promises"):
        load_dataset(root)


def test_save_shape_text_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    S = rng.standard_normal((6, 5)) * 10.0 ** rng.integers(-8, 8, size=(6, 5))
    save_shape(tmp_path / "out", S, meta={"seed": 1})
    back = load_matrix(tmp_path / "out" / "S_est.csv")
    np.testing.assert_allclose(back, S, rtol=1e-12, atol=0)
