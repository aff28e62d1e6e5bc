import numpy as np
import pytest

from hlogformer.downstream import classify_supervised, classify_tasks, pca_project, recommend_eval
from hlogformer.training import split_dataset


def test_pca_collinear():
    with pytest.warns(UserWarning):
        res = pca_project([[0, 0], [1, 1], [2, 2]])
    assert np.all(res.coords[:, 1] == 0)
    assert np.allclose(np.abs(res.coords[:, 0]), [np.sqrt(2), 0, np.sqrt(2)])


def test_pca_diag_covariance():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((4000, 2))
    z = (z - z.mean(0)) @ np.linalg.inv(np.linalg.cholesky(np.cov(z.T))).T   # exact identity covariance
    X = z * np.array([2.0, 1.0])
    res = pca_project(X)
    assert np.allclose(res.components[0], [1, 0], atol=1e-9)
    assert res.explained_variance_ratio[0] == pytest.approx(0.8)


def test_pca_preserves_distances_full_rank():
    X = np.random.default_rng(1).standard_normal((12, 4))
    res = pca_project(X, out_dims=4)
    d0 = np.linalg.norm(X[:, None] - X[None], axis=-1)
    d1 = np.linalg.norm(res.coords[:, None] - res.coords[None], axis=-1)
    assert np.allclose(d0, d1, atol=1e-10)


def test_pca_sign_and_rotation_invariance():
    X = np.random.default_rng(2).standard_normal((30, 3)) * [3, 2, 1]
    res = pca_project(X)
    for c in res.components:
        lead = c[np.flatnonzero(np.abs(c) > 1e-12)[0]]
        assert lead > 0
    Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 3)))
    rot = pca_project(X @ Q)
    assert np.allclose(np.abs(res.coords), np.abs(rot.coords), atol=1e-9)


def test_pca_too_few_vectors():
    with pytest.raises(ValueError):
        pca_project([[1, 2], [3, 4]])


def _blobs(n=100, d=5, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, d)) + np.where(y[:, None] == 1, 4.0, -4.0)
    return X, y


def test_classify_separable():
    X, y = _blobs()
    splits = split_dataset(list(range(len(y))), 0)
    res = classify_supervised(X, y, splits)
    assert res.test_accuracy == 1.0
    assert res.n_classes == 2


def test_classify_shuffled_near_chance():
    X, y = _blobs()
    y = np.random.default_rng(9).permutation(y)
    accs = []
    for seed in range(5):
        splits = split_dataset(list(range(len(y))), seed)
        accs.append(classify_supervised(X, y, splits, seed=seed).test_accuracy)
    assert abs(np.mean(accs) - 0.5) <= 0.15


def test_classify_multiclass():
    rng = np.random.default_rng(4)
    y = np.arange(210) % 10
    centers = rng.standard_normal((10, 16)) * 5
    X = centers[y] + rng.standard_normal((210, 16)) * 0.3
    splits = split_dataset(list(range(210)), 0)
    assert classify_tasks(X, {"tactic": y}, splits)["tactic"] >= 0.95


def test_classify_single_class_errors():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError):
        classify_supervised(X, [0] * 10, split_dataset(list(range(10)), 0))
    y = [0] * 8 + [1] * 2
    with pytest.raises(ValueError):
        classify_supervised(X, y, ([0, 1, 2], [8], [9]))


def test_recommend_perfect_separation():
    d = 30
    E = np.zeros((40, d))
    E[:20, 0] = 1.0                 # user's items and the held-out positives
    for j in range(20):
        E[20 + j, 1 + j] = 1.0      # orthogonal negatives
    history = list(range(20))
    res = recommend_eval(E, [history])
    assert res == {1: 1.0, 3: 1.0, 5: 1.0, 8: 1.0, 10: 1.0}


def test_recommend_all_tied_is_half():
    # ties fall back to item id; interleave positive (even) and negative (odd) ids
    E = np.ones((40, 4))
    history = list(range(20, 40)) + list(range(0, 20, 2))
    res = recommend_eval(E, [history], ks=(2, 4, 10))
    assert res == {2: 0.5, 4: 0.5, 10: 0.5}


def test_recommend_all_tied_random_histories():
    E = np.ones((200, 4))
    rng = np.random.default_rng(0)
    histories = [rng.permutation(200)[:15].tolist() for _ in range(400)]
    res = recommend_eval(E, histories, ks=(1, 5, 10))
    # four standard errors of a 400-user mean at K=1
    assert all(abs(v - 0.5) < 0.1 for v in res.values())


def test_recommend_errors():
    E = np.ones((12, 2))
    with pytest.raises(ValueError):
        recommend_eval(E, [list(range(10))])
    with pytest.raises(ValueError):
        recommend_eval(E, [list(range(11))])
