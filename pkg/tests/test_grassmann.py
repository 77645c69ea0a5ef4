import numpy as np
import pytest

from grassfm.grassmann import (GrassmannPoint, embed, grassmann_from_block,
                               proj_distance_sq, similarity_graph)


def _random_point(rng, d, p):
    return GrassmannPoint(np.linalg.qr(rng.standard_normal((d, p)))[0])


def test_from_block_diagonal_case():
    point, sigma, right = grassmann_from_block(np.array([[2.0, 0.0], [0.0, 0.0]]), p=1)
    np.testing.assert_allclose(np.abs(point.basis), [[1.0], [0.0]], atol=1e-14)
    np.testing.assert_allclose(sigma, [2.0], atol=1e-14)
    np.testing.assert_allclose(np.abs(right), [[1.0], [0.0]], atol=1e-14)


def test_from_block_orthonormal_basis():
    rng = np.random.default_rng(0)
    for _ in range(5):
        block = rng.standard_normal((12, 7))
        point, _, _ = grassmann_from_block(block, p=3)
        np.testing.assert_allclose(point.basis.T @ point.basis, np.eye(3), atol=1e-10)


def test_from_block_truncation_error_matches_full_svd_tail():
    # oracle: residual energy of the best rank-p approximation is the tail
    # singular-value energy from a full SVD
    rng = np.random.default_rng(1)
    block = rng.standard_normal((12, 5))
    p = 3
    point, sigma, right = grassmann_from_block(block, p)
    approx = point.basis @ (sigma[:, None] * right.T)
    s_full = np.linalg.svd(block, compute_uv=False)
    tail = np.sqrt((s_full[p:] ** 2).sum())
    np.testing.assert_allclose(np.linalg.norm(block - approx), tail, atol=1e-10)


def test_from_block_sign_convention_deterministic():
    rng = np.random.default_rng(2)
    block = rng.standard_normal((8, 4))
    p1, s1, r1 = grassmann_from_block(block, 2)
    p2, s2, r2 = grassmann_from_block(block.copy(), 2)
    np.testing.assert_array_equal(p1.basis, p2.basis)
    idx = np.argmax(np.abs(p1.basis), axis=0)
    assert (p1.basis[idx, np.arange(2)] > 0).all()
    # sign flips leave the product unchanged
    np.testing.assert_allclose(p1.basis @ (s1[:, None] * r1.T),
                               p2.basis @ (s2[:, None] * r2.T), atol=1e-12)


def test_from_block_degenerate_group_shrinks():
    block = np.array([[1.0], [2.0], [0.5], [0.0]])
    point, sigma, right = grassmann_from_block(block, p=1)
    assert point.p == 1 and right.shape == (1, 1)
    # rank-1 data asked for p=2 is an error (p exceeds column count)
    with pytest.raises(ValueError):
        grassmann_from_block(block, p=2)


def test_from_block_rank_deficient_wide_block():
    rng = np.random.default_rng(3)
    u = rng.standard_normal((6, 1))
    v = rng.standard_normal((1, 4))
    point, sigma, right = grassmann_from_block(u @ v, p=3)
    assert point.p == 1  # numerical rank 1, shrunk


def test_embed_examples():
    e1 = GrassmannPoint(np.array([[1.0], [0.0]]))
    np.testing.assert_allclose(embed(e1), [[1.0, 0.0], [0.0, 0.0]], atol=1e-14)
    rng = np.random.default_rng(4)
    pt = _random_point(rng, 9, 4)
    Pi = embed(pt)
    np.testing.assert_allclose(np.trace(Pi), 4.0, atol=1e-10)
    np.testing.assert_allclose(Pi @ Pi, Pi, atol=1e-10)
    np.testing.assert_allclose(Pi, Pi.T, atol=1e-12)


def test_proj_distance_examples():
    e1 = GrassmannPoint(np.array([[1.0], [0.0]]))
    e2 = GrassmannPoint(np.array([[0.0], [1.0]]))
    assert proj_distance_sq(e1, e1) == 0.0
    np.testing.assert_allclose(proj_distance_sq(e1, e2), 1.0, atol=1e-14)


def test_proj_distance_basis_invariance():
    rng = np.random.default_rng(5)
    pt = _random_point(rng, 10, 3)
    Q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    rotated = GrassmannPoint(pt.basis @ Q)
    assert proj_distance_sq(pt, rotated) <= 1e-10


def test_metric_identity_vs_embedding():
    # d_g^2 computed from cross products equals the embedded Frobenius form
    rng = np.random.default_rng(6)
    for _ in range(20):
        a = _random_point(rng, 8, 3)
        b = _random_point(rng, 8, 3)
        direct = 0.5 * np.linalg.norm(embed(a) - embed(b)) ** 2
        np.testing.assert_allclose(proj_distance_sq(a, b), direct, atol=1e-8)
        np.testing.assert_allclose(proj_distance_sq(a, b),
                                   3 - np.linalg.norm(a.basis.T @ b.basis) ** 2, atol=1e-8)


def test_metric_properties_on_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(10):
        pts = [_random_point(rng, 7, 2) for _ in range(3)]
        d01 = np.sqrt(proj_distance_sq(pts[0], pts[1]))
        d10 = np.sqrt(proj_distance_sq(pts[1], pts[0]))
        d02 = np.sqrt(proj_distance_sq(pts[0], pts[2]))
        d12 = np.sqrt(proj_distance_sq(pts[1], pts[2]))
        assert d01 >= 0
        np.testing.assert_allclose(d01, d10, atol=1e-12)
        assert d02 <= d01 + d12 + 1e-10

    # zero iff equal column spaces
    a = _random_point(rng, 7, 2)
    mix = GrassmannPoint(np.linalg.qr(a.basis @ rng.standard_normal((2, 2)))[0])
    assert proj_distance_sq(a, mix) <= 1e-10
    assert np.linalg.matrix_rank(np.hstack([a.basis, mix.basis])) == 2


def test_proj_distance_dimension_mismatch():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError):
        proj_distance_sq(_random_point(rng, 6, 2), _random_point(rng, 8, 2))


def test_similarity_graph_values():
    e1 = GrassmannPoint(np.array([[1.0], [0.0]]))
    e2 = GrassmannPoint(np.array([[0.0], [1.0]]))
    g = similarity_graph([e1, e1])
    np.testing.assert_allclose(g.weights, np.ones((2, 2)), atol=1e-14)
    g = similarity_graph([e1, e2])
    np.testing.assert_allclose(g.weights[0, 1], np.exp(-1.0), atol=1e-12)


def test_similarity_graph_symmetric_unit_diagonal():
    rng = np.random.default_rng(9)
    pts = [_random_point(rng, 9, 3) for _ in range(5)]
    g = similarity_graph(pts)
    np.testing.assert_allclose(g.weights, g.weights.T, atol=1e-14)
    np.testing.assert_allclose(np.diag(g.weights), np.ones(5), atol=1e-14)
    assert ((g.weights > 0) & (g.weights <= 1.0)).all()
    np.testing.assert_allclose(g.degrees, g.weights.sum(axis=1), atol=1e-14)


def test_grassmann_point_validation():
    with pytest.raises(ValueError):
        GrassmannPoint(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        GrassmannPoint(np.ones((2, 3)))
