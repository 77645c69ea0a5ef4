"""Grassmann-manifold primitives for groups of trajectories.

A point on the Grassmann manifold G(p, d) is a p-dimensional linear subspace
of R^d, represented here by a d x p matrix with orthonormal columns.  The
embedding ``embed`` maps a subspace to its orthogonal projector B B^T, a
symmetric idempotent matrix, and the squared projection distance between two
subspaces is

    d_g^2(B1, B2) = 0.5 * ||B1 B1^T - B2 B2^T||_F^2
                  = 0.5 * (p1 + p2) - ||B1^T B2||_F^2 ,

which depends only on the column spaces, never on the particular bases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OrderingVector

ORTHONORMALITY_TOL = 1e-10


@dataclass(frozen=True)
class GrassmannPoint:
    """An orthonormal d x p basis of a p-dimensional subspace of R^d."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise ValueError("basis must be a 2-D matrix")
        d, p = basis.shape
        if not 0 < p <= d:
            raise ValueError(f"need 0 < p <= d, got basis shape {basis.shape}")
        gram_err = np.abs(basis.T @ basis - np.eye(p)).max()
        if gram_err > 1e2 * ORTHONORMALITY_TOL:
            raise ValueError(f"basis columns not orthonormal (deviation {gram_err:.3e})")
        object.__setattr__(self, "basis", basis)

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def p(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class GroupDecomposition:
    """Per-group truncated SVD factors of a column-partitioned shape matrix.

    ``points[i]`` spans group i's trajectories, ``sigmas[i]`` holds its
    leading singular values (nonincreasing) and ``right_factors[i]`` the
    matching right singular vectors (n_i x p_i), so the group block is
    approximately ``points[i].basis @ diag(sigmas[i]) @ right_factors[i].T``.
    """

    points: tuple
    sigmas: tuple
    right_factors: tuple
    order: OrderingVector

    @property
    def K(self) -> int:
        return len(self.points)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([rf.shape[0] for rf in self.right_factors])


def _fix_signs(U: np.ndarray, Vt: np.ndarray):
    # deterministic bases across platforms: largest-|entry| of each left vector positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def grassmann_from_block(block: np.ndarray, p: int):
    """Top-p truncated SVD of a trajectory block.

    Returns ``(point, sigma, right)`` with ``point.basis`` the leading left
    singular vectors, ``sigma`` the leading singular values and ``right`` the
    matching right singular vectors (columns of V).  If the block's numerical
    rank r falls below p the factors are shrunk to r components (at least 1),
    so tiny or degenerate groups still yield a valid subspace.
    """
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[1] < 1:
        raise ValueError("block must be a d x n matrix with n >= 1")
    d, n = block.shape
    if not 1 <= p <= min(d, n):
        raise ValueError(f"p={p} out of range for a {d}x{n} block")
    U, s, Vt = np.linalg.svd(block, full_matrices=False)
    U, Vt = _fix_signs(U, Vt)
    tol = max(d, n) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    r = max(1, min(p, int(np.count_nonzero(s > tol))))
    return GrassmannPoint(U[:, :r]), s[:r].copy(), Vt[:r].T.copy()


def embed(point: GrassmannPoint) -> np.ndarray:
    """Orthogonal projector of the subspace: symmetric, idempotent, trace p."""
    return point.basis @ point.basis.T


def proj_distance_sq(a: GrassmannPoint, b: GrassmannPoint) -> float:
    """Squared projection distance between two subspaces of the same ambient space."""
    if a.d != b.d:
        raise ValueError(f"ambient dimension mismatch: {a.d} vs {b.d}")
    cross = a.basis.T @ b.basis
    val = 0.5 * (a.p + b.p) - float(np.sum(cross * cross))
    return max(val, 0.0)


@dataclass(frozen=True)
class SimilarityGraph:
    """Dense similarity weights between subspaces and their degrees."""

    weights: np.ndarray
    degrees: np.ndarray


def similarity_graph(points) -> SimilarityGraph:
    """Pairwise similarities w_ij = exp(-d_g^2(point_i, point_j))."""
    points = list(points)
    K = len(points)
    if K == 0:
        raise ValueError("need at least one subspace")
    d = points[0].d
    if any(pt.d != d for pt in points):
        raise ValueError("all subspaces must share the ambient dimension")
    W = np.ones((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            w = np.exp(-proj_distance_sq(points[i], points[j]))
            W[i, j] = W[j, i] = w
    return SimilarityGraph(weights=W, degrees=W.sum(axis=1))
