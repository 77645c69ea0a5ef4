"""Coefficient solve, singular-value thresholding, and spectral regrouping.

The coupling between groups lives entirely in the Gram matrix of the
low-dimensional projectors,

    G_ij = ||Theta_i^T Theta_j||_F^2 = <Theta_i Theta_i^T, Theta_j Theta_j^T>,

so the self-expressive coefficient solve never has to materialize the
projector tensors themselves.  Spectral regrouping clusters the groups via
the symmetric-normalized Laplacian of |C| symmetrized, lets every trajectory
inherit its group's new label, and keeps the number of groups constant by
splitting the largest group whenever clusters merge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .data import OrderingVector

_CHOL_TRIES = 4


@dataclass(frozen=True)
class KernelMatrix:
    """Gram matrix of embedded projectors with its (jittered) Cholesky factor."""

    gram: np.ndarray
    chol_factor: np.ndarray
    jitter: float


@dataclass
class CouplingState:
    """Self-expressive coefficients, their auxiliary copy, multiplier and penalty."""

    C: np.ndarray
    Z: np.ndarray
    Y2: np.ndarray
    rho: float


def kernel_matrix(low_points) -> KernelMatrix:
    """Gram matrix G_ij = ||Theta_i^T Theta_j||_F^2 and chol(G + jitter*I)."""
    points = list(getattr(low_points, "points", low_points))
    K = len(points)
    if K < 1:
        raise ValueError("need at least one subspace")
    G = np.empty((K, K))
    for i in range(K):
        for j in range(i, K):
            cross = points[i].basis.T @ points[j].basis
            G[i, j] = G[j, i] = float(np.sum(cross * cross))
    jitter = 1e-10 * np.trace(G) / K
    last_err = None
    for _ in range(_CHOL_TRIES):
        try:
            L = np.linalg.cholesky(G + jitter * np.eye(K))
            return KernelMatrix(gram=G, chol_factor=L, jitter=jitter)
        except np.linalg.LinAlgError as exc:
            last_err = exc
            jitter *= 10.0
    raise np.linalg.LinAlgError(f"kernel matrix not factorizable after max jitter: {last_err}")


def update_coefficients(chol_factor: np.ndarray, state: CouplingState, beta1: float) -> np.ndarray:
    """Closed-form coefficient update.

    Solves C (2*beta1*L L^T + rho*I) = 2*beta1*L L^T + rho*(Z - Y2/rho) as a
    linear system; the system matrix is positive definite for any rho > 0.
    """
    if state.rho <= 0:
        raise ValueError("penalty rho must be positive")
    L = np.asarray(chol_factor, dtype=float)
    G2 = 2.0 * beta1 * (L @ L.T)
    lhs = G2 + state.rho * np.eye(L.shape[0])
    rhs = G2 + state.rho * state.Z - state.Y2
    return np.linalg.solve(lhs, rhs.T).T


def svt(M: np.ndarray, tau: float) -> np.ndarray:
    """Proximal operator of tau * nuclear norm: soft-threshold the singular values."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    if tau == 0:
        return np.array(M, dtype=float, copy=True)
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=float), full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (U * s) @ Vt


def nuclear_norm(M: np.ndarray) -> float:
    return float(np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False).sum())


# ---------------------------------------------------------------------------
# k-means


def _kmeans_pp_seeds(X: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding: each seed drawn with probability proportional to its
    squared distance to the nearest chosen seed."""
    n = X.shape[0]
    seeds = [int(rng.integers(n))]
    d2 = np.sum((X - X[seeds[0]]) ** 2, axis=1)
    while len(seeds) < k:
        total = d2.sum()
        if total <= 0.0:
            break
        seeds.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, np.sum((X - X[seeds[-1]]) ** 2, axis=1))
    return np.asarray(seeds)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = (X * X).sum(axis=1)[:, None] + (C * C).sum(axis=1)[None, :] - 2.0 * (X @ C.T)
    return np.maximum(d2, 0.0)


def kmeans(X: np.ndarray, k: int, seed=None, ensure_k: bool = True,
           max_iter: int = 100) -> np.ndarray:
    """Seeded k-means (k-means++ seeding plus Lloyd iterations) on row vectors.

    With ``ensure_k`` every cluster is kept nonempty by re-seeding empty
    clusters at the point farthest from its centroid; without it clusters may
    merge, so fewer than k labels can come back.  Returns 0-based labels.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if ensure_k and k > n:
        raise ValueError(f"cannot form {k} nonempty clusters from {n} points")
    rng = np.random.default_rng(seed)
    seeds = _kmeans_pp_seeds(X, min(k, n), rng)
    if ensure_k and len(seeds) < k:
        rest = np.setdiff1d(np.arange(n), seeds)[: k - len(seeds)]
        seeds = np.concatenate([seeds, rest])
    centers = X[seeds].copy()
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        labels = d2.argmin(axis=1)
        if ensure_k:
            for c in range(centers.shape[0]):
                if not np.any(labels == c):
                    far = int(np.argmax(d2[np.arange(n), labels]))
                    labels[far] = c
        new_centers = centers.copy()
        for c in range(centers.shape[0]):
            members = labels == c
            if np.any(members):
                new_centers[c] = X[members].mean(axis=0)
        if np.allclose(new_centers, centers, rtol=0.0, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    # drop empty cluster ids so labels are contiguous
    used = np.unique(labels)
    remap = np.zeros(used.max() + 1, dtype=int)
    remap[used] = np.arange(used.size)
    return remap[labels]


def kmeans_pp_init(S: np.ndarray, K: int, seed=None) -> OrderingVector:
    """Initial trajectory grouping: k-means on the columns of S as vectors."""
    S = np.asarray(S, dtype=float)
    if K > S.shape[1]:
        raise ValueError(f"K={K} exceeds the number of columns {S.shape[1]}")
    labels = kmeans(S.T, K, seed=seed, ensure_k=True)
    return OrderingVector(labels + 1)


# ---------------------------------------------------------------------------
# spectral regrouping


def _spectral_embedding(affinity: np.ndarray, k: int) -> np.ndarray:
    n = affinity.shape[0]
    deg = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(deg, 1e-300))
    lap = np.eye(n) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(lap)
    emb = vecs[:, : min(k, n)]
    norms = np.linalg.norm(emb, axis=1)
    return emb / np.maximum(norms, 1e-300)[:, None]


def _align_labels(labels: np.ndarray, reference: np.ndarray, K: int) -> np.ndarray:
    """Relabel groups to overlap the reference labeling as much as possible."""
    confusion = np.zeros((K, K))
    for a, b in zip(labels, reference):
        confusion[a - 1, b - 1] += 1
    rows, cols = scipy.optimize.linear_sum_assignment(-confusion)
    mapping = np.arange(1, K + 1)
    mapping[rows] = cols + 1
    return mapping[labels - 1]


def _merge_sites(gram: np.ndarray, merge_tol: float) -> np.ndarray:
    """Union groups whose subspace overlap saturates.

    ``gram[i, j] / sqrt(gram[i, i] * gram[j, j])`` equals 1 exactly when two
    groups span the same subspace and stays well below 1 for separated ones,
    independent of how many duplicates there are.  Returns compact 0-based
    site ids.
    """
    n = gram.shape[0]
    diag = np.sqrt(np.maximum(np.diag(gram), 1e-300))
    overlap = gram / np.outer(diag, diag)
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if overlap[i, j] >= merge_tol:
                parent[find(i)] = find(j)
    roots = np.array([find(i) for i in range(n)])
    _, sites = np.unique(roots, return_inverse=True)
    return sites


def spectral_cluster(C: np.ndarray, order: OrderingVector, K: int,
                     columns: np.ndarray | None = None, seed=None,
                     merge_tol: float = 0.8, gram: np.ndarray | None = None) -> OrderingVector:
    """Regroup trajectories from the self-expressive coefficients.

    Builds the affinity (|C| + |C^T|)/2 over the current groups and labels the
    groups through the symmetric-normalized Laplacian: K smallest-eigenvalue
    eigenvectors, rows normalized, k-means on the embedded groups.  Every
    trajectory inherits its group's label.

    When the subspace Gram matrix ``gram`` is given, groups whose normalized
    overlap reaches ``merge_tol`` are fused first (redundant groups spanning
    one subspace collapse to a single label); the freed labels are restored
    by k-means++ splits of the largest group, which needs the trajectory
    ``columns``.  Always returns K nonempty groups when possible, aligned
    with the incoming labels to reduce churn.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("coefficient matrix must be square")
    if order.n_groups > n:
        raise ValueError("ordering refers to more groups than coefficient rows")
    rng = np.random.default_rng(seed)
    affinity = 0.5 * (np.abs(C) + np.abs(C.T))
    np.fill_diagonal(affinity, 0.0)  # self-loops carry no grouping information

    sites = _merge_sites(np.asarray(gram, dtype=float), merge_tol) if gram is not None \
        else np.arange(n)
    m = int(sites.max()) + 1
    if m > K:
        # genuinely more sites than groups: spectral embedding + k-means
        emb = _spectral_embedding(affinity, K)
        rows = np.stack([emb[sites == s].mean(axis=0) for s in range(m)])
        rows /= np.maximum(np.linalg.norm(rows, axis=1), 1e-300)[:, None]
        site_labels = kmeans(rows, K, seed=rng, ensure_k=False)
    else:
        site_labels = np.arange(m)
    group_labels = site_labels[sites]
    labels = group_labels[order.labels - 1] + 1

    counts = np.bincount(labels, minlength=K + 1)[1:]
    while np.count_nonzero(counts) < K:
        big = int(np.argmax(counts)) + 1
        idx = np.flatnonzero(labels == big)
        if idx.size < 2:
            break
        if columns is None:
            raise ValueError("trajectory columns required to repair empty groups")
        sub = kmeans(columns[:, idx].T, 2, seed=rng, ensure_k=True)
        vacant = int(np.flatnonzero(counts == 0)[0]) + 1
        labels[idx[sub == 1]] = vacant
        counts = np.bincount(labels, minlength=K + 1)[1:]

    if np.count_nonzero(counts) == K and order.n_groups == K:
        labels = _align_labels(labels, order.labels, K)
    return order.with_labels(labels)
