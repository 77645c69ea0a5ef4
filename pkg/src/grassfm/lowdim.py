"""Neighbor-preserving reduction of subspaces to a lower-dimensional Grassmannian.

The reduction is a single linear map ``M`` (d x d_low) applied to every
high-dimensional basis.  ``M^T B_i`` is generally not orthonormal, so each
image is re-orthonormalized by a thin QR factorization,

    Theta_i @ U_i = qr(M^T B_i),        Omega_i = B_i @ U_i^{-1},

which gives ``Theta_i = M^T Omega_i`` with the same column space as the raw
image.  The map itself minimizes the similarity-weighted spread of the
projected subspaces.  Writing ``D_ij = Omega_i Omega_i^T - Omega_j Omega_j^T``,
the weighted objective is relaxed to the quadratic ``trace(M^T A M)`` with

    A = sum_{i<j} w_ij * D_ij D_ij^T,
    B = sum_i  deg_i * Omega_i Omega_i^T + jitter * I,

and solved as a symmetric-definite generalized eigenvalue problem: the d_low
eigenvectors of (A, B) with smallest eigenvalues, B-orthonormalized.  Both A
and B are symmetric positive semi-definite by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .grassmann import GrassmannPoint, SimilarityGraph

JITTER_SCALE = 1e-8


class ProjectionCollapseError(RuntimeError):
    """The linear map collapsed a subspace: M^T B is rank deficient."""


@dataclass(frozen=True)
class ProjectionMap:
    """Linear map from the high-dimensional ambient space to R^{d_low}."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] > matrix.shape[0]:
            raise ValueError(f"map must be d x d_low with d_low <= d, got {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_low(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class LowDimSet:
    """Low-dimensional representatives of a set of subspaces.

    ``points[i]`` lives on G(p_i, d_low); ``triangles[i]`` is the p x p upper
    triangular QR factor and ``omegas[i] = basis_i @ triangles[i]^{-1}`` the
    rescaled high-dimensional basis.  ``shrunk[i]`` marks groups whose image
    lost rank and had to be truncated.
    """

    points: tuple
    triangles: tuple
    omegas: tuple
    shrunk: tuple

    @property
    def K(self) -> int:
        return len(self.points)


def initial_map(d: int, d_low: int, rng) -> ProjectionMap:
    """Bootstrap map: identity on the first d_low coordinates, small noise below."""
    if not 1 <= d_low <= d:
        raise ValueError(f"need 1 <= d_low <= d, got d_low={d_low}, d={d}")
    rng = np.random.default_rng(rng)
    M = np.vstack([np.eye(d_low), 1e-2 * rng.standard_normal((d - d_low, d_low))])
    return ProjectionMap(M)


def _scatter_matrices(points, graph: SimilarityGraph, omegas):
    d = points[0].d
    # rescale each omega to the Frobenius norm of an orthonormal basis
    # (sqrt p); the rescaled bases keep the directional reweighting of the
    # previous projection but cannot drift in scale across refits
    normed = []
    for om in omegas:
        norm = np.linalg.norm(om)
        normed.append(om * (np.sqrt(om.shape[1]) / max(norm, 1e-300)))
    outers = [om @ om.T for om in normed]
    A = np.zeros((d, d))
    W = graph.weights
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            D = outers[i] - outers[j]
            A += W[i, j] * (D @ D)
    B = np.zeros((d, d))
    for i, out in enumerate(outers):
        B += graph.degrees[i] * out
    return A, B


def fit_projection(points, graph: SimilarityGraph, d_low: int, omegas=None,
                   jitter_boost: float = 1.0) -> ProjectionMap:
    """Solve for the neighbor-preserving map as a generalized eigenproblem.

    ``omegas`` defaults to the raw bases on the first call; afterwards the
    caller passes the rescaled bases from the previous projection.
    """
    points = list(points)
    if len(points) < 1:
        raise ValueError("need at least one subspace")
    d = points[0].d
    if not 1 <= d_low <= d:
        raise ValueError(f"need 1 <= d_low <= d, got d_low={d_low}, d={d}")
    if omegas is None:
        omegas = [pt.basis for pt in points]
    A, B = _scatter_matrices(points, graph, omegas)
    jitter = jitter_boost * JITTER_SCALE * max(np.trace(B), 1.0) / d
    last_err = None
    for boost in (1.0, 10.0):
        try:
            _, vecs = scipy.linalg.eigh(A, B + boost * jitter * np.eye(d))
            return ProjectionMap(vecs[:, :d_low])
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:  # pragma: no cover
            last_err = exc
    raise np.linalg.LinAlgError(f"scatter matrix singular even with jitter: {last_err}")


def project_point(point: GrassmannPoint, pmap: ProjectionMap):
    """Thin QR re-orthonormalization of one projected subspace.

    Returns ``(theta, U, omega)`` with ``theta`` the low-dimensional
    Grassmann point, ``U`` upper triangular with positive diagonal, and
    ``omega = basis @ U^{-1}``.  Raises :class:`ProjectionCollapseError` when
    the projected basis is numerically rank deficient.
    """
    if point.d != pmap.d:
        raise ValueError("map rows must match the ambient dimension")
    if pmap.d_low < point.p:
        raise ValueError(f"d_low={pmap.d_low} smaller than subspace dimension p={point.p}")
    phi = pmap.matrix.T @ point.basis
    Q, U = np.linalg.qr(phi)
    signs = np.sign(np.diag(U))
    signs[signs == 0] = 1.0
    Q, U = Q * signs, U * signs[:, None]
    diag = np.abs(np.diag(U))
    if diag.min() <= max(phi.shape) * np.finfo(float).eps * max(diag.max(), 1e-300):
        raise ProjectionCollapseError("projection collapses subspace: rank-deficient image")
    omega = scipy.linalg.solve_triangular(U.T, point.basis.T, lower=True).T
    return GrassmannPoint(Q), U, omega


def _project_shrunk(point: GrassmannPoint, pmap: ProjectionMap):
    # SVD fallback for a collapsed group: keep the numerically nonzero directions
    phi = pmap.matrix.T @ point.basis
    Uh, s, Vt = np.linalg.svd(phi, full_matrices=False)
    tol = max(phi.shape) * np.finfo(float).eps * s[0]
    r = max(1, int(np.count_nonzero(s > tol)))
    theta = GrassmannPoint(Uh[:, :r])
    U = s[:r, None] * Vt[:r]
    omega = point.basis @ (Vt[:r].T / s[:r])
    return theta, U, omega


def project_set(points, pmap: ProjectionMap, allow_shrink: bool = False) -> LowDimSet:
    """Project every subspace through one map."""
    thetas, tris, omegas, shrunk = [], [], [], []
    for pt in points:
        try:
            theta, U, omega = project_point(pt, pmap)
            flag = False
        except ProjectionCollapseError:
            if not allow_shrink:
                raise
            theta, U, omega = _project_shrunk(pt, pmap)
            flag = True
        thetas.append(theta)
        tris.append(U)
        omegas.append(omega)
        shrunk.append(flag)
    return LowDimSet(tuple(thetas), tuple(tris), tuple(omegas), tuple(shrunk))


def project_all(points, graph: SimilarityGraph, d_low: int, omegas=None):
    """Fit the map, then project every subspace through it.

    A rank collapse triggers one refit with boosted jitter; if the collapse
    persists the offending groups are shrunk to their surviving rank.
    """
    pmap = fit_projection(points, graph, d_low, omegas)
    try:
        return pmap, project_set(points, pmap)
    except ProjectionCollapseError:
        pmap = fit_projection(points, graph, d_low, omegas, jitter_boost=10.0)
        return pmap, project_set(points, pmap, allow_shrink=True)
