"""Outer optimization loop: alternating shape, grouping, and coefficient updates.

Each iteration performs, in order: a penalized least-squares shape solve
against the measurements; regrouping of trajectory columns by their current
labels with a per-group truncated SVD; a similarity-graph refresh; the
low-dimensional projection of every group; the coefficient solve through the
projector Gram matrix; spectral regrouping; per-group low-rank reconstruction
of the shape; singular-value thresholding of the point-major shape and of the
auxiliary coefficient copy; multiplier updates; and a geometric penalty
increase.  The loop stops when the consensus gap drops below ``eps`` or the
penalty passes ``rho_max`` (the growth test fires on the uncapped candidate,
the capped value is what enters the updates).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import (CouplingState, kernel_matrix, kmeans_pp_init, nuclear_norm,
                         spectral_cluster, svt, update_coefficients)
from .data import (Dataset, OrderingVector, permute_point_rows, restore_columns,
                   restore_values, to_frame_major, to_point_major)
from .grassmann import GroupDecomposition, grassmann_from_block, similarity_graph
from .lowdim import ProjectionCollapseError, initial_map, project_all, project_set


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs for :func:`admm_solve`.

    ``beta2 = None`` resolves to ``rho0 * sigma1 / 4`` with ``sigma1`` the
    leading singular value of the initial point-major shape, so the shrinkage
    sweep starts just under the dominant shape mode regardless of data scale;
    ``d_tilde = None`` resolves to ``min(3F, max(2p, 12))``.  The working
    rank ``p`` deliberately exceeds the expected per-group rank: trimming
    groups too aggressively during the early iterations discards the depth
    corrections injected by the shape shrinkage step.
    """

    K: int = 6
    p: int = 6
    beta1: float = 1.0
    beta2: float | None = None
    beta3: float = 0.1
    rho0: float = 1e-2
    rho_max: float = 1e8
    eps: float = 1e-10
    c: float = 1.1
    d_tilde: int | None = None
    max_iter: int = 300
    seed: int = 0
    delta_stride: int = 1
    merge_tol: float = 0.8

    def __post_init__(self):
        if self.K < 1 or self.p < 1:
            raise ValueError("K and p must be positive")
        if not self.rho0 < self.rho_max:
            raise ValueError("need rho0 < rho_max")
        if self.c <= 1.0:
            raise ValueError("penalty growth factor c must exceed 1")
        if min(self.beta1, self.beta3) < 0 or (self.beta2 is not None and self.beta2 < 0):
            raise ValueError("beta weights must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.delta_stride < 1:
            raise ValueError("delta_stride must be >= 1")

    def resolve(self, F: int, P: int) -> "SolverConfig":
        """Fill in the size-dependent defaults for a concrete dataset.

        ``beta2`` stays ``None`` here when unset; it needs the data itself
        and is resolved at the start of :func:`admm_solve`.
        """
        d_tilde = self.d_tilde if self.d_tilde is not None else min(3 * F, max(2 * self.p, 12))
        if not self.p <= d_tilde <= 3 * F:
            raise ValueError(f"need p <= d_tilde <= 3F, got d_tilde={d_tilde}")
        if self.K > P:
            raise ValueError(f"K={self.K} exceeds the number of trajectories {P}")
        return replace(self, d_tilde=d_tilde)


@dataclass
class SolveState:
    """Mutable loop state; column-order sensitive fields stay mutually consistent."""

    W: np.ndarray
    S: np.ndarray
    S_pm: np.ndarray
    Y1: np.ndarray
    C: np.ndarray
    Z: np.ndarray
    Y2: np.ndarray
    rho: float
    order: OrderingVector
    decomp: GroupDecomposition | None
    pmap: object
    omegas: tuple | None


@dataclass
class SolveResult:
    """Solver output with columns restored to the original dataset order."""

    S_est: np.ndarray
    labels: OrderingVector
    labels_original: np.ndarray
    diagnostics: list
    iterations: int
    converged: bool
    reason: str
    config: SolverConfig


def _rotation_normal_blocks(R: np.ndarray, rho: float) -> np.ndarray:
    return np.einsum("fij,fik->fjk", R, R) + rho * np.eye(3)


def _rt_w(R: np.ndarray, W: np.ndarray) -> np.ndarray:
    F, P = R.shape[0], W.shape[1]
    return np.einsum("fji,fjp->fip", R, W.reshape(F, 2, P)).reshape(3 * F, P)


def project_trajectories(R: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Per-frame orthographic projection R_f @ S_f stacked into a 2F x P matrix."""
    F, P = R.shape[0], S.shape[1]
    return np.einsum("fij,fjp->fip", R, S.reshape(F, 3, P)).reshape(2 * F, P)


def update_shape(W: np.ndarray, R: np.ndarray, S_pm: np.ndarray, Y1: np.ndarray,
                 rho: float) -> np.ndarray:
    """Penalized least-squares shape solve.

    Solves (R_f^T R_f + rho*I) S_f = rho*g(S_pm)_f + g(Y1)_f + R_f^T W_f per
    frame, where g is the point-major-to-frame-major conversion; the normal
    matrix is 3x3 block diagonal so one small solve per frame is broadcast
    over all P columns.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    F, P = R.shape[0], W.shape[1]
    rhs = rho * to_frame_major(S_pm) + to_frame_major(Y1) + _rt_w(R, W)
    blocks = _rotation_normal_blocks(R, rho)
    return np.linalg.solve(blocks, rhs.reshape(F, 3, P)).reshape(3 * F, P)


def regroup(order: OrderingVector, S: np.ndarray, p: int):
    """Partition columns by label, sort them group-contiguous, factor each group.

    Returns ``(decomposition, S_arranged, perm)``; the caller must apply
    ``perm`` to every other column-order-sensitive quantity.
    """
    K = order.n_groups
    perm = order.arrange_permutation()
    labels_sorted = order.labels[perm]
    counts = np.bincount(labels_sorted, minlength=K + 1)[1:]
    if np.any(counts == 0):
        raise ValueError("every group label in 1..K must occur at least once")
    new_order = OrderingVector(labels_sorted, order.history + (perm,))
    S2 = S[:, perm]
    points, sigmas, rights = [], [], []
    stop = np.cumsum(counts)
    start = stop - counts
    for g in range(K):
        block = S2[:, start[g]:stop[g]]
        point, sigma, right = grassmann_from_block(block, min(p, block.shape[1]))
        points.append(point)
        sigmas.append(sigma)
        rights.append(right)
    decomp = GroupDecomposition(tuple(points), tuple(sigmas), tuple(rights), new_order)
    return decomp, S2, perm


def reconstruct_shape(decomp: GroupDecomposition) -> np.ndarray:
    """Replace each group block by its truncated-SVD reconstruction."""
    blocks = [pt.basis @ (sig[:, None] * rf.T)
              for pt, sig, rf in zip(decomp.points, decomp.sigmas, decomp.right_factors)]
    return np.concatenate(blocks, axis=1)


def init_state(ds: Dataset, cfg: SolverConfig) -> SolveState:
    """Initial state: minimum-norm shape, k-means++ grouping, bootstrap map."""
    cfg = cfg.resolve(ds.F, ds.P)
    ranks = np.linalg.matrix_rank(ds.R)
    if np.any(ranks < 2):
        warnings.warn("rank-deficient rotation block; pseudoinverse solution will be degenerate")
    pinv_blocks = np.linalg.pinv(ds.R)
    S = np.einsum("fij,fjp->fip", pinv_blocks, ds.W.reshape(ds.F, 2, ds.P)).reshape(3 * ds.F, ds.P)
    order = kmeans_pp_init(S, cfg.K, seed=cfg.seed)
    decomp, S, perm = regroup(order, S, cfg.p)
    W = ds.W[:, perm]
    order = decomp.order
    rng = np.random.default_rng(cfg.seed)
    pmap = initial_map(3 * ds.F, cfg.d_tilde, rng)
    K = cfg.K
    return SolveState(
        W=W, S=S, S_pm=to_point_major(S), Y1=np.zeros((3 * ds.P, ds.F)),
        C=np.zeros((K, K)), Z=np.zeros((K, K)), Y2=np.zeros((K, K)),
        rho=cfg.rho0, order=order, decomp=decomp, pmap=pmap, omegas=None,
    )


def objective_value(W, R, S, S_pm, Y1, C, Z, Y2, rho, gram, beta1, beta2, beta3) -> float:
    """Augmented-Lagrangian value of the full objective.

    The self-expressive term is evaluated through the projector Gram matrix:
    ||X - X C||_F^2 = trace((I - C)^T G (I - C)) for the stacked projectors X.
    """
    S_pm_of_S = to_point_major(S)
    eye = np.eye(C.shape[0])
    val = 0.5 * np.linalg.norm(W - project_trajectories(R, S)) ** 2
    val += beta1 * float(np.trace((eye - C).T @ gram @ (eye - C)))
    val += beta2 * nuclear_norm(S_pm) + beta3 * nuclear_norm(Z)
    val += 0.5 * rho * np.linalg.norm(S_pm - S_pm_of_S) ** 2 + float(np.sum(Y1 * (S_pm - S_pm_of_S)))
    val += 0.5 * rho * np.linalg.norm(C - Z) ** 2 + float(np.sum(Y2 * (C - Z)))
    return float(val)


def admm_solve(ds: Dataset, cfg: SolverConfig) -> SolveResult:
    """Run the full alternating loop on a dataset.

    Deterministic for a fixed config (all randomness flows from ``cfg.seed``).
    Diagnostics record per iteration: consensus gap, penalty, reprojection
    error, and the two nuclear norms.
    """
    cfg = cfg.resolve(ds.F, ds.P)
    rng = np.random.default_rng(cfg.seed + 1)
    st = init_state(ds, cfg)
    if cfg.beta2 is None:
        sigma1 = np.linalg.norm(st.S_pm, 2)
        cfg = replace(cfg, beta2=cfg.rho0 * sigma1 / 4.0)
    R = ds.R
    diagnostics: list[dict] = []
    it = 0
    reason = "max_iter"
    for it in range(1, cfg.max_iter + 1):
        S = update_shape(st.W, R, st.S_pm, st.Y1, st.rho)
        decomp, S, perm = regroup(st.order, S, cfg.p)
        st.W = st.W[:, perm]
        st.S_pm = permute_point_rows(st.S_pm, perm)
        st.Y1 = permute_point_rows(st.Y1, perm)
        st.order = decomp.order
        st.decomp = decomp

        graph = similarity_graph(decomp.points)
        if st.omegas is None or (it - 1) % cfg.delta_stride == 0:
            st.pmap, lowset = project_all(decomp.points, graph, cfg.d_tilde, st.omegas)
        else:
            try:
                lowset = project_set(decomp.points, st.pmap)
            except ProjectionCollapseError:
                st.pmap, lowset = project_all(decomp.points, graph, cfg.d_tilde, st.omegas)
        st.omegas = lowset.omegas

        ker = kernel_matrix(lowset)
        st.C = update_coefficients(ker.chol_factor,
                                   CouplingState(st.C, st.Z, st.Y2, st.rho), cfg.beta1)
        st.order = spectral_cluster(st.C, st.order, cfg.K, columns=S, seed=rng,
                                    merge_tol=cfg.merge_tol, gram=ker.gram)

        S = reconstruct_shape(decomp)
        st.S = S
        S_pm_of_S = to_point_major(S)
        st.S_pm = svt(S_pm_of_S - st.Y1 / st.rho, cfg.beta2 / st.rho)
        Z_new = svt(st.C + st.Y2 / st.rho, cfg.beta3 / st.rho)
        st.Y1 = st.Y1 + st.rho * (st.S_pm - S_pm_of_S)
        st.Y2 = st.Y2 + st.rho * (st.C - Z_new)
        st.Z = Z_new

        gap = max(float(np.abs(st.S_pm - S_pm_of_S).max()), float(np.abs(st.C - st.Z).max()))
        diagnostics.append({
            "iter": it,
            "gap": gap,
            "rho": st.rho,
            "reproj": float(np.linalg.norm(st.W - project_trajectories(R, S))),
            "nn_Ssharp": nuclear_norm(st.S_pm),
            "nn_Z": nuclear_norm(st.Z),
        })
        rho_candidate = cfg.c * st.rho
        if gap < cfg.eps:
            reason = "gap"
            break
        if rho_candidate > cfg.rho_max:
            reason = "rho"
            break
        st.rho = min(cfg.rho_max, rho_candidate)

    S_est = restore_columns(st.S, st.order.history)
    labels_original = restore_values(st.order.labels, st.order.history)
    return SolveResult(
        S_est=S_est, labels=st.order, labels_original=labels_original,
        diagnostics=diagnostics, iterations=it, converged=reason != "max_iter",
        reason=reason, config=cfg,
    )
