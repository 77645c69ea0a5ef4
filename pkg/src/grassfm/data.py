"""Dataset container, matrix layout conventions, and column bookkeeping.

Layout conventions, fixed once and used by every other module:

* ``W`` is 2F x P, frame-interleaved: rows ``2f`` and ``2f+1`` hold frame
  ``f``'s x and y image coordinates (the classical factorization stacking).
* ``S`` is 3F x P ("frame-major"): rows ``3f .. 3f+2`` hold frame ``f``'s
  x, y, z world coordinates.
* The "point-major" counterpart is 3P x F: column ``f`` is
  ``[x_f(1..P); y_f(1..P); z_f(1..P)]``.  ``to_point_major`` and
  ``to_frame_major`` convert between the two layouts and are exact inverses.

On disk a dataset is a directory with ``W.csv`` (2F x P), ``R.csv``
(2F x 3, per-frame 2x3 rotation blocks stacked), optional ``S_gt.csv``
(3F x P), and ``meta.json`` with at least ``{"frames": F, "points": P}``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROTATION_TOL = 1e-8


class DatasetError(ValueError):
    """A dataset directory or matrix violates the documented layout."""


# ---------------------------------------------------------------------------
# layout conversions


def to_point_major(S: np.ndarray) -> np.ndarray:
    """Reshuffle a frame-major shape matrix (3F x P) into point-major (3P x F)."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] % 3 != 0:
        raise ValueError(f"expected a 3F x P matrix, got shape {S.shape}")
    F, P = S.shape[0] // 3, S.shape[1]
    return S.reshape(F, 3, P).transpose(1, 2, 0).reshape(3 * P, F)


def to_frame_major(S_pm: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_point_major`: (3P x F) back to (3F x P)."""
    S_pm = np.asarray(S_pm, dtype=float)
    if S_pm.ndim != 2 or S_pm.shape[0] % 3 != 0:
        raise ValueError(f"expected a 3P x F matrix, got shape {S_pm.shape}")
    P, F = S_pm.shape[0] // 3, S_pm.shape[1]
    return S_pm.reshape(3, P, F).transpose(2, 0, 1).reshape(3 * F, P)


def permute_point_rows(M_pm: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Apply a point permutation to a point-major matrix (rows of each x/y/z block)."""
    M_pm = np.asarray(M_pm, dtype=float)
    P = M_pm.shape[0] // 3
    if M_pm.shape[0] != 3 * P or len(perm) != P:
        raise ValueError("permutation length does not match point count")
    return M_pm.reshape(3, P, -1)[:, perm, :].reshape(3 * P, -1)


# ---------------------------------------------------------------------------
# column ordering


@dataclass(frozen=True)
class OrderingVector:
    """Per-column group labels plus the column permutations applied so far.

    ``labels[i]`` is the group (1-based) of the matrix column currently at
    position ``i``.  ``history`` records every permutation applied to the
    columns since the dataset was loaded, oldest first; composing them maps
    original column positions to current ones.
    """

    labels: np.ndarray
    history: tuple = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-D integer array")
        if labels.min() < 1:
            raise ValueError("labels are 1-based; found a value < 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "history", tuple(np.asarray(h, dtype=int) for h in self.history))

    @property
    def P(self) -> int:
        return self.labels.size

    @property
    def n_groups(self) -> int:
        return int(self.labels.max())

    def group_indices(self) -> list[np.ndarray]:
        """Column indices of each group, 1..n_groups (empty groups allowed here)."""
        return [np.flatnonzero(self.labels == g) for g in range(1, self.n_groups + 1)]

    def arrange_permutation(self) -> np.ndarray:
        """Stable permutation that sorts columns by group label."""
        return np.argsort(self.labels, kind="stable")

    def composed_permutation(self) -> np.ndarray:
        return compose_history(self.history, self.P)

    def with_labels(self, labels: np.ndarray) -> "OrderingVector":
        """Same history, new labels (used when regrouping without rearranging)."""
        return OrderingVector(labels, self.history)


def compose_history(history, P: int) -> np.ndarray:
    """Compose a sequence of column permutations into a single one.

    ``current[:, i] = original[:, composed[i]]`` after applying the history
    entries in order.
    """
    comp = np.arange(P)
    for h in history:
        h = np.asarray(h, dtype=int)
        if h.size != P:
            raise ValueError("permutation length mismatch in history")
        comp = comp[h]
    return comp


def arrange_columns(order: OrderingVector, M: np.ndarray):
    """Regroup columns of ``M`` so group-1 columns come first, then group-2, ...

    Stable within groups.  Returns the rearranged matrix and a new
    :class:`OrderingVector` whose history records the applied permutation.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[1] != order.P:
        raise ValueError(f"matrix has {M.shape[1] if M.ndim == 2 else '?'} columns, labels have {order.P}")
    perm = order.arrange_permutation()
    new_order = OrderingVector(order.labels[perm], order.history + (perm,))
    return M[:, perm], new_order


def restore_columns(M: np.ndarray, history) -> np.ndarray:
    """Undo the composed column permutation, restoring original column order."""
    M = np.asarray(M)
    comp = compose_history(history, M.shape[1])
    out = np.empty_like(M)
    out[:, comp] = M
    return out


def restore_values(values: np.ndarray, history) -> np.ndarray:
    """Undo the composed permutation on a per-column value vector (e.g. labels)."""
    values = np.asarray(values)
    comp = compose_history(history, values.size)
    out = np.empty_like(values)
    out[comp] = values
    return out


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class Dataset:
    """A measurement matrix with per-frame orthographic rotations.

    Fields
    ------
    W : (2F, P) image coordinates, frame-interleaved rows.
    R : (F, 2, 3) rotation blocks; each block has orthonormal rows.
    S_gt : optional (3F, P) ground-truth shape.
    column_ids : length-P original trajectory identifiers.
    """

    W: np.ndarray
    R: np.ndarray
    S_gt: np.ndarray | None = None
    column_ids: np.ndarray | None = None

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if W.ndim != 2 or W.shape[0] % 2 != 0:
            raise DatasetError(f"W must be 2F x P, got shape {W.shape}")
        F = W.shape[0] // 2
        if R.shape != (F, 2, 3):
            raise DatasetError(f"R must hold {F} blocks of shape 2x3, got {R.shape}")
        if not np.isfinite(W).all():
            raise DatasetError("non-finite entries in W")
        if not np.isfinite(R).all():
            raise DatasetError("non-finite entries in R")
        gram = np.einsum("fij,fkj->fik", R, R)
        err = np.abs(gram - np.eye(2)).max()
        if err > ROTATION_TOL:
            raise DatasetError(f"rotation blocks not orthonormal (max deviation {err:.3e})")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "R", R)
        if self.S_gt is not None:
            S_gt = np.asarray(self.S_gt, dtype=float)
            if S_gt.shape != (3 * F, W.shape[1]):
                raise DatasetError(f"S_gt must be 3F x P = {(3 * F, W.shape[1])}, got {S_gt.shape}")
            if not np.isfinite(S_gt).all():
                raise DatasetError("non-finite entries in S_gt")
            object.__setattr__(self, "S_gt", S_gt)
        ids = self.column_ids
        if ids is None:
            ids = np.arange(W.shape[1])
        ids = np.asarray(ids)
        if ids.shape != (W.shape[1],):
            raise DatasetError("column_ids must have one entry per column of W")
        object.__setattr__(self, "column_ids", ids)

    @property
    def F(self) -> int:
        return self.W.shape[0] // 2

    @property
    def P(self) -> int:
        return self.W.shape[1]


# ---------------------------------------------------------------------------
# disk format


def save_matrix(path, M) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(M, dtype=float)), delimiter=",", fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"could not parse {path.name}: {exc}") from exc


def read_meta(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing metadata: {path.name}")
    with open(path) as fh:
        meta = json.load(fh)
    if "frames" not in meta or "points" not in meta:
        raise DatasetError("meta.json must define 'frames' and 'points'")
    return meta


def load_dataset(path) -> Dataset:
    """Load and validate a dataset directory (W.csv, R.csv, meta.json, optional S_gt.csv)."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"not a dataset directory: {root}")
    if not (root / "W.csv").exists():
        raise DatasetError(f"missing measurements: W.csv in {root}")
    if not (root / "R.csv").exists():
        raise DatasetError(f"missing rotations: R.csv in {root}")
    W = load_matrix(root / "W.csv")
    R_flat = load_matrix(root / "R.csv")
    meta = read_meta(root / "meta.json")
    F, P = int(meta["frames"]), int(meta["points"])
    if W.shape != (2 * F, P):
        raise DatasetError(f"W.csv is {W.shape}, meta.json promises {(2 * F, P)}")
    if R_flat.shape != (2 * F, 3):
        raise DatasetError(f"R.csv is {R_flat.shape}, expected {(2 * F, 3)}")
    S_gt = None
    if (root / "S_gt.csv").exists():
        S_gt = load_matrix(root / "S_gt.csv")
    return Dataset(W=W, R=R_flat.reshape(F, 2, 3), S_gt=S_gt)


def save_dataset(ds: Dataset, path, extra_meta: dict | None = None) -> None:
    """Write a dataset directory in the documented layout."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    save_matrix(root / "W.csv", ds.W)
    save_matrix(root / "R.csv", ds.R.reshape(2 * ds.F, 3))
    if ds.S_gt is not None:
        save_matrix(root / "S_gt.csv", ds.S_gt)
    meta = {"frames": ds.F, "points": ds.P}
    if extra_meta:
        meta.update(extra_meta)
    with open(root / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_shape(path, S: np.ndarray, meta: dict | None = None) -> None:
    """Write an estimated shape matrix (S_est.csv plus a small meta.json)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] % 3 != 0:
        raise DatasetError(f"estimated shape must be 3F x P, got {S.shape}")
    save_matrix(root / "S_est.csv", S)
    out_meta = {"frames": S.shape[0] // 3, "points": S.shape[1]}
    if meta:
        out_meta.update(meta)
    with open(root / "meta.json", "w") as fh:
        json.dump(out_meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
