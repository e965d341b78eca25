"""Evaluation metrics: symmetric Chamfer-L1 on coordinates and matched RGB MSE.

Chamfer-L1 here is the symmetric mean of non-squared Euclidean
nearest-neighbor distances. Exact nearest neighbors come from a k-d tree,
with brute force below 64 points where the tree buys nothing.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .cloud import CloudError, ColoredPointCloud

BRUTE_FORCE_LIMIT = 64


def _as_xyz(cloud) -> np.ndarray:
    if isinstance(cloud, ColoredPointCloud):
        return cloud.xyz.astype(np.float64)
    arr = np.asarray(cloud, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] not in (3, 6):
        raise CloudError(f"expected (N, 3) or (N, 6) array, got {arr.shape}")
    return arr[:, :3]


def nearest_distances(queries: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Euclidean distance from each query to its true nearest reference point."""
    if len(reference) < BRUTE_FORCE_LIMIT:
        diff = queries[:, None, :] - reference[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=2)).min(axis=1)
    tree = cKDTree(reference)
    dists, _ = tree.query(queries, k=1)
    return dists


def nearest_indices(queries: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Index of the true nearest reference point for each query."""
    if len(reference) < BRUTE_FORCE_LIMIT:
        diff = queries[:, None, :] - reference[None, :, :]
        return ((diff ** 2).sum(axis=2)).argmin(axis=1)
    tree = cKDTree(reference)
    _, idx = tree.query(queries, k=1)
    return idx


def chamfer_l1(a, b) -> float:
    """0.5 * [mean_a min_b ||a-b|| + mean_b min_a ||b-a||]; xyz channels only."""
    xa = _as_xyz(a)
    xb = _as_xyz(b)
    if len(xa) == 0 or len(xb) == 0:
        raise CloudError("chamfer on empty cloud")
    return 0.5 * (nearest_distances(xa, xb).mean() + nearest_distances(xb, xa).mean())


def rgb_mse(a: ColoredPointCloud, b: ColoredPointCloud, assignment=None) -> float:
    """Mean squared per-channel RGB difference over matched pairs, in [0, 1] space.

    `assignment` maps row j of a to row perm[j] of b (see pointedit.align);
    None means identity matching. Colors must already be in the external
    [0, 1] range.
    """
    if a.n != b.n:
        raise CloudError(f"rgb_mse size mismatch: {a.n} vs {b.n}")
    if assignment is None:
        perm = np.arange(a.n)
    else:
        perm = np.asarray(assignment.perm, dtype=np.int64)
        if perm.shape != (a.n,):
            raise CloudError("assignment size mismatch")
    diff = a.rgb.astype(np.float64) - b.rgb.astype(np.float64)[perm]
    return float((diff ** 2).mean())
