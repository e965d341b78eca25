"""Rigid registration (ICP) and exact minimal-displacement matching.

Geometry-edit training pairs are sampled from two different meshes, so their
rows do not correspond. `align_pair` registers the target onto the source
with point-to-point ICP, solves the exact linear sum assignment under
squared Euclidean cost, and permutes the target rows so row j matches source
row j. The ICP transform is used only for matching; the returned coordinates
are the original target coordinates, so the displacement the model must
learn is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cloud import CloudError, ColoredPointCloud

ASSIGNMENT_SIZE_LIMIT = 4096


class AlignmentError(ValueError):
    """Degenerate geometry or invalid matching input."""


@dataclass(frozen=True)
class RigidTransform:
    """SE(3): x -> R x + t, with R orthonormal and det(R) = +1."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise AlignmentError("rotation is not orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=1e-9):
            raise AlignmentError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        return np.asarray(xyz, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: x -> self(other(x))."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass(frozen=True)
class Assignment:
    """A bijection row j (source) -> perm[j] (target) with its squared-distance cost."""

    perm: np.ndarray
    cost: float

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(len(perm))):
            raise AlignmentError("perm is not a permutation")
        object.__setattr__(self, "perm", perm)

    @staticmethod
    def identity(n: int) -> "Assignment":
        return Assignment(perm=np.arange(n), cost=0.0)


def apply_transform(cloud: ColoredPointCloud, t: RigidTransform) -> ColoredPointCloud:
    """Rigidly move coordinates; colors unchanged."""
    return ColoredPointCloud.from_parts(t.apply(cloud.xyz), cloud.rgb)


def _kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Closed-form least-squares rigid fit mapping src points onto dst points."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, s, vt = np.linalg.svd(h)
    # rank < 2 leaves the rotation underdetermined
    if np.sum(s > 1e-12 * max(s[0], 1e-300)) < 2:
        raise AlignmentError("degenerate configuration")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    diag = np.diag([1.0, 1.0, d])
    r = vt.T @ diag @ u.T
    # re-orthonormalize to keep the transform invariants exact
    uu, _, vv = np.linalg.svd(r)
    r = uu @ vv
    if np.linalg.det(r) < 0:
        uu[:, -1] *= -1
        r = uu @ vv
    t = cd - r @ cs
    return RigidTransform(r, t)


def _icp_initial_candidates(src: np.ndarray, tgt: np.ndarray) -> list[RigidTransform]:
    """Coarse starts: centroid shift plus PCA axis alignments (4 sign combos).

    Point-to-point ICP only converges locally; aligning principal axes first
    covers large rotations while the plain centroid start preserves the
    behavior for nearly aligned pairs.
    """
    cs = src.mean(axis=0)
    ct = tgt.mean(axis=0)
    candidates = [RigidTransform(np.eye(3), cs - ct)]
    try:
        _, vec_s = np.linalg.eigh(np.cov(src.T))
        _, vec_t = np.linalg.eigh(np.cov(tgt.T))
    except np.linalg.LinAlgError:
        return candidates
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            for sz in (1.0, -1.0):
                flip = np.diag([sx, sy, sz])
                r = vec_s @ flip @ vec_t.T
                if np.linalg.det(r) < 0:
                    continue
                candidates.append(RigidTransform(r, cs - r @ ct))
    return candidates


def _icp_from(start: RigidTransform, src: np.ndarray, tgt: np.ndarray,
              tree: cKDTree, max_iters: int, tol: float):
    transform = start
    rmse_log: list[float] = []
    prev_rmse = np.inf
    for _ in range(max_iters):
        moved = transform.apply(tgt)
        dists, idx = tree.query(moved, k=1)
        rmse = float(np.sqrt(np.mean(dists ** 2)))
        rmse_log.append(rmse)
        if prev_rmse - rmse < tol:
            break
        prev_rmse = rmse
        # refit from the original target so errors never accumulate
        transform = _kabsch(tgt, src[idx])
    return transform, rmse_log


def icp_register(source: ColoredPointCloud, target: ColoredPointCloud,
                 max_iters: int = 50, tol: float = 1e-6,
                 return_info: bool = False):
    """Point-to-point ICP returning the transform mapping target onto the source frame.

    Alternates nearest-neighbor correspondence against the source with a
    closed-form SVD rigid fit until the RMSE improvement drops below tol,
    run from several coarse starts; the start with the lowest final RMSE
    wins (first candidate on ties, so results are deterministic).
    Registration uses xyz only.
    """
    src = source.xyz.astype(np.float64)
    tgt = target.xyz.astype(np.float64)
    if len(src) < 3 or len(tgt) < 3:
        raise AlignmentError("ICP needs at least 3 points per cloud")
    tree = cKDTree(src)
    best: tuple[RigidTransform, list[float]] | None = None
    degenerate: AlignmentError | None = None
    for start in _icp_initial_candidates(src, tgt):
        try:
            transform, rmse_log = _icp_from(start, src, tgt, tree, max_iters, tol)
        except AlignmentError as exc:
            degenerate = exc
            continue
        if best is None or rmse_log[-1] < best[1][-1]:
            best = (transform, rmse_log)
    if best is None:
        raise degenerate or AlignmentError("degenerate configuration")
    if return_info:
        return best[0], {"rmse": best[1], "iterations": len(best[1])}
    return best[0]


def _lsa_shortest_augmenting_path(cost: np.ndarray) -> np.ndarray:
    """Exact square linear sum assignment via shortest augmenting paths.

    Jonker-Volgenant style with dual potentials, O(N^3) worst case. Ties
    break toward the lowest column index. Returns row_to_col.
    """
    n = cost.shape[0]
    cost = np.asarray(cost, dtype=np.float64)
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    col_row = np.full(n + 1, -1, dtype=np.int64)  # col_row[j] = row assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)         # predecessor column on the alternating path
    virtual = n
    for row in range(n):
        col_row[virtual] = row
        j0 = virtual
        minv = np.full(n, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            free = ~used[:n]
            reduced = cost[i0, free] - u[i0] - v[:n][free]
            free_idx = np.nonzero(free)[0]
            better = reduced < minv[free_idx]
            upd = free_idx[better]
            minv[upd] = reduced[better]
            way[upd] = j0
            masked = np.where(free, minv, inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            used_idx = np.nonzero(used)[0]
            u[col_row[used_idx]] += delta
            v[used_idx] -= delta
            minv[free] -= delta
            j0 = j1
            if col_row[j0] == -1:
                break
        while j0 != virtual:  # augment along the path
            j1 = int(way[j0])
            col_row[j0] = col_row[j1]
            j0 = j1
    row_col = np.empty(n, dtype=np.int64)
    row_col[col_row[:n]] = np.arange(n)
    return row_col


def solve_assignment(source: ColoredPointCloud, target: ColoredPointCloud) -> Assignment:
    """Exact minimum of sum ||source_j - target_perm(j)||^2 over bijections."""
    if source.n != target.n:
        raise AlignmentError(f"assignment size mismatch: {source.n} vs {target.n}")
    if source.n > ASSIGNMENT_SIZE_LIMIT:
        raise AlignmentError(f"exact solver size limit ({ASSIGNMENT_SIZE_LIMIT}) exceeded")
    src = source.xyz.astype(np.float64)
    tgt = target.xyz.astype(np.float64)
    # squared Euclidean cost in double precision
    cost = ((src[:, None, :] - tgt[None, :, :]) ** 2).sum(axis=2)
    perm = _lsa_shortest_augmenting_path(cost)
    total = float(cost[np.arange(source.n), perm].sum())
    return Assignment(perm=perm, cost=total)


def align_pair(source: ColoredPointCloud, target: ColoredPointCloud) -> ColoredPointCloud:
    """Reorder target rows so row j matches source row j under minimal displacement.

    ICP rigidly registers the target to the source purely to compute the
    matching; the output keeps the original target coordinates (colors travel
    with their points). Because the returned coordinates are untransformed,
    the displacement that matters lives in the original frame: the ICP-frame
    matching is kept only when it beats the direct matching there, which
    guards against ICP settling on a symmetry-flipped pose of a
    near-symmetric shape.
    """
    if source.n != target.n:
        raise AlignmentError(f"align_pair size mismatch: {source.n} vs {target.n}")
    src = source.xyz.astype(np.float64)
    tgt = target.xyz.astype(np.float64)

    def original_cost(perm):
        return float(((src - tgt[perm]) ** 2).sum())

    direct = solve_assignment(source, target)
    best_perm, best_cost = direct.perm, original_cost(direct.perm)
    transform = icp_register(source, target)
    if not np.allclose(transform.rotation, np.eye(3), atol=1e-9) \
            or not np.allclose(transform.translation, 0.0, atol=1e-9):
        registered = apply_transform(target, transform)
        via_icp = solve_assignment(source, registered)
        if original_cost(via_icp.perm) < best_cost:
            best_perm = via_icp.perm
    return ColoredPointCloud(target.points[best_perm])


def displacement_stats(source: ColoredPointCloud, target: ColoredPointCloud) -> dict:
    """Row-wise displacement summary between two equally sized clouds."""
    if source.n != target.n:
        raise AlignmentError("size mismatch")
    d = np.linalg.norm(source.xyz.astype(np.float64) - target.xyz.astype(np.float64), axis=1)
    return {"mean": float(d.mean()), "max": float(d.max()), "sum_sq": float((d ** 2).sum())}
