import itertools

import numpy as np
import pytest

from pointedit.align import (
    AlignmentError,
    Assignment,
    RigidTransform,
    align_pair,
    apply_transform,
    icp_register,
    solve_assignment,
)
from pointedit.cloud import ColoredPointCloud


def cloud_of(xyz, rgb=None):
    xyz = np.asarray(xyz, dtype=float)
    if rgb is None:
        rgb = np.zeros((len(xyz), 3))
    return ColoredPointCloud.from_parts(xyz, rgb)


def random_cloud(n, seed):
    rng = np.random.default_rng(seed)
    return cloud_of(rng.normal(size=(n, 3)), rng.random((n, 3)))


def rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def brute_force_min_cost(src, tgt):
    n = len(src)
    cost = ((src[:, None, :] - tgt[None, :, :]) ** 2).sum(axis=2)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, cost[np.arange(n), list(perm)].sum())
    return best


class TestRigidTransform:
    def test_identity(self):
        c = random_cloud(10, 0)
        out = apply_transform(c, RigidTransform.identity())
        assert np.allclose(out.points, c.points)

    def test_pure_translation(self):
        c = cloud_of([[0, 0, 0]])
        t = RigidTransform(np.eye(3), np.array([1.0, 2.0, 3.0]))
        assert np.allclose(apply_transform(c, t).xyz, [[1, 2, 3]])

    def test_compose_with_inverse_is_identity(self):
        t = RigidTransform(rot_z(0.7), np.array([0.3, -0.2, 0.9]))
        round_trip = t.compose(t.inverse())
        assert np.allclose(round_trip.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(round_trip.translation, 0, atol=1e-9)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(AlignmentError):
            RigidTransform(np.eye(3) * 2, np.zeros(3))

    def test_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(AlignmentError):
            RigidTransform(r, np.zeros(3))

    def test_colors_unchanged(self):
        c = random_cloud(5, 1)
        t = RigidTransform(rot_z(1.0), np.ones(3))
        assert np.allclose(apply_transform(c, t).rgb, c.rgb)


class TestICP:
    def test_identity_fixed_point(self):
        c = random_cloud(50, 2)
        t = icp_register(c, c)
        assert np.allclose(t.rotation, np.eye(3), atol=1e-6)
        assert np.allclose(t.translation, 0, atol=1e-6)

    def test_recovers_known_transform(self):
        src = random_cloud(120, 3)
        true = RigidTransform(rot_z(np.pi / 6), np.array([0.1, 0.0, 0.0]))
        tgt = apply_transform(src, true)
        recovered = icp_register(src, tgt)
        back = apply_transform(tgt, recovered)
        err = np.abs(back.xyz - src.xyz).max()
        assert err < 1e-4

    def test_rmse_non_increasing(self):
        a = random_cloud(80, 4)
        b = random_cloud(80, 5)
        _, info = icp_register(a, b, return_info=True)
        log = info["rmse"]
        assert len(log) >= 1
        assert all(log[i + 1] <= log[i] + 1e-12 for i in range(len(log) - 1))

    def test_transform_invariants_after_registration(self):
        a = random_cloud(60, 6)
        b = random_cloud(60, 7)
        t = icp_register(a, b)
        assert np.allclose(t.rotation.T @ t.rotation, np.eye(3), atol=1e-9)
        assert np.isclose(np.linalg.det(t.rotation), 1.0, atol=1e-9)

    def test_too_few_points(self):
        with pytest.raises(AlignmentError):
            icp_register(cloud_of([[0, 0, 0], [1, 0, 0]]), random_cloud(5, 8))

    def test_collinear_degenerate(self):
        line = cloud_of([[i, 0, 0] for i in range(5)])
        off = cloud_of([[i + 0.3, 0.0, 0.0] for i in range(5)])
        with pytest.raises(AlignmentError, match="degenerate"):
            icp_register(line, off)


class TestAssignment:
    def test_permuted_copy_recovers_shuffle(self):
        rng = np.random.default_rng(9)
        src = random_cloud(20, 10)
        shuffle = rng.permutation(20)
        tgt = ColoredPointCloud(src.points[shuffle])
        asg = solve_assignment(src, tgt)
        assert asg.cost == pytest.approx(0.0, abs=1e-12)
        assert np.array_equal(src.points[:, :3], tgt.points[asg.perm][:, :3])

    def test_three_points_brute_force(self):
        rng = np.random.default_rng(11)
        a = cloud_of(rng.normal(size=(3, 3)))
        b = cloud_of(rng.normal(size=(3, 3)))
        asg = solve_assignment(a, b)
        oracle = brute_force_min_cost(a.xyz.astype(float), b.xyz.astype(float))
        assert asg.cost == pytest.approx(oracle, abs=1e-9)

    def test_eight_points_brute_force(self):
        rng = np.random.default_rng(12)
        a = cloud_of(rng.normal(size=(8, 3)))
        b = cloud_of(rng.normal(size=(8, 3)))
        asg = solve_assignment(a, b)
        oracle = brute_force_min_cost(a.xyz.astype(float), b.xyz.astype(float))
        assert asg.cost == pytest.approx(oracle, abs=1e-9)

    def test_matches_scipy_on_larger_instances(self):
        from scipy.optimize import linear_sum_assignment

        rng = np.random.default_rng(13)
        for n in (16, 64, 200):
            a = cloud_of(rng.normal(size=(n, 3)))
            b = cloud_of(rng.normal(size=(n, 3)))
            asg = solve_assignment(a, b)
            src = a.xyz.astype(float)
            tgt = b.xyz.astype(float)
            cost = ((src[:, None, :] - tgt[None, :, :]) ** 2).sum(axis=2)
            rows, cols = linear_sum_assignment(cost)
            assert asg.cost == pytest.approx(cost[rows, cols].sum(), abs=1e-6)

    def test_not_worse_than_identity_or_random(self):
        rng = np.random.default_rng(14)
        src = random_cloud(30, 15)
        tgt = random_cloud(30, 16)
        asg = solve_assignment(src, tgt)
        cost = ((src.xyz.astype(float)[:, None, :] - tgt.xyz.astype(float)[None, :, :]) ** 2).sum(axis=2)
        assert asg.cost <= cost[np.arange(30), np.arange(30)].sum() + 1e-9
        for _ in range(100):
            perm = rng.permutation(30)
            assert asg.cost <= cost[np.arange(30), perm].sum() + 1e-9

    def test_cost_consistent_with_perm(self):
        src = random_cloud(12, 17)
        tgt = random_cloud(12, 18)
        asg = solve_assignment(src, tgt)
        recomputed = np.sum((src.xyz.astype(float) - tgt.xyz.astype(float)[asg.perm]) ** 2)
        assert asg.cost == pytest.approx(recomputed, abs=1e-9)

    def test_size_mismatch_and_limit(self):
        with pytest.raises(AlignmentError):
            solve_assignment(random_cloud(3, 0), random_cloud(4, 1))
        big = ColoredPointCloud(np.random.default_rng(0).random((4097, 6)))
        with pytest.raises(AlignmentError, match="size limit"):
            solve_assignment(big, big)

    def test_identity_assignment_helper(self):
        asg = Assignment.identity(5)
        assert np.array_equal(asg.perm, np.arange(5))


class TestAlignPair:
    def test_shuffled_source_realigns_exactly(self):
        rng = np.random.default_rng(20)
        src = random_cloud(40, 21)
        tgt = ColoredPointCloud(src.points[rng.permutation(40)])
        aligned = align_pair(src, tgt)
        assert np.array_equal(aligned.points, src.points)

    def test_alignment_reduces_displacement(self):
        rng = np.random.default_rng(22)
        src = random_cloud(64, 23)
        jitter = rng.normal(scale=0.05, size=(64, 3))
        tgt = ColoredPointCloud(src.points[rng.permutation(64)])
        tgt = ColoredPointCloud.from_parts(tgt.xyz + jitter, tgt.rgb)
        aligned = align_pair(src, tgt)
        disp_aligned = np.linalg.norm(src.xyz - aligned.xyz, axis=1).mean()
        disp_identity = np.linalg.norm(src.xyz - tgt.xyz, axis=1).mean()
        assert disp_aligned < disp_identity

    def test_identity_on_already_ordered_pair(self):
        src = random_cloud(30, 24)
        aligned = align_pair(src, src)
        assert np.array_equal(aligned.points, src.points)

    def test_colors_travel_with_points(self):
        rng = np.random.default_rng(25)
        src = random_cloud(25, 26)
        shuffle = rng.permutation(25)
        tgt = ColoredPointCloud(src.points[shuffle])
        aligned = align_pair(src, tgt)
        assert np.array_equal(aligned.rgb, src.rgb)

    def test_idempotent(self):
        rng = np.random.default_rng(27)
        src = random_cloud(32, 28)
        tgt = ColoredPointCloud.from_parts(src.xyz + rng.normal(scale=0.02, size=(32, 3)),
                                           src.rgb)
        once = align_pair(src, ColoredPointCloud(tgt.points[rng.permutation(32)]))
        twice = align_pair(src, once)
        assert np.array_equal(once.points, twice.points)
