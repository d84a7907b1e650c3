import numpy as np
import pytest
from hypothesis import given, strategies as st

from radarfuse.geom import (DegenerateGeometryError, Pose2D, apply_pose, augment_pose, fit_rigid_transform,
                            orientation_angle, residual_sum, rot)

angles = st.floats(-179.9, 180.0, allow_nan=False)
coords = st.floats(-10, 10, allow_nan=False)


def random_pose(r):
    return Pose2D.from_angle(r.uniform(-180, 180), r.uniform(-5, 5, 2))


def test_identity_fit():
    pts = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    pose, xi = fit_rigid_transform(pts, pts)
    np.testing.assert_allclose(pose.R, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(pose.t, 0, atol=1e-15)
    assert xi < 1e-15


def test_two_point_quarter_turn():
    pose, xi = fit_rigid_transform([[0, 0], [1, 0]], [[2, 0], [2, 1]])
    np.testing.assert_allclose(pose.R, rot(90), atol=1e-12)
    np.testing.assert_allclose(pose.t, [2, 0], atol=1e-12)
    assert xi < 1e-12


def test_degenerate_inputs():
    with pytest.raises(DegenerateGeometryError):
        fit_rigid_transform([[1, 1]], [[0, 0]])
    with pytest.raises(DegenerateGeometryError):
        fit_rigid_transform([[1, 1], [1, 1], [1, 1]], [[0, 0], [1, 0], [2, 0]])
    with pytest.raises(ValueError):
        fit_rigid_transform([[0, 0], [1, 0]], [[0, 0]])


def test_collinear_source_is_fine():
    src = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], dtype=float)
    gt = Pose2D.from_angle(33, (1, -2))
    pose, xi = fit_rigid_transform(src, apply_pose(gt, src))
    assert xi < 1e-9
    np.testing.assert_allclose(pose.R, gt.R, atol=1e-12)


def test_noiseless_recovery_many_poses():
    r = np.random.default_rng(3)
    for _ in range(1000):
        gt = random_pose(r)
        src = r.uniform(-4, 4, (int(r.integers(2, 30)), 2))
        pose, xi = fit_rigid_transform(src, apply_pose(gt, src))
        assert xi < 1e-9
        assert np.abs(pose.t - gt.t).max() < 1e-9
        assert np.abs(pose.R - gt.R).max() < 1e-9


def test_mirrored_set_still_gives_rotation():
    r = np.random.default_rng(4)
    for _ in range(200):
        src = r.uniform(-3, 3, (8, 2))
        dst = src * np.array([1.0, -1.0])  # reflection: best orthogonal map has det -1
        pose, _ = fit_rigid_transform(src, dst)
        assert np.linalg.det(pose.R) == pytest.approx(1.0, abs=1e-12)


def test_noisy_recovery_beats_grid_search():
    r = np.random.default_rng(5)
    gt = Pose2D.from_angle(25.0, (1.5, -0.7))
    src = r.uniform(-3, 3, (50, 2))
    dst = apply_pose(gt, src) + r.normal(0, 0.01, (50, 2))
    pose, xi = fit_rigid_transform(src, dst)
    assert np.linalg.norm(pose.t - gt.t) < 0.02
    assert abs(orientation_angle(pose.R) - 25.0) < 0.5
    best = np.inf
    for th in np.linspace(24, 26, 22):
        for tx in np.linspace(1.45, 1.55, 22):
            for ty in np.linspace(-0.75, -0.65, 21):
                best = min(best, residual_sum(Pose2D.from_angle(th, (tx, ty)), src, dst))
    assert xi <= best


def test_orientation_examples():
    assert orientation_angle(np.eye(2)) == 0.0
    assert orientation_angle(np.array([[0.0, -1.0], [1.0, 0.0]])) == pytest.approx(90.0)
    R = rot(-37.0)
    assert orientation_angle(R) == pytest.approx(-37.0, abs=1e-12)
    assert np.degrees(np.arccos(np.trace(R) / 2)) == pytest.approx(37.0, abs=1e-9)
    assert orientation_angle(rot(180.0)) == 180.0


def test_apply_pose_examples():
    pts = np.array([[1.0, 2.0], [-3.0, 0.5]])
    np.testing.assert_array_equal(apply_pose(Pose2D.identity(), pts), pts)
    np.testing.assert_allclose(apply_pose(Pose2D.from_angle(180, (1, 1)), [1.0, 0.0]), [0.0, 1.0], atol=1e-15)


def test_inverse_round_trip(rng):
    pose = random_pose(rng)
    pts = rng.uniform(-10, 10, (100, 2))
    back = apply_pose(pose.inverse(), apply_pose(pose, pts))
    assert np.abs(back - pts).max() < 1e-12


def test_pose_rejects_reflection():
    with pytest.raises(ValueError):
        Pose2D(R=np.diag([1.0, -1.0]))


def test_augment_pose_structure(rng):
    Rb, tb = augment_pose(Pose2D.identity())
    np.testing.assert_array_equal(Rb, np.eye(4))
    np.testing.assert_array_equal(tb, np.zeros(4))
    Rb, tb = augment_pose(Pose2D.from_angle(90))
    np.testing.assert_allclose((Rb @ [0, 0, 1, 0] + tb)[2:], [0, 1], atol=1e-15)
    pose = random_pose(rng)
    x = rng.normal(size=4)
    Rb, tb = augment_pose(pose)
    out = Rb @ x + tb
    np.testing.assert_allclose(out[:2], apply_pose(pose, x[:2]), atol=1e-12)
    np.testing.assert_allclose(out[2:], pose.R @ x[2:], atol=1e-12)


@given(angles, coords, coords)
def test_inverse_angle_relation(theta, tx, ty):
    r = np.random.default_rng(0)
    pts = r.uniform(-3, 3, (6, 2))
    moved = apply_pose(Pose2D.from_angle(theta, (tx, ty)), pts)
    pose, _ = fit_rigid_transform(moved, pts)
    d = (orientation_angle(pose.R) + theta + 180) % 360 - 180
    assert abs(d) < 1e-7


@given(angles, coords, coords, st.integers(0, 2**31))
def test_residual_invariant_to_common_motion(theta, tx, ty, seed):
    r = np.random.default_rng(seed)
    src = r.uniform(-3, 3, (10, 2))
    dst = r.uniform(-3, 3, (10, 2))
    _, xi = fit_rigid_transform(src, dst)
    g = Pose2D.from_angle(theta, (tx, ty))
    _, xi2 = fit_rigid_transform(apply_pose(g, src), apply_pose(g, dst))
    assert xi2 == pytest.approx(xi, rel=1e-9, abs=1e-9)


@given(angles, coords, coords, angles, coords, coords)
def test_compose_matches_sequential_application(a1, x1, y1, a2, x2, y2):
    p, q = Pose2D.from_angle(a1, (x1, y1)), Pose2D.from_angle(a2, (x2, y2))
    pts = np.array([[0.3, -1.2], [2.0, 0.5]])
    np.testing.assert_allclose(apply_pose(p.compose(q), pts), apply_pose(p, apply_pose(q, pts)), atol=1e-9)
