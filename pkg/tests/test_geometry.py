import math

import numpy as np
import pytest

from xrflux.geometry import (
    FOV_IMMEDIATE,
    FOV_PREDICTED,
    FovSpec,
    OrientationYPR,
    Vec3,
    fov_contains,
    fov_contains_batch,
    view_axis,
    wrap_angle,
)


def brute_force_contains(user_pos, axis, fov, obj_pos):
    # Independent oracle: explicit dot product and acos.
    rel = np.array([obj_pos.x - user_pos.x, obj_pos.y - user_pos.y, obj_pos.z - user_pos.z])
    dist = float(np.linalg.norm(rel))
    if dist == 0.0:
        return True, 0.0
    cosang = float(np.dot(np.array([axis.x, axis.y, axis.z]), rel) / dist)
    angle = math.acos(max(-1.0, min(1.0, cosang)))
    return dist <= fov.depth and angle <= fov.full_angle / 2.0, dist


class TestViewAxis:
    def test_identity_orientation(self):
        a = view_axis(OrientationYPR(0.0, 0.0, 0.0))
        assert (a.x, a.y, a.z) == (0.0, 0.0, 1.0)

    def test_quarter_turn(self):
        a = view_axis(OrientationYPR(math.pi / 2, 0.0, 0.0))
        assert a.x == pytest.approx(1.0, abs=1e-12)
        assert a.y == 0.0
        assert a.z == pytest.approx(0.0, abs=1e-12)

    def test_straight_up(self):
        a = view_axis(OrientationYPR(0.0, math.pi / 2, 0.0))
        assert a.y == pytest.approx(1.0, abs=1e-12)
        assert abs(a.x) < 1e-12 and abs(a.z) < 1e-12

    def test_unit_norm_everywhere(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            o = OrientationYPR(
                rng.uniform(-math.pi, math.pi),
                rng.uniform(-math.pi / 2, math.pi / 2),
                rng.uniform(-math.pi, math.pi),
            )
            assert view_axis(o).norm() == pytest.approx(1.0, abs=1e-12)

    def test_roll_does_not_affect_axis(self):
        base = view_axis(OrientationYPR(0.4, -0.3, 0.0))
        rolled = view_axis(OrientationYPR(0.4, -0.3, 2.1))
        assert (base.x, base.y, base.z) == (rolled.x, rolled.y, rolled.z)


class TestOrientationNormalization:
    def test_yaw_wraps(self):
        o = OrientationYPR(math.pi, 0.0, 0.0)
        assert o.yaw == pytest.approx(-math.pi)
        o = OrientationYPR(3 * math.pi + 0.1, 0.0, 0.0)
        assert -math.pi <= o.yaw < math.pi

    def test_pitch_clamps(self):
        o = OrientationYPR(0.0, 2.0, 0.0)
        assert o.pitch == math.pi / 2
        o = OrientationYPR(0.0, -2.0, 0.0)
        assert o.pitch == -math.pi / 2

    def test_wrap_angle_range(self):
        rng = np.random.default_rng(3)
        for a in rng.uniform(-50, 50, 2000):
            w = wrap_angle(float(a))
            assert -math.pi <= w < math.pi
            # Same angle modulo 2*pi.
            assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
            assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


IMMEDIATE_110_10 = FovSpec(FOV_IMMEDIATE, math.radians(110.0), 10.0)


class TestFovContains:
    def test_on_axis_within_depth(self):
        visible, dist = fov_contains(
            Vec3(0, 0, 0), Vec3(0, 0, 1), IMMEDIATE_110_10, Vec3(0, 0, 5)
        )
        assert visible and dist == 5.0

    def test_behind_user(self):
        visible, dist = fov_contains(
            Vec3(0, 0, 0), Vec3(0, 0, 1), IMMEDIATE_110_10, Vec3(0, 0, -5)
        )
        assert not visible and dist == 5.0

    def test_beyond_depth(self):
        visible, dist = fov_contains(
            Vec3(0, 0, 0), Vec3(0, 0, 1), IMMEDIATE_110_10, Vec3(0, 0, 10.0 + 1e-9)
        )
        assert not visible

    def test_at_depth_boundary_closed(self):
        visible, dist = fov_contains(
            Vec3(0, 0, 0), Vec3(0, 0, 1), IMMEDIATE_110_10, Vec3(0, 0, 10.0)
        )
        assert visible and dist == 10.0

    def test_coincident_point_visible(self):
        visible, dist = fov_contains(
            Vec3(1, 2, 3), Vec3(0, 0, 1), IMMEDIATE_110_10, Vec3(1, 2, 3)
        )
        assert visible and dist == 0.0

    def test_angular_boundary_flips(self):
        # Points just inside/outside the half-angle cone boundary.
        half = math.radians(55.0)
        for eps, expected in ((-1e-6, True), (1e-6, False)):
            theta = half + eps
            obj = Vec3(4.0 * math.sin(theta), 0.0, 4.0 * math.cos(theta))
            visible, _ = fov_contains(Vec3(0, 0, 0), Vec3(0, 0, 1), IMMEDIATE_110_10, obj)
            assert visible is expected

    def test_monotone_in_depth(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            user = Vec3(*rng.uniform(-5, 5, 3))
            axis = view_axis(
                OrientationYPR(rng.uniform(-math.pi, math.pi), rng.uniform(-1.5, 1.5), 0.0)
            )
            obj = Vec3(*rng.uniform(-10, 10, 3))
            angle = float(rng.uniform(0.2, 3.0))
            shallow = FovSpec(FOV_IMMEDIATE, angle, float(rng.uniform(0.5, 8.0)))
            deep = FovSpec(FOV_IMMEDIATE, angle, shallow.depth + float(rng.uniform(0.0, 8.0)))
            vis_shallow, _ = fov_contains(user, axis, shallow, obj)
            vis_deep, _ = fov_contains(user, axis, deep, obj)
            if vis_shallow:
                assert vis_deep

    def test_predicted_superset_same_axis(self):
        rng = np.random.default_rng(13)
        for _ in range(2000):
            user = Vec3(*rng.uniform(-5, 5, 3))
            axis = view_axis(
                OrientationYPR(rng.uniform(-math.pi, math.pi), rng.uniform(-1.5, 1.5), 0.0)
            )
            obj = Vec3(*rng.uniform(-12, 12, 3))
            a_imm = float(rng.uniform(0.2, 2.5))
            d_imm = float(rng.uniform(0.5, 8.0))
            imm = FovSpec(FOV_IMMEDIATE, a_imm, d_imm)
            pred = FovSpec(
                FOV_PREDICTED,
                a_imm + float(rng.uniform(0.0, 2.0)),
                d_imm + float(rng.uniform(0.0, 6.0)),
            )
            vis_imm, _ = fov_contains(user, axis, imm, obj)
            vis_pred, _ = fov_contains(user, axis, pred, obj)
            if vis_imm:
                assert vis_pred

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(10_000):
            user = Vec3(*rng.uniform(-5, 5, 3))
            axis = view_axis(
                OrientationYPR(
                    rng.uniform(-math.pi, math.pi), rng.uniform(-1.5, 1.5), rng.uniform(-3, 3)
                )
            )
            fov = FovSpec(
                FOV_IMMEDIATE, float(rng.uniform(0.1, 6.0)), float(rng.uniform(0.5, 15.0))
            )
            obj = Vec3(*rng.uniform(-15, 15, 3))
            got_vis, got_dist = fov_contains(user, axis, fov, obj)
            exp_vis, exp_dist = brute_force_contains(user, axis, fov, obj)
            assert got_vis == exp_vis
            assert got_dist == pytest.approx(exp_dist, rel=1e-12)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(19)
        user = Vec3(0.5, -1.0, 2.0)
        axis = view_axis(OrientationYPR(0.7, 0.2, 0.0))
        fov = FovSpec(FOV_IMMEDIATE, math.radians(110.0), 6.0)
        pts = rng.uniform(-10, 10, (512, 3))
        visible, dist = fov_contains_batch(user.as_array(), axis.as_array(), fov, pts)
        for i in range(len(pts)):
            v, d = fov_contains(user, axis, fov, Vec3(*pts[i]))
            assert bool(visible[i]) == v
            assert d == pytest.approx(float(dist[i]), rel=1e-12)


class TestFovSpecValidation:
    def test_rejects_bad_angle(self):
        with pytest.raises(ValueError, match="full_angle"):
            FovSpec(FOV_IMMEDIATE, 0.0, 5.0)
        with pytest.raises(ValueError, match="full_angle"):
            FovSpec(FOV_IMMEDIATE, 2 * math.pi, 5.0)

    def test_rejects_bad_depth(self):
        with pytest.raises(ValueError, match="depth"):
            FovSpec(FOV_IMMEDIATE, 1.0, 0.0)

    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError, match="kind"):
            FovSpec("wide", 1.0, 5.0)
