from __future__ import annotations

import numpy as np
import pytest

from flatwing.errors import SingularVelocity, SingularVertical, ZeroNormalLoad
from flatwing.flat import (
    G0,
    FlatPoint,
    LoadControls,
    UavState,
    controls_batch,
    inverse_map,
    inverse_map_batch,
    map_controls,
    map_state,
    physical_controls,
    speed_frame,
    states_batch,
)


def _fp(v, a=(0.0, 0.0, 0.0), p=(0.0, 0.0, 0.0)):
    return FlatPoint(p=np.array(p, float), v=np.array(v, float), a=np.array(a, float))


def _rotation_oracle(chi, gamma):
    """Speed-frame axes built from elementary rotations (independent of the module)."""
    rz = np.array([[np.cos(chi), -np.sin(chi), 0], [np.sin(chi), np.cos(chi), 0], [0, 0, 1]])
    # pitch up by gamma in NED: rotation about the body y axis by +gamma
    ry = np.array([[np.cos(gamma), 0, np.sin(gamma)], [0, 1, 0], [-np.sin(gamma), 0, np.cos(gamma)]])
    R = rz @ ry
    r1 = R[:, 0]  # velocity direction
    r2 = np.array([-np.sin(chi), np.cos(chi), 0.0])  # horizontal, to the right
    r3 = np.cross(r1, r2)
    return r1, r2, r3


class TestMapState:
    def test_level_north(self):
        s = map_state(_fp((30, 0, 0)))
        assert s.V == pytest.approx(30)
        assert s.chi == pytest.approx(0)
        assert s.gamma == pytest.approx(0)

    def test_due_east(self):
        s = map_state(_fp((0, 30, 0)))
        assert s.chi == pytest.approx(np.pi / 2)
        assert s.gamma == pytest.approx(0)

    def test_climb(self):
        g = np.radians(10)
        s = map_state(_fp((30 * np.cos(g), 0, -30 * np.sin(g))))
        assert s.V == pytest.approx(30)
        assert s.gamma == pytest.approx(g)

    def test_position_copied(self):
        s = map_state(_fp((30, 0, 0), p=(1, 2, -3)))
        np.testing.assert_array_equal(s.position, [1, 2, -3])

    def test_heading_four_quadrant(self):
        s = map_state(_fp((-10, -10, 0)))
        assert s.chi == pytest.approx(-3 * np.pi / 4)

    def test_singular_velocity(self):
        with pytest.raises(SingularVelocity):
            map_state(_fp((0, 0, 0)))


class TestMapControls:
    def test_level_unaccelerated(self):
        u = map_controls(_fp((30, 0, 0)))
        np.testing.assert_allclose(u.as_array(), [0, 0, 1], atol=1e-15)

    def test_lateral_acceleration(self):
        u = map_controls(_fp((30, 0, 0), (0, 0.2 * G0, 0)))
        np.testing.assert_allclose(u.as_array(), [0, 0.2, 1], atol=1e-14)

    def test_steady_climb_gravity_split(self):
        g = np.radians(12)
        u = map_controls(_fp((25 * np.cos(g), 0, -25 * np.sin(g))))
        np.testing.assert_allclose(u.as_array(), [np.sin(g), 0, np.cos(g)], atol=1e-14)

    def test_unit_gravity_decomposition(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            v = rng.normal(size=3) * 20
            u = map_controls(_fp(v))
            assert np.sum(u.as_array() ** 2) == pytest.approx(1.0, abs=1e-13)

    def test_against_rotation_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            chi, gam = rng.uniform(-np.pi, np.pi), rng.uniform(-1.2, 1.2)
            V = rng.uniform(5, 50)
            r1, r2, r3 = _rotation_oracle(chi, gam)
            a = rng.normal(size=3) * 5
            ng = a / G0 - np.array([0, 0, 1.0])
            u = map_controls(_fp(V * r1, a))
            np.testing.assert_allclose(u.as_array(), [ng @ r1, ng @ r2, -(ng @ r3)], atol=1e-12)

    def test_vertical_singularity(self):
        with pytest.raises(SingularVertical):
            map_controls(_fp((0, 0, -10)))

    def test_guard_triggers_only_below_eps(self):
        map_controls(_fp((2e-6, 0, 0)))
        with pytest.raises(SingularVelocity):
            map_controls(_fp((5e-7, 0, 0)))
        with pytest.raises(SingularVertical):
            map_controls(_fp((5e-7, 0, 10)))


class TestFrame:
    def test_orthonormal(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            f = speed_frame(rng.normal(size=3) * 30, rng.normal(size=3))
            R = np.stack([f.r1, f.r2, f.r3])
            np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)

    def test_cross_products_perpendicular_to_v(self):
        v = np.array([12.0, -5.0, 3.0])
        f = speed_frame(v, np.zeros(3))
        assert f.w2 @ v == pytest.approx(0, abs=1e-12)
        assert f.w3 @ v == pytest.approx(0, abs=1e-10)


class TestPhysicalControls:
    def test_level(self):
        FT, L, bank = physical_controls(LoadControls(0, 0, 1), mass=10)
        assert FT == 0
        assert L == pytest.approx(10 * G0)
        assert bank == 0

    def test_bank(self):
        _, _, bank = physical_controls(LoadControls(0, 0.2, 1), mass=1)
        assert np.degrees(bank) == pytest.approx(11.3099, abs=1e-4)

    def test_thrust_with_drag(self):
        FT, _, _ = physical_controls(LoadControls(0.1, 0, 1), mass=10, g=9.81, drag=5.0)
        assert FT == pytest.approx(14.81)

    def test_drag_callable(self):
        FT, _, _ = physical_controls(LoadControls(0, 0, 1), mass=1, drag=lambda s, u: 2.5)
        assert FT == pytest.approx(2.5)

    def test_zero_normal_load(self):
        with pytest.raises(ZeroNormalLoad):
            physical_controls(LoadControls(0, 0.2, 0), mass=1)


class TestInverseMap:
    def test_level(self):
        fp = inverse_map(UavState(0, 0, 0, 30, 0, 0), LoadControls(0, 0, 1))
        np.testing.assert_allclose(fp.v, [30, 0, 0], atol=1e-14)
        np.testing.assert_allclose(fp.a, [0, 0, 0], atol=1e-14)

    def test_heading(self):
        fp = inverse_map(UavState(0, 0, 0, 30, np.pi / 2, 0), LoadControls(0, 0, 1))
        np.testing.assert_allclose(fp.v, [0, 30, 0], atol=1e-13)

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            x = UavState(*rng.normal(size=3) * 100, rng.uniform(30, 40), rng.uniform(-np.pi, np.pi), rng.uniform(-0.5, 0.5))
            u = LoadControls(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.8, 1.2))
            fp = inverse_map(x, u)
            np.testing.assert_allclose(map_state(fp).as_array(), x.as_array(), rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(map_controls(fp).as_array(), u.as_array(), rtol=1e-12, atol=1e-12)

    def test_rejects_vertical(self):
        with pytest.raises(SingularVertical):
            inverse_map(UavState(0, 0, 0, 30, 0, np.pi / 2), LoadControls(0, 0, 1))


class TestBatch:
    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        states = np.column_stack([rng.normal(size=(20, 3)), rng.uniform(30, 40, 20), rng.uniform(-3, 3, 20), rng.uniform(-0.5, 0.5, 20)])
        controls = rng.uniform(-0.2, 0.2, (20, 3)) + [0, 0, 1]
        p, v, a = inverse_map_batch(states, controls)
        for k in range(20):
            fp = inverse_map(UavState(*states[k]), LoadControls(*controls[k]))
            np.testing.assert_allclose(v[k], fp.v, atol=1e-12)
            np.testing.assert_allclose(a[k], fp.a, atol=1e-12)
        V, chi, gam = states_batch(v)
        np.testing.assert_allclose(np.column_stack([V, chi, gam]), states[:, 3:], atol=1e-12)
        np.testing.assert_allclose(controls_batch(v, a), controls, atol=1e-12)
