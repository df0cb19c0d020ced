import math

import pytest
from hypothesis import given, strategies as st

from skyground.air import (
    AirCommand,
    AirState,
    air_step,
    separation_violations,
    waypoint_controller,
)
from skyground.geometry import Pose


def mk(x=0.0, y=0.0, z=50.0, v=(0.0, 0.0, 0.0), v_max=10.0, a_max=2.0):
    return AirState(Pose(x, y, z, 0.0), v, v_max=v_max, a_max=a_max)


class TestAirStep:
    def test_hover_fixed_point(self):
        s = mk()
        assert air_step(s, AirCommand((0.0, 0.0, 0.0)), 0.1) == s

    def test_command_clipped_to_v_max(self):
        s = mk(v=(10.0, 0.0, 0.0), a_max=1e9)
        s2 = air_step(s, AirCommand((20.0, 0.0, 0.0)), 0.1)
        assert math.hypot(*s2.velocity[:2]) == pytest.approx(10.0)

    def test_single_hand_integrated_step(self):
        s = mk(v=(0.0, 0.0, 0.0), a_max=2.0)
        s2 = air_step(s, AirCommand((10.0, 0.0, 0.0)), 0.1)
        assert s2.velocity == pytest.approx((0.2, 0.0, 0.0))
        assert s2.pose.x == pytest.approx(0.02)

    def test_heading_follows_velocity(self):
        s = mk(v=(0.0, 5.0, 0.0))
        s2 = air_step(s, AirCommand((0.0, 5.0, 0.0)), 0.1)
        assert s2.pose.heading == pytest.approx(math.pi / 2)

    def test_heading_kept_when_slow(self):
        s = AirState(Pose(0, 0, 50, 1.0), (0.0, 0.0, 0.0))
        s2 = air_step(s, AirCommand((0.0, 0.0, 0.0)), 0.1)
        assert s2.pose.heading == pytest.approx(1.0)

    def test_z_clamped(self):
        s = AirState(Pose(0, 0, 0.1, 0), (0.0, 0.0, -5.0), z_max=120.0)
        s2 = air_step(s, AirCommand((0.0, 0.0, -5.0)), 0.1)
        assert s2.pose.z == 0.0

    def test_deterministic(self):
        s = mk(v=(1.0, 2.0, 0.5))
        cmd = AirCommand((3.0, -1.0, 0.2))
        assert air_step(s, cmd, 0.1) == air_step(s, cmd, 0.1)

    @given(st.floats(-30, 30), st.floats(-30, 30), st.floats(-30, 30),
           st.floats(-8, 8), st.floats(-8, 8), st.floats(-8, 8))
    def test_speed_and_accel_limits(self, cx, cy, cz, vx, vy, vz):
        v = (vx, vy, vz)
        n = math.sqrt(vx * vx + vy * vy + vz * vz)
        if n > 10.0:
            v = tuple(c * 10.0 / n for c in v)
        s = mk(v=v)
        s2 = air_step(s, AirCommand((cx, cy, cz)), 0.1)
        assert math.sqrt(sum(c * c for c in s2.velocity)) <= s.v_max + 1e-9
        dv = math.sqrt(sum((a - b) ** 2 for a, b in zip(s2.velocity, s.velocity)))
        assert dv <= s.a_max * 0.1 + 1e-9


class TestWaypointController:
    def test_advances_and_hovers_at_end(self):
        s = mk(x=5.0, y=0.0, z=50.0)
        cmd, idx = waypoint_controller(s, [(5.0, 0.0, 50.0)], 0, 2.0, 0.1)
        assert idx == 1
        assert cmd.target_velocity == (0.0, 0.0, 0.0)

    def test_points_at_waypoint_capped_speed(self):
        s = mk()
        cmd, idx = waypoint_controller(s, [(100.0, 0.0, 50.0)], 0, 2.0, 0.1)
        assert idx == 0
        assert cmd.target_velocity == pytest.approx((10.0, 0.0, 0.0))

    def test_three_four_five_normalization(self):
        s = mk()
        cmd, _ = waypoint_controller(s, [(30.0, 40.0, 50.0)], 0, 2.0, 0.1)
        assert cmd.target_velocity == pytest.approx((6.0, 8.0, 0.0))

    def test_reaches_waypoints_within_budget(self):
        s = mk(x=0.0, y=0.0, z=50.0, v_max=10.0, a_max=4.0)
        target = (80.0, 0.0, 50.0)
        dist = 80.0
        budget_ticks = int((dist / s.v_max) / 0.1 * 1.1) + 5
        idx = 0
        for _ in range(budget_ticks):
            cmd, idx = waypoint_controller(s, [target], idx, 2.0, 0.1)
            if idx >= 1:
                break
            s = air_step(s, cmd, 0.1)
        else:
            cmd, idx = waypoint_controller(s, [target], idx, 2.0, 0.1)
        assert idx == 1


class TestSeparation:
    def test_single_aircraft_empty(self):
        assert separation_violations({"a": mk()}, 10.0, 5.0) == []

    def test_colocated_pair(self):
        out = separation_violations({"b": mk(), "a": mk()}, 10.0, 5.0)
        assert out == [("a", "b")]

    def test_vertical_separation_respected(self):
        states = {"a": mk(z=50.0), "b": mk(z=60.0)}
        assert separation_violations(states, 10.0, 5.0) == []

    @given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100), st.floats(0, 50)),
                    min_size=2, max_size=20))
    def test_matches_brute_force_pair_scan(self, pts):
        states = {f"u{i:02d}": mk(x=p[0], y=p[1], z=p[2]) for i, p in enumerate(pts)}
        got = separation_violations(states, 15.0, 8.0)
        expected = []
        ids = sorted(states)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                a, b = states[ids[i]], states[ids[j]]
                dh = math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y)
                dv = abs(a.pose.z - b.pose.z)
                if dh < 15.0 and dv < 8.0:
                    expected.append((ids[i], ids[j]))
        assert got == expected
