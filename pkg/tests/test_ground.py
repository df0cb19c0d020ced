import math

import pytest
from hypothesis import given, strategies as st

from skyground.errors import InvalidGap, NoServingPhase
from skyground.ground import (
    IdmParams,
    gap_acceptable,
    idm_accel,
    lane_change_decide,
    preempt,
    serving_phase_index,
    signal_state,
)
from skyground.map_core import SignalPlan

P = IdmParams(a_max=2.0, b=3.0, v0=15.0, s0=2.0, T=1.5, delta=4.0)


class TestIdmAccel:
    def test_free_road_equilibrium(self):
        assert idm_accel(15.0, 0.0, math.inf, P) == pytest.approx(0.0)

    def test_standstill_equilibrium(self):
        assert idm_accel(0.0, 0.0, 2.0, P) == pytest.approx(0.0)

    def test_closing_in_on_slower_leader(self):
        # frozen from an independent evaluation of the closed form:
        # s* = 2 + 10*1.5 + 10*2/(2*sqrt(6)) = 21.0824829...
        # a  = 2*(1 - (10/15)^4 - (21.0824829.../20)^2) = -0.6174184...
        a = idm_accel(10.0, 8.0, 20.0, P)
        assert a == pytest.approx(-0.617418, abs=1e-4)

    def test_invalid_gap(self):
        with pytest.raises(InvalidGap):
            idm_accel(5.0, 5.0, 0.0, P)

    def test_clamped_to_emergency_braking(self):
        a = idm_accel(30.0, 0.0, 0.5, P)
        assert a == -P.b_emergency

    @given(st.floats(0, 15), st.floats(0, 15), st.floats(1, 500))
    def test_bounded(self, v, v_lead, gap):
        a = idm_accel(v, v_lead, gap, P)
        assert -P.b_emergency <= a <= P.a_max

    @given(st.floats(0.1, 400), st.floats(0.1, 400), st.floats(0, 15))
    def test_monotone_in_gap(self, g1, g2, v):
        lo, hi = sorted((g1, g2))
        assert idm_accel(v, 5.0, lo, P) <= idm_accel(v, 5.0, hi, P) + 1e-12

    @given(st.floats(0, 15), st.floats(0, 15))
    def test_monotone_nonincreasing_in_speed(self, v1, v2):
        lo, hi = sorted((v1, v2))
        assert idm_accel(hi, 5.0, 30.0, P) <= idm_accel(lo, 5.0, 30.0, P) + 1e-12


class TestLaneChange:
    def test_mandatory_with_empty_lane(self):
        assert lane_change_decide(10.0, "left", (math.inf, math.inf, 0.0), None, P) == "left"

    def test_follower_too_close_blocks(self):
        # follower gap 1 m < s0
        assert lane_change_decide(10.0, "left", (math.inf, 1.0, 0.0), None, P) == "keep"

    def test_no_adjacent_lane_keeps(self):
        assert lane_change_decide(10.0, "left", None, None, P) == "keep"

    def test_no_mandatory_keeps(self):
        assert lane_change_decide(10.0, None, (math.inf, math.inf, 0.0),
                                  (math.inf, math.inf, 0.0), P) == "keep"

    @given(st.floats(0, 15), st.floats(0, 60), st.floats(0, 60), st.floats(0, 15))
    def test_matches_gap_predicate_oracle(self, v, lead_gap, fol_gap, fol_v):
        got = lane_change_decide(v, "left", (lead_gap, fol_gap, fol_v), None, P)
        # brute-force evaluation of the stated predicates
        ok = lead_gap >= P.s0 + v * P.T and fol_gap >= P.s0 + fol_v * P.T
        assert got == ("left" if ok else "keep")


PLAN = SignalPlan("x", ((frozenset({0, 1}), 30), (frozenset({2, 3}), 30)))


class TestSignals:
    def test_tick_zero_first_phase(self):
        assert signal_state(PLAN, 0) == {0, 1}

    def test_boundary_belongs_to_later_phase(self):
        assert signal_state(PLAN, 30) == {2, 3}

    def test_wraps_modulo_cycle(self):
        assert signal_state(PLAN, 75) == {0, 1}  # 75 mod 60 = 15

    @given(st.integers(0, 10_000))
    def test_periodic(self, t):
        assert signal_state(PLAN, t) == signal_state(PLAN, t + PLAN.cycle)

    def test_preempt_overrides(self):
        for t in range(0, 120):
            assert preempt(PLAN, t, 2) == {2, 3}

    def test_preempt_none_passthrough(self):
        assert preempt(PLAN, 40, None) == signal_state(PLAN, 40)

    def test_resume_by_absolute_clock(self):
        # after the priority vehicle clears, the plan picks up at t mod cycle
        timeline = [preempt(PLAN, t, 0 if 20 <= t < 45 else None) for t in range(90)]
        for t in range(45, 90):
            assert timeline[t] == signal_state(PLAN, t)

    def test_serving_phase_smallest_index(self):
        plan = SignalPlan("x", ((frozenset({0}), 10), (frozenset({1, 0}), 10)))
        assert serving_phase_index(plan, 0) == 0
        assert serving_phase_index(plan, 1) == 1

    def test_no_serving_phase(self):
        with pytest.raises(NoServingPhase):
            serving_phase_index(PLAN, 9)


def test_gap_acceptable_boundary():
    assert gap_acceptable(P.s0 + 10 * P.T, 10.0, P.s0, 0.0, P)
    assert not gap_acceptable(P.s0 + 10 * P.T - 0.01, 10.0, P.s0, 0.0, P)
