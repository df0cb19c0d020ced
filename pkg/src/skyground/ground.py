"""Background ground behavior: IDM car-following, gap-acceptance lane
changes, fixed-time signal stepping, and emergency preemption."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidGap, NoServingPhase
from .map_core import SignalPlan

DEFAULT_PEDESTRIAN_SPEED = 1.4  # m/s


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 2.0   # max acceleration, m/s^2
    b: float = 3.0       # comfortable deceleration, m/s^2
    v0: float = 15.0     # desired speed, m/s
    s0: float = 2.0      # standstill gap, m
    T: float = 1.5       # time headway, s
    delta: float = 4.0

    def __post_init__(self):
        if self.a_max <= 0 or self.b <= 0 or self.v0 <= 0:
            raise ValueError("a_max, b, v0 must be > 0")
        if self.s0 < 0 or self.T < 0:
            raise ValueError("s0, T must be >= 0")

    @property
    def b_emergency(self) -> float:
        # clamp keeps the fixed-step integrator stable under extreme inputs
        return 3.0 * self.b


def idm_accel(v: float, v_lead: float, gap: float, p: IdmParams) -> float:
    """IDM acceleration; pass gap=inf when there is no leader."""
    if gap <= 0.0:
        raise InvalidGap(f"gap={gap} must be > 0")
    if math.isinf(gap):
        interaction = 0.0
    else:
        s_star = p.s0 + v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b))
        interaction = (s_star / gap) ** 2
    a = p.a_max * (1.0 - (v / p.v0) ** p.delta - interaction)
    return min(p.a_max, max(-p.b_emergency, a))


def gap_acceptable(lead_gap: float, ego_v: float,
                   follow_gap: float, follower_v: float, p: IdmParams) -> bool:
    """Symmetric gap-acceptance safety test for a lane change."""
    return (lead_gap >= p.s0 + ego_v * p.T
            and follow_gap >= p.s0 + follower_v * p.T)


def lane_change_decide(ego_v: float, mandatory: str | None,
                       left_gaps: tuple[float, float, float] | None,
                       right_gaps: tuple[float, float, float] | None,
                       p: IdmParams) -> str:
    """Pick {keep, left, right}.

    Gap tuples are (leader gap, follower gap, follower speed) on the target
    lane, or None when no such lane exists.  A mandatory direction (route
    requires it) overrides discretionary logic but never the safety gates;
    on failure the vehicle keeps its lane and retries next tick.
    """
    def safe(gaps):
        return gaps is not None and gap_acceptable(gaps[0], ego_v, gaps[1], gaps[2], p)

    if mandatory == "left":
        return "left" if safe(left_gaps) else "keep"
    if mandatory == "right":
        return "right" if safe(right_gaps) else "keep"
    return "keep"


def signal_state(plan: SignalPlan, tick: int) -> frozenset[int]:
    """Active movement set at a tick; phase boundaries belong to the later phase."""
    t = tick % plan.cycle
    acc = 0
    for movements, duration in plan.phases:
        acc += duration
        if t < acc:
            return movements
    return plan.phases[-1][0]


def serving_phase_index(plan: SignalPlan, movement: int) -> int:
    """Smallest phase index whose movement set contains the movement."""
    for i, (movements, _d) in enumerate(plan.phases):
        if movement in movements:
            return i
    raise NoServingPhase(f"no phase of {plan.intersection_id} serves movement {movement}")


def preempt(plan: SignalPlan, tick: int, approach_movement: int | None) -> frozenset[int]:
    """Signal state with optional priority override.

    With an approach movement active (priority vehicle inside the preemption
    radius) the serving phase wins regardless of the clock; afterwards the
    plan resumes at tick mod cycle.
    """
    if approach_movement is None:
        return signal_state(plan, tick)
    return plan.phases[serving_phase_index(plan, approach_movement)][0]
