"""Unified scenario model: states, dynamics, collision rules and rollouts.

A testing scenario is the initial system state plus the full action sequences
of the background vehicles.  Given an AV behavior model, the rollout is a
deterministic function of the scenario; safety is summarized by the minimum
time-to-collision (TTC) over the executed horizon, with 0 denoting a crash.

All longitudinal positions live on a shared axis (lanes are parallel); the
``distance`` of an agent is its position on that axis.  The gap ``d`` between
a leader/follower pair is the position difference, so bumper-to-bumper
contact corresponds to ``d == vehicle_length``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .models import BehaviorModel, MobilParams, as_generalized, cf_accel, mobil_decide

INF_TTC = math.inf


class ScenarioError(ValueError):
    """Invalid scenario, bounds or action input."""


class BoundViolation(ScenarioError):
    """A trajectory left the admissible region (polytope-consistent mode)."""


class Lateral(Enum):
    KEEP = "keep"
    CHANGE_LEFT = "change_left"
    CHANGE_RIGHT = "change_right"


class AgentKind(Enum):
    AV = "av"
    BACKGROUND_VEHICLE = "background_vehicle"
    STATIC_OBSTACLE = "static_obstacle"
    PEDESTRIAN = "pedestrian"


class Termination(Enum):
    HORIZON_END = "horizon_end"
    COLLISION_LONGITUDINAL = "collision_longitudinal"
    COLLISION_LATERAL = "collision_lateral"
    AGENT_SET_CHANGED = "agent_set_changed"
    AV_LANE_CHANGE = "av_lane_change"


class Collision(Enum):
    NONE = "none"
    LONGITUDINAL = "longitudinal"
    LATERAL = "lateral"


MAX_BACKGROUND_AGENTS = 6


@dataclass(frozen=True)
class ScenarioBounds:
    """Box and physical constraints defining the admissible scenario space."""

    horizon_T: int
    dt: float = 0.2
    d_min: float = 5.0
    d_max: float = 100.0
    v_min: float = 0.0
    v_max: float = 40.0
    a_min: float = -4.0
    a_max: float = 2.0
    vehicle_length_l: float = 5.0
    lane_count: int = 1
    lane_change_duration: float = 3.0

    def __post_init__(self) -> None:
        if self.horizon_T < 1:
            raise ScenarioError("horizon_T must be >= 1")
        if self.dt <= 0:
            raise ScenarioError("dt must be positive")
        if not (0 < self.d_min < self.d_max):
            raise ScenarioError("need 0 < d_min < d_max")
        if not (0 <= self.v_min < self.v_max):
            raise ScenarioError("need 0 <= v_min < v_max")
        if not (self.a_min < 0 < self.a_max):
            raise ScenarioError("need a_min < 0 < a_max")
        if self.vehicle_length_l < 0:
            raise ScenarioError("vehicle_length_l must be >= 0")
        if self.lane_count not in (1, 2, 3):
            raise ScenarioError("lane_count must be 1, 2 or 3")
        if self.lane_change_duration <= 0:
            raise ScenarioError("lane_change_duration must be positive")


@dataclass
class AgentState:
    lane_id: int
    distance: float
    speed: float
    lane_change_elapsed: Optional[float] = None  # None = not changing
    lane_change_target: Optional[int] = None
    agent_kind: AgentKind = AgentKind.BACKGROUND_VEHICLE

    def copy(self) -> "AgentState":
        return replace(self)

    @property
    def changing_lane(self) -> bool:
        return self.lane_change_elapsed is not None

    def occupied_lanes(self) -> Tuple[int, ...]:
        if self.changing_lane and self.lane_change_target is not None:
            return (self.lane_id, self.lane_change_target)
        return (self.lane_id,)


@dataclass(frozen=True)
class AgentAction:
    longitudinal_accel: float = 0.0
    lateral: Lateral = Lateral.KEEP


@dataclass
class SystemState:
    """Agent index 0 is the tested AV; the rest are background agents."""

    time_step: int
    agents: List[AgentState]

    def __post_init__(self) -> None:
        if len(self.agents) < 1:
            raise ScenarioError("need at least the AV agent")
        if len(self.agents) - 1 > MAX_BACKGROUND_AGENTS:
            raise ScenarioError("at most 6 background agents are tracked")

    @property
    def av(self) -> AgentState:
        return self.agents[0]

    def copy(self) -> "SystemState":
        return SystemState(self.time_step, [a.copy() for a in self.agents])


@dataclass
class TestingScenario:
    """A point of the scenario space: initial state + BV action sequences.

    ``bv_actions[i]`` is the length-T action sequence of background agent
    ``i + 1`` (agent 0, the AV, is driven by its behavior model).
    """

    initial_state: SystemState
    bv_actions: List[List[AgentAction]]

    def horizon(self) -> int:
        return len(self.bv_actions[0]) if self.bv_actions else 0


@dataclass
class RolloutOutcome:
    min_sm: float
    termination: Termination
    steps_executed: int


# ---------------------------------------------------------------------------
# Safety metric and dynamics
# ---------------------------------------------------------------------------

def compute_ttc(gap_d: float, v_follower: float, v_leader: float, vehicle_length_l: float) -> float:
    """Time to collision for a leader/follower pair.

    Returns (d - l) / (v_f - v_l) when the follower is closing, the infinite
    sentinel otherwise.  Overlapping vehicles that are closing give 0.
    """
    closing = v_follower - v_leader
    if closing <= 0:
        return INF_TTC
    if gap_d <= vehicle_length_l:
        return 0.0
    return (gap_d - vehicle_length_l) / closing


def _advance_speed(v: float, a: float, bounds: ScenarioBounds, strict: bool) -> Tuple[float, float]:
    """Return (new speed, effective acceleration); clamps unless strict."""
    v_new = v + a * bounds.dt
    if v_new < bounds.v_min or v_new > bounds.v_max:
        if strict:
            raise BoundViolation(f"speed {v_new:.3f} outside [{bounds.v_min}, {bounds.v_max}]")
        v_new = min(max(v_new, bounds.v_min), bounds.v_max)
        a = (v_new - v) / bounds.dt
    return v_new, a


def step_dynamics(
    state: SystemState,
    actions: Sequence[AgentAction],
    bounds: ScenarioBounds,
    strict: bool = False,
) -> SystemState:
    """One step of the discrete dynamics for every agent.

    Speeds advance by a*dt, positions include the second-order dt^2/2 term,
    and lane-change timers advance by dt (the change completes once the
    elapsed time reaches the configured duration).  In strict mode a speed
    leaving its box raises :class:`BoundViolation`; otherwise it is clamped
    and the position update uses the effective (clamped) acceleration.
    """
    if len(actions) != len(state.agents):
        raise ScenarioError("one action per agent required")
    new_agents = []
    for agent, action in zip(state.agents, actions):
        a = action.longitudinal_accel
        if a < bounds.a_min or a > bounds.a_max:
            if strict:
                raise BoundViolation(f"acceleration {a:.3f} outside box")
            a = min(max(a, bounds.a_min), bounds.a_max)
        if agent.agent_kind in (AgentKind.STATIC_OBSTACLE, AgentKind.PEDESTRIAN):
            a = 0.0  # no longitudinal motion
        new = agent.copy()
        if agent.agent_kind is AgentKind.STATIC_OBSTACLE:
            v_new, a_eff = agent.speed, 0.0
        else:
            v_new, a_eff = _advance_speed(agent.speed, a, bounds, strict)
        new.distance = agent.distance + agent.speed * bounds.dt + 0.5 * a_eff * bounds.dt**2
        new.speed = v_new

        if action.lateral is not Lateral.KEEP and not agent.changing_lane:
            target = agent.lane_id + (-1 if action.lateral is Lateral.CHANGE_LEFT else 1)
            if target < 0 or target >= bounds.lane_count:
                raise ScenarioError("lane change off the road")
            new.lane_change_elapsed = 0.0
            new.lane_change_target = target
        if new.changing_lane:
            new.lane_change_elapsed += bounds.dt
            if new.lane_change_elapsed >= bounds.lane_change_duration:
                new.lane_id = new.lane_change_target
                new.lane_change_elapsed = None
                new.lane_change_target = None
        new_agents.append(new)
    return SystemState(state.time_step + 1, new_agents)


def detect_collisions(state: SystemState, bounds: ScenarioBounds) -> Collision:
    """Collision classification for the current state.

    Longitudinal: two agents sharing a lane with bumper gap <= 0.
    Lateral: an agent mid lane-change longitudinally overlapping an agent in
    its target lane.  Longitudinal takes precedence when both hold.
    """
    l = bounds.vehicle_length_l
    agents = state.agents
    lateral_found = False
    for i in range(len(agents)):
        for j in range(i + 1, len(agents)):
            ai, aj = agents[i], agents[j]
            gap = abs(ai.distance - aj.distance)
            if ai.lane_id == aj.lane_id and gap <= l:
                return Collision.LONGITUDINAL
            if gap < l:
                if (ai.changing_lane and ai.lane_change_target in aj.occupied_lanes()) or (
                    aj.changing_lane and aj.lane_change_target in ai.occupied_lanes()
                ):
                    lateral_found = True
    return Collision.LATERAL if lateral_found else Collision.NONE


def _collision_against_av(state: SystemState, bounds: ScenarioBounds) -> Tuple[Collision, bool]:
    """Like :func:`detect_collisions` but also reports whether the collision
    implicates the AV's own safety metric: the AV striking its leader, or a
    lateral overlap involving the AV.  A rear-end *by* a background vehicle or
    a crash among background vehicles ends the scenario without zeroing the
    AV's minimum TTC.
    """
    l = bounds.vehicle_length_l
    agents = state.agents
    found = Collision.NONE
    av_hit = False
    for i in range(len(agents)):
        for j in range(i + 1, len(agents)):
            ai, aj = agents[i], agents[j]
            gap = abs(ai.distance - aj.distance)
            if ai.lane_id == aj.lane_id and gap <= l:
                # the striking vehicle closed the gap, so it is the faster
                # one at impact (position order is unreliable once a fast
                # vehicle overshoots within a single step)
                if ai.speed != aj.speed:
                    striker = i if ai.speed > aj.speed else j
                else:
                    striker = i if ai.distance < aj.distance else j
                if striker == 0:
                    return Collision.LONGITUDINAL, True
                found = Collision.LONGITUDINAL
                continue
            if gap < l and (
                (ai.changing_lane and ai.lane_change_target in aj.occupied_lanes())
                or (aj.changing_lane and aj.lane_change_target in ai.occupied_lanes())
            ):
                if found is Collision.NONE:
                    found = Collision.LATERAL
                if i == 0 or j == 0:
                    av_hit = True
    if found is Collision.LATERAL and av_hit:
        return found, True
    return found, False


# ---------------------------------------------------------------------------
# Neighbor bookkeeping
# ---------------------------------------------------------------------------

def _leader_of(state: SystemState, idx: int) -> Optional[int]:
    """Index of the nearest agent ahead of ``idx`` in its lane, or None."""
    me = state.agents[idx]
    best, best_gap = None, math.inf
    for j, other in enumerate(state.agents):
        if j == idx or me.lane_id not in other.occupied_lanes():
            continue
        gap = other.distance - me.distance
        if gap > 0 and gap < best_gap:
            best, best_gap = j, gap
    return best


def _follower_in_lane(state: SystemState, lane: int, position: float, skip: int) -> Optional[int]:
    best, best_gap = None, math.inf
    for j, other in enumerate(state.agents):
        if j == skip or lane not in other.occupied_lanes():
            continue
        gap = position - other.distance
        if gap > 0 and gap < best_gap:
            best, best_gap = j, gap
    return best


def _leader_in_lane(state: SystemState, lane: int, position: float, skip: int) -> Optional[int]:
    best, best_gap = None, math.inf
    for j, other in enumerate(state.agents):
        if j == skip or lane not in other.occupied_lanes():
            continue
        gap = other.distance - position
        if gap > 0 and gap < best_gap:
            best, best_gap = j, gap
    return best


def neighbor_slots(state: SystemState, bounds: ScenarioBounds) -> Tuple[Tuple[int, Optional[int]], ...]:
    """(lead/rear x lane) slot assignment around the AV, used to detect
    surrounding-agent-set changes."""
    av = state.av
    slots = []
    for lane in range(bounds.lane_count):
        slots.append((2 * lane, _leader_in_lane(state, lane, av.distance, 0)))
        slots.append((2 * lane + 1, _follower_in_lane(state, lane, av.distance, 0)))
    return tuple(slots)


def _cf_accel_towards(model: BehaviorModel, state: SystemState, idx: int, leader: Optional[int]) -> float:
    me = state.agents[idx]
    if leader is None:
        return 0.0  # free driving: hold speed
    lead = state.agents[leader]
    return cf_accel(model.cf, me.speed, lead.speed, lead.distance - me.distance)


def _av_action(
    model: BehaviorModel, state: SystemState, bounds: ScenarioBounds
) -> AgentAction:
    """AV control law: CF acceleration against the same-lane leader plus an
    optional MOBIL lane-change decision."""
    leader = _leader_of(state, 0)
    accel = _cf_accel_towards(model, state, 0, leader)
    lateral = Lateral.KEEP
    if model.mobil is not None and bounds.lane_count > 1:
        av = state.av
        best_gain = -math.inf
        for direction, target in (
            (Lateral.CHANGE_LEFT, av.lane_id - 1),
            (Lateral.CHANGE_RIGHT, av.lane_id + 1),
        ):
            if target < 0 or target >= bounds.lane_count:
                continue
            new_leader = _leader_in_lane(state, target, av.distance, 0)
            accel_after = _cf_accel_towards_lane(model, state, 0, new_leader)
            ego_gain = accel_after - accel
            nf = _follower_in_lane(state, target, av.distance, 0)
            nf_decel = 0.0
            nf_delta = 0.0
            if nf is not None:
                nf_agent = state.agents[nf]
                nf_after = cf_accel(model.cf, nf_agent.speed, av.speed, av.distance - nf_agent.distance)
                nf_before = _cf_accel_towards(model, state, nf, _leader_of(state, nf))
                nf_decel = max(0.0, -nf_after)
                nf_delta = nf_after - nf_before
            of = _follower_in_lane(state, av.lane_id, av.distance, 0)
            of_delta = 0.0
            if of is not None:
                of_agent = state.agents[of]
                of_before = cf_accel(model.cf, of_agent.speed, av.speed, av.distance - of_agent.distance)
                of_leader_after = _leader_in_lane(state, of_agent.lane_id, of_agent.distance, of)
                # after the AV leaves, the old follower trails the AV's leader
                of_after = 0.0
                if leader is not None:
                    lead = state.agents[leader]
                    of_after = cf_accel(model.cf, of_agent.speed, lead.speed, lead.distance - of_agent.distance)
                of_delta = of_after - of_before
            if mobil_decide(ego_gain, nf_delta, of_delta, nf_decel, model.mobil) and ego_gain > best_gain:
                best_gain = ego_gain
                lateral = direction
    return AgentAction(longitudinal_accel=accel, lateral=lateral)


def _cf_accel_towards_lane(model: BehaviorModel, state: SystemState, idx: int, leader: Optional[int]) -> float:
    return _cf_accel_towards(model, state, idx, leader)


def _bv_lateral_allowed(
    model: BehaviorModel, state: SystemState, idx: int, direction: Lateral, bounds: ScenarioBounds
) -> bool:
    """Safety gate for a sampled BV lane-change attempt: legal lane and the
    imposed deceleration on the new follower within the MOBIL limit."""
    me = state.agents[idx]
    target = me.lane_id + (-1 if direction is Lateral.CHANGE_LEFT else 1)
    if target < 0 or target >= bounds.lane_count:
        return False
    mobil = model.mobil if model.mobil is not None else MobilParams()
    nf = _follower_in_lane(state, target, me.distance, idx)
    if nf is not None:
        nf_agent = state.agents[nf]
        gap = me.distance - nf_agent.distance
        if gap < bounds.vehicle_length_l:
            return False  # longitudinal overlap with the new follower
        nf_after = cf_accel(model.cf, nf_agent.speed, me.speed, gap)
        if -nf_after > mobil.safe_braking_limit:
            return False
    lead = _leader_in_lane(state, target, me.distance, idx)
    if lead is not None and state.agents[lead].distance - me.distance < bounds.vehicle_length_l:
        return False
    return True


# ---------------------------------------------------------------------------
# Rollout
# ---------------------------------------------------------------------------

def _av_min_ttc(state: SystemState, bounds: ScenarioBounds) -> float:
    leader = _leader_of(state, 0)
    if leader is None:
        return INF_TTC
    av, lead = state.av, state.agents[leader]
    return compute_ttc(lead.distance - av.distance, av.speed, lead.speed, bounds.vehicle_length_l)


def rollout(
    scenario: TestingScenario,
    av_model: BehaviorModel,
    bounds: ScenarioBounds,
    mode: str = "clamping",
) -> RolloutOutcome:
    """Deterministic simulation of a testing scenario.

    ``clamping`` mode clamps accelerations and speeds to their boxes and
    terminates early on collisions, AV lane changes and surrounding-agent-set
    changes.  ``polytope_consistent`` mode instead raises
    :class:`BoundViolation` whenever a speed or a model-output acceleration
    leaves its domain, so that accepted samples are exactly the admissible
    scenario region used by the polytope construction; it also runs the full
    horizon (domain constraints apply at every step, even after a crash).
    """
    if mode not in ("clamping", "polytope_consistent"):
        raise ScenarioError(f"unknown rollout mode {mode!r}")
    strict = mode == "polytope_consistent"
    T = scenario.horizon()
    if T < 1:
        raise ScenarioError("scenario must contain at least one action step")

    state = scenario.initial_state.copy()
    min_sm = INF_TTC
    crashed: Optional[Termination] = None

    def note_state(s: SystemState) -> Optional[Termination]:
        nonlocal min_sm
        col, av_metric = _collision_against_av(s, bounds)
        if col is not Collision.NONE and av_metric:
            min_sm = 0.0
            return (
                Termination.COLLISION_LONGITUDINAL
                if col is Collision.LONGITUDINAL
                else Termination.COLLISION_LATERAL
            )
        min_sm = min(min_sm, _av_min_ttc(s, bounds))
        if col is not Collision.NONE:
            # a crash among background vehicles (or into the AV from behind)
            # ends the scenario but does not zero the AV's own metric
            return Termination.AGENT_SET_CHANGED
        return None

    term = note_state(state)
    if term is not None and not strict:
        return RolloutOutcome(min_sm=min_sm, termination=term, steps_executed=0)
    crashed = term if term in (
        Termination.COLLISION_LONGITUDINAL,
        Termination.COLLISION_LATERAL,
    ) else None
    slots0 = neighbor_slots(state, bounds) if bounds.lane_count > 1 else None

    steps = 0
    termination = Termination.HORIZON_END
    for t in range(T):
        av_action = _av_action(av_model, state, bounds)
        if strict and not (bounds.a_min <= av_action.longitudinal_accel <= bounds.a_max):
            raise BoundViolation("AV model acceleration outside box")
        if av_action.lateral is not Lateral.KEEP and crashed is None:
            av = state.av
            target = av.lane_id + (-1 if av_action.lateral is Lateral.CHANGE_LEFT else 1)
            overlap = any(
                target in other.occupied_lanes()
                and abs(other.distance - av.distance) < bounds.vehicle_length_l
                for other in state.agents[1:]
            )
            if overlap:
                min_sm = 0.0
                termination = Termination.COLLISION_LATERAL
            else:
                termination = Termination.AV_LANE_CHANGE
            steps = t
            break

        actions = [av_action if crashed is None else AgentAction(av_action.longitudinal_accel)]
        bv_changed = False
        for i, seq in enumerate(scenario.bv_actions):
            act = seq[t]
            if act.lateral is not Lateral.KEEP:
                if _bv_lateral_allowed(av_model, state, i + 1, act.lateral, bounds):
                    bv_changed = True
                else:
                    act = AgentAction(act.longitudinal_accel, Lateral.KEEP)
            actions.append(act)

        state = step_dynamics(state, actions, bounds, strict=strict)
        steps = t + 1
        term = note_state(state)
        if term is Termination.AGENT_SET_CHANGED and crashed is None:
            termination = term
            break
        if term is not None and term is not Termination.AGENT_SET_CHANGED and crashed is None:
            crashed = term
            if not strict:
                termination = term
                break
        if bv_changed and crashed is None:
            termination = Termination.AGENT_SET_CHANGED
            break
        if slots0 is not None and crashed is None:
            slots = neighbor_slots(state, bounds)
            if slots != slots0:
                termination = Termination.AGENT_SET_CHANGED
                break
            slots0 = slots

    if crashed is not None:
        termination = crashed
        min_sm = 0.0
    return RolloutOutcome(min_sm=min_sm, termination=termination, steps_executed=steps)
