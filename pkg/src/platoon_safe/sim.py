"""Scenario runner: per-vehicle safety protocol, scripted traffic, physics and logging.

All vehicles plan on the same tick from previous-tick states and mailboxes, then the
channel is stepped and every vehicle is advanced by one planning period with a
truncated Gaussian disturbance. Collisions are checked at every integration substep.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .consensus import ConsensusState, ReferenceEntity, safe_consensus
from .controllers import FailSafeConfig, fail_safe, nominal_cacc, recap
from .dynamics import NEG_INF, DEFAULT_SUBSTEPS, TrueEnv, advance, true_accel, upper_pos
from .network import (AlertWithdraw, Channel, ChannelConfig, CollisionAlert, Delivery, EntityValue,
                      Envelope, Mailbox, ParamsBroadcast, collision_pos, coupling_step)
from .types import (WORST_CASE, CutinTracker, EnvParams, StateInterval, VehicleParams, VehicleState,
                    interval_measure, measure_state)
from .verify import PrecedingInfo, first_violation, predecessor_lower, safe_distance, verify

TimeSpec = Union[float, tuple]
WITHDRAW_REPEATS = 5
P_GAIN_CRUISE = 0.8


class ScenarioInvalid(ValueError):
    pass


# ---------------------------------------------------------------- scenario description

@dataclass(frozen=True)
class VehicleSpec:
    vid: str
    params: VehicleParams
    s0: float  # front position
    v0: float
    member: bool = True
    target_speed: Optional[float] = None  # default: v0
    headway: float = 0.3
    profile: tuple = ()  # non-members: ((t_start, a), ...); None as a value means cruise

    @property
    def cruise_speed(self) -> float:
        return self.v0 if self.target_speed is None else self.target_speed


@dataclass(frozen=True)
class FullBrake:
    vid: str
    t: TimeSpec


@dataclass(frozen=True)
class CutIn:
    vehicle: VehicleSpec  # s0 is ignored; the vehicle is placed by ``gap``
    t: TimeSpec
    ahead_of: str
    gap: float  # cut-in rear minus follower front at insertion


@dataclass(frozen=True)
class Depart:
    vid: str
    t: TimeSpec


@dataclass(frozen=True)
class SetTarget:
    vid: str
    t: TimeSpec
    v: float


Event = Union[FullBrake, CutIn, Depart, SetTarget]


@dataclass(frozen=True)
class NoiseConfig:
    ego_s: float = 0.4
    ego_v: float = 0.1
    rel_s: float = 0.2
    rel_v: float = 0.1


@dataclass
class Scenario:
    vehicles: list
    env: EnvParams = field(default_factory=EnvParams)
    events: list = field(default_factory=list)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    duration: float = 30.0
    seed: int = 0
    consensus: bool = False
    incline_profile: Optional[tuple] = None  # ((s, alpha), ...) piecewise linear
    name: str = "scenario"

    def validate(self) -> "Scenario":
        if not self.vehicles:
            raise ScenarioInvalid("scenario has no vehicles")
        ids = [v.vid for v in self.vehicles] + [e.vehicle.vid for e in self.events if isinstance(e, CutIn)]
        if len(set(ids)) != len(ids):
            raise ScenarioInvalid("duplicate vehicle ids")
        for lead, follow in zip(self.vehicles, self.vehicles[1:]):
            if not follow.s0 < lead.s0 - lead.params.l:
                raise ScenarioInvalid(f"vehicles {lead.vid} and {follow.vid} overlap or are out of order")
        for v in self.vehicles:
            if not 0 <= v.v0 <= v.params.v_max:
                raise ScenarioInvalid(f"initial speed of {v.vid} outside [0, v_max]")
        known = set(ids)
        for e in self.events:
            ref = e.ahead_of if isinstance(e, CutIn) else e.vid
            if ref not in known:
                raise ScenarioInvalid(f"event refers to unknown vehicle {ref!r}")
        if self.incline_profile is not None:
            for _, a in self.incline_profile:
                if a not in self.env.alpha:
                    raise ScenarioInvalid(f"incline {a} outside the configured bounds")
        if self.duration <= 0:
            raise ScenarioInvalid("duration must be positive")
        return self


def _resolve_time(t: TimeSpec, rng: np.random.Generator) -> float:
    if isinstance(t, (tuple, list)):
        lo, hi = t
        return float(rng.uniform(lo, hi))
    return float(t)


def incline_lookup(profile: Optional[Sequence]):
    if not profile:
        return lambda s: 0.0
    xs = np.array([p[0] for p in profile], dtype=float)
    ys = np.array([p[1] for p in profile], dtype=float)
    return lambda s: float(np.interp(s, xs, ys))


# ---------------------------------------------------------------- runtime state

@dataclass
class VehicleRuntime:
    spec: VehicleSpec
    state: VehicleState
    consensus: ConsensusState
    entity: Optional[ReferenceEntity] = None
    mailbox: Mailbox = field(default_factory=Mailbox)
    L: set = field(default_factory=set)
    F: set = field(default_factory=set)
    trackers: dict = field(default_factory=dict)
    target_speed: float = 0.0
    full_brake: bool = False
    alert_active: bool = False
    withdraw_left: int = 0
    last_applied: float = 0.0
    min_sub_accel: float = 0.0

    @property
    def vid(self) -> str:
        return self.spec.vid

    @property
    def params(self) -> VehicleParams:
        return self.spec.params

    @property
    def member(self) -> bool:
        return self.spec.member

    @property
    def a_min(self) -> float:
        """Effective brake limit used by the physics and by the ego's own bounds."""
        return self.consensus.a_min_forced if self.member else self.params.a_dec

    @property
    def rear(self) -> float:
        return self.state.s - self.params.l


@dataclass
class PlanOutcome:
    a_d: float
    outbox: list = field(default_factory=list)
    fail_safe: bool = False
    recap: bool = False
    transition: bool = False
    alert: bool = False
    safe_distance: float = math.nan
    alerts_seen: int = 0
    plan_time: float = 0.0


@dataclass
class StepLog:
    t: float
    vid: str
    s: float
    v: float
    a_applied: float
    a_d: float
    a_min_forced: float
    fail_safe: bool
    recap: bool
    transition: bool
    safe_distance: float
    alerts: int

    COLUMNS = ("t", "vid", "s", "v", "a_applied", "a_d", "a_min_forced", "fail_safe", "recap", "transition",
               "safe_distance", "alerts")


@dataclass
class RunSummary:
    collisions: int = 0
    first_collision_step: Optional[int] = None
    collision_pairs: list = field(default_factory=list)
    min_gaps: dict = field(default_factory=dict)
    convergence_time: Optional[float] = None
    reconvergence_time: Optional[float] = None
    spread_before_departure: Optional[float] = None
    limit_before_departure: Optional[float] = None
    final_limits: dict = field(default_factory=dict)
    fail_safe_inputs: list = field(default_factory=list)
    alerts_sent: int = 0
    safe_distance_violations: int = 0
    safe_distance_checks: int = 0
    invariant_violations: int = 0
    plan_times: list = field(default_factory=list)  # total planning time per tick [s]
    vehicle_plan_times: list = field(default_factory=list)  # per vehicle and tick [s]
    steps: int = 0

    def as_rows(self) -> list[tuple[str, str]]:
        rows = [("collisions", self.collisions),
                ("first_collision_step", "" if self.first_collision_step is None else self.first_collision_step),
                ("collision_pairs", ";".join(self.collision_pairs)),
                ("convergence_time", _fmt(self.convergence_time)),
                ("reconvergence_time", _fmt(self.reconvergence_time)),
                ("spread_before_departure", _fmt(self.spread_before_departure)),
                ("limit_before_departure", _fmt(self.limit_before_departure)),
                ("alerts_sent", self.alerts_sent),
                ("fail_safe_engagements", len(self.fail_safe_inputs)),
                ("fail_safe_median_input", _fmt(float(np.median(self.fail_safe_inputs))
                                                 if self.fail_safe_inputs else None)),
                ("safe_distance_checks", self.safe_distance_checks),
                ("safe_distance_violations", self.safe_distance_violations),
                ("invariant_violations", self.invariant_violations),
                ("steps", self.steps)]
        rows += [(f"min_gap[{k}]", _fmt(v)) for k, v in self.min_gaps.items()]
        rows += [(f"final_limit[{k}]", _fmt(v)) for k, v in self.final_limits.items()]
        return [(k, str(v)) for k, v in rows]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(x)
    return f"{float(x):.9g}"


# ---------------------------------------------------------------- verification glue

class PlanningVerifier:
    """Verification context handed to the braking-limit protocol for one planning step."""

    def __init__(self, world: "World", ego: VehicleRuntime, ego_meas: StateInterval, sensed: list):
        self.world = world
        self.ego = ego
        self.ego_meas = ego_meas
        self.sensed = sensed

    def ego_safe(self, a_min_ego: float, leader_limits) -> bool:
        preds = self.world.preceding_infos(self.ego, self.sensed, leader_limits)
        coll = self.world.collision_positions(self.ego, preds)
        return verify(NEG_INF, a_min_ego, preds, coll, self.ego_meas, self.ego.params, self.world.env).safe

    def leader_safe(self, leader, a_leader: float, a_min_ego: float) -> bool:
        preds = [p for p in self.world.preceding_infos(self.ego, self.sensed, None) if p.vehicle_id == leader]
        if not preds:
            return True  # out of range: only the sensor limit applies
        info = PrecedingInfo(leader, preds[0].state, preds[0].params, a_leader, preds[0].cutin, preds[0].now)
        return verify(NEG_INF, a_min_ego, [info], [], self.ego_meas, self.ego.params, self.world.env,
                      include_sensor=False).safe


# ---------------------------------------------------------------- world

class World:
    def __init__(self, scenario: Scenario, *, log_safe_distance: bool = True, check_safe_distance: bool = True,
                 fail_safe_cfg: FailSafeConfig = FailSafeConfig(), recheck_limit_safety: bool = False):
        self.scenario = scenario.validate()
        self.env = scenario.env
        self.dt = scenario.env.dt_p
        self.log_safe_distance = log_safe_distance
        self.check_safe_distance = check_safe_distance
        self.fail_safe_cfg = fail_safe_cfg
        self.recheck_limit_safety = recheck_limit_safety
        seed = int(scenario.seed)
        self.rng_events = np.random.default_rng([seed, 1])
        self.rng_env = np.random.default_rng([seed, 2])
        self.rng_noise = np.random.default_rng([seed, 3])
        self.rng_dist = np.random.default_rng([seed, 4])
        ch = scenario.channel
        self.channel = Channel(ChannelConfig(ch.drop_prob, ch.delay_steps, ch.duplicate_prob,
                                             int(np.random.default_rng([seed, ch.seed, 5]).integers(2 ** 31))))
        env = scenario.env
        self.true_env = TrueEnv(rho=float(self.rng_env.uniform(env.rho.lo, env.rho.hi)),
                                v_wind=float(self.rng_env.uniform(env.v_wind.lo, env.v_wind.hi)),
                                alpha_at=incline_lookup(scenario.incline_profile))
        self.events = sorted(((_resolve_time(e.t, self.rng_events), i, e) for i, e in enumerate(scenario.events)),
                             key=lambda x: (x[0], x[1]))
        self.next_event = 0
        self.vehicles: dict[str, VehicleRuntime] = {}
        self.order: list[str] = []
        for spec in scenario.vehicles:
            self._add_vehicle(spec, VehicleState(spec.s0, spec.v0))
        self.k = 0
        self.summary = RunSummary()
        self.logs: list[StepLog] = []
        self.departures: list[float] = []
        self._converged_since_reset = False
        self._reset_time = 0.0

    # -- setup helpers
    def _add_vehicle(self, spec: VehicleSpec, state: VehicleState, index: Optional[int] = None):
        entity = ReferenceEntity(spec.params.a_dec) if (spec.member and self.scenario.consensus) else None
        rt = VehicleRuntime(spec=spec, state=state, consensus=ConsensusState(a_min_forced=spec.params.a_dec),
                            entity=entity, target_speed=spec.cruise_speed)
        self.vehicles[spec.vid] = rt
        if index is None:
            self.order.append(spec.vid)
        else:
            self.order.insert(index, spec.vid)

    @property
    def t(self) -> float:
        return self.k * self.dt

    def members(self) -> list[VehicleRuntime]:
        return [self.vehicles[v] for v in self.order if self.vehicles[v].member]

    def direct_pred(self, vid: str) -> Optional[str]:
        i = self.order.index(vid)
        return self.order[i - 1] if i > 0 else None

    def direct_succ(self, vid: str) -> Optional[str]:
        i = self.order.index(vid)
        return self.order[i + 1] if i + 1 < len(self.order) else None

    # -- events
    def _apply_events(self):
        while self.next_event < len(self.events) and self.events[self.next_event][0] <= self.t + 1e-9:
            _, _, ev = self.events[self.next_event]
            self.next_event += 1
            if isinstance(ev, FullBrake):
                if ev.vid in self.vehicles:
                    self.vehicles[ev.vid].full_brake = True
            elif isinstance(ev, SetTarget):
                if ev.vid in self.vehicles:
                    self.vehicles[ev.vid].target_speed = ev.v
            elif isinstance(ev, Depart):
                self._depart(ev.vid)
            elif isinstance(ev, CutIn):
                self._cut_in(ev)

    def _depart(self, vid: str):
        if vid not in self.vehicles:
            return
        self._record_departure_stats()
        self.order.remove(vid)
        del self.vehicles[vid]
        for rt in self.vehicles.values():
            rt.L.discard(vid)
            rt.F.discard(vid)
            rt.consensus.forget(vid)
            rt.mailbox.forget(vid)
            rt.trackers.pop(vid, None)
            if rt.entity is not None:
                rt.entity.reset()
        self.departures.append(self.t)
        self._converged_since_reset = False
        self._reset_time = self.t

    def _record_departure_stats(self):
        lims = [m.consensus.a_min_forced for m in self.members()]
        if lims and self.summary.spread_before_departure is None:
            self.summary.spread_before_departure = max(lims) - min(lims)
            self.summary.limit_before_departure = float(np.mean(lims))

    def _cut_in(self, ev: CutIn):
        if ev.ahead_of not in self.vehicles:
            return
        follower = self.vehicles[ev.ahead_of]
        spec = ev.vehicle
        rear = follower.state.s + ev.gap
        state = VehicleState(rear + spec.params.l, spec.v0)
        self._add_vehicle(spec, state, index=self.order.index(ev.ahead_of))
        behind = self.order[self.order.index(spec.vid) + 1:]
        for vid in behind:
            rt = self.vehicles[vid]
            if rt.member:
                rt.trackers[spec.vid] = CutinTracker.start(self.t, self.env)

    # -- perception
    def sense(self, ego: VehicleRuntime) -> tuple[StateInterval, list]:
        """Noisy ego state and predecessors within sensor range (nearest first).

        Predecessors are measured relative to the ego; their absolute REAR position and
        speed intervals are the Minkowski sums with the ego interval.
        """
        nz = self.scenario.noise
        ego_meas = measure_state(ego.state, nz.ego_s, nz.ego_v, self.rng_noise)
        sensed = []
        i = self.order.index(ego.vid)
        for vid in reversed(self.order[:i]):
            other = self.vehicles[vid]
            gap = other.rear - ego.state.s
            if gap > self.env.s_sensor:
                break
            g = interval_measure(gap, nz.rel_s, self.rng_noise)
            dv = interval_measure(other.state.v - ego.state.v, nz.rel_v, self.rng_noise)
            sensed.append((vid, ego_meas.s + g, (ego_meas.v + dv).clip_lo(0.0)))
        return ego_meas, sensed

    def assumed_params(self, ego: VehicleRuntime, vid) -> VehicleParams:
        msg = ego.mailbox.latest_payload(vid, ParamsBroadcast)
        return WORST_CASE if msg is None else msg.params

    def preceding_infos(self, ego: VehicleRuntime, sensed: list, leader_limits=None) -> list[PrecedingInfo]:
        """Predecessor views after vehicle elimination behind a coupled direct predecessor."""
        if leader_limits is None:
            leader_limits = ego.consensus.leader_limits
        if sensed and sensed[0][0] in ego.L:
            sensed = sensed[:1]
        out = []
        for vid, rear, v in sensed:
            p = self.assumed_params(ego, vid)
            if vid in ego.L and vid in leader_limits:
                a_min = leader_limits[vid][0]
            else:
                a_min = p.a_dec
            tr = ego.trackers.get(vid)
            if tr is not None and tr.remaining(self.t, self.env.t_C) <= 0:
                tr = None
            out.append(PrecedingInfo(vid, StateInterval(rear + p.l, v), p, a_min, tr, self.t))
        return out

    def collision_positions(self, ego: VehicleRuntime, preds: list[PrecedingInfo]) -> list[float]:
        pos = [collision_pos(ego.mailbox, p.vehicle_id) for p in preds]
        return [x for x in pos if math.isfinite(x)]

    # -- protocol
    def planning_step(self, ego: VehicleRuntime) -> PlanOutcome:
        """Safety protocol of one vehicle for the current tick."""
        t0 = time.perf_counter()
        env, p = self.env, ego.params
        ego_meas, sensed = self.sense(ego)
        out = PlanOutcome(a_d=0.0)
        outbox: list[Envelope] = []
        pred_id, succ_id = self.direct_pred(ego.vid), self.direct_succ(ego.vid)
        newly_coupled = set(ego.L)
        ego.L, ego.F, cpl = coupling_step(ego.vid, ego.mailbox, ego.L, ego.F, pred_id, succ_id, self.t)
        outbox += cpl
        for l in ego.L - newly_coupled:
            lp = self.assumed_params(ego, l)
            ego.consensus.couple_leader(l, lp.a_dec)
        outbox.append(Envelope(ego.vid, self.t, ParamsBroadcast(p)))

        trans_bound = math.inf
        if self.scenario.consensus:
            if ego.entity is not None:
                peers = []
                for n in sorted(ego.L | ego.F, key=str):
                    msg = ego.mailbox.latest_payload(n, EntityValue)
                    if msg is not None:
                        peers.append((msg.epoch, msg.value))
                ego.entity.observe(peers)
            verifier = PlanningVerifier(self, ego, ego_meas, sensed)
            trans_bound, cons_out = safe_consensus(
                ego.consensus, self.t, [s[0] for s in sensed], sorted(ego.L, key=str), sorted(ego.F, key=str),
                ego.mailbox, ego.entity, verifier, ego.last_applied, self.dt,
                recheck_limit_safety=self.recheck_limit_safety)
            outbox += [Envelope(ego.vid, self.t, o.payload, o.recipient) for o in cons_out]
            if ego.entity is not None:
                epoch, target = ego.entity.message()
                outbox.append(Envelope(ego.vid, self.t, EntityValue(epoch, target)))
            out.transition = math.isfinite(trans_bound)

        a_min_ego = ego.consensus.a_min_forced
        preds = self.preceding_infos(ego, sensed)

        # cut-in handling: clear trackers once the safe distance is back, then recapture
        recap_bound = math.inf
        for info in preds:
            tr = info.cutin
            if tr is None:
                continue
            if verify(NEG_INF, a_min_ego, [info.without_cutin()], [], ego_meas, p, env,
                      include_sensor=False).safe:
                cutin_update(tr, tr.a_min_observed, True, self.t)
                continue
            plan = recap(ego_meas, info, tr.remaining(self.t, env.t_C), p, env, a_prev=ego.last_applied,
                         a_min_ego=a_min_ego)
            recap_bound = min(recap_bound, plan.first if plan.feasible else NEG_INF)
            out.recap = True
        preds = [i if i.cutin is None or not i.cutin.cleared else i.without_cutin() for i in preds]

        if ego.full_brake:
            a_nom = NEG_INF
        else:
            a_nom = nominal_cacc(ego_meas, preds, ego.target_speed, ego.spec.headway, params=p, a_dec=a_min_ego)
        a_d = min(a_nom, recap_bound, trans_bound)

        coll = self.collision_positions(ego, preds)
        out.alerts_seen = len(coll)
        lowers = [predecessor_lower(i, env) for i in preds]
        res = verify(a_d, a_min_ego, preds, coll, ego_meas, p, env, pred_lowers=lowers)
        if not res.safe:
            fs = fail_safe(res.limit_sequence, ego_meas, a_min_ego, p, env, self.fail_safe_cfg)
            if fs is None:
                up = upper_pos(ego_meas, [NEG_INF], a_min_ego, p, env).positions
                k_coll = first_violation(up, res.limit_sequence)
                k_coll = len(up) - 1 if k_coll is None else k_coll
                s_coll = float(up[min(k_coll, len(up) - 1)]) - p.l
                outbox.append(Envelope(ego.vid, self.t, CollisionAlert(s_coll)))
                ego.alert_active = True
                ego.withdraw_left = 0
                out.alert = True
                self.summary.alerts_sent += 1
                a_d = NEG_INF
            else:
                a_d = fs
                out.fail_safe = True
                self.summary.fail_safe_inputs.append(fs)
        if not out.alert and ego.alert_active:
            ego.alert_active = False
            ego.withdraw_left = WITHDRAW_REPEATS
        if ego.withdraw_left > 0:
            outbox.append(Envelope(ego.vid, self.t, AlertWithdraw()))
            ego.withdraw_left -= 1

        if self.log_safe_distance and preds:
            out.safe_distance = safe_distance(ego_meas, preds[0].without_cutin(), a_min_ego, p, env)
        out.a_d = a_d
        out.outbox = outbox
        out.plan_time = time.perf_counter() - t0
        return out

    def scripted_input(self, rt: VehicleRuntime) -> float:
        if rt.full_brake:
            return NEG_INF
        a = None
        for t_start, val in rt.spec.profile:
            if t_start <= self.t + 1e-9:
                a = val
        if a is None:
            a = P_GAIN_CRUISE * (rt.target_speed - rt.state.v)
        return a

    # -- checks
    def _check_safe_distances(self):
        """Full braking from the TRUE states is verified safe w.r.t. the direct predecessor."""
        for i, vid in enumerate(self.order):
            ego = self.vehicles[vid]
            if i == 0 or not ego.member:
                continue
            pid = self.order[i - 1]
            tr = ego.trackers.get(pid)
            if tr is not None and tr.remaining(self.t, self.env.t_C) > 0:
                continue
            pred = self.vehicles[pid]
            pp = self.assumed_params(ego, pid)
            a_min = ego.consensus.leader_limits[pid][0] if pid in ego.L and pid in ego.consensus.leader_limits \
                else pp.a_dec
            info = PrecedingInfo(pid, StateInterval.exact(VehicleState(pred.rear + pp.l, pred.state.v)), pp, a_min)
            ok = verify(NEG_INF, ego.consensus.a_min_forced, [info], [], StateInterval.exact(ego.state), ego.params,
                        self.env, include_sensor=False).safe
            self.summary.safe_distance_checks += 1
            if not ok:
                self.summary.safe_distance_violations += 1

    def _check_limit_invariance(self):
        for f in self.members():
            for l, (a, _) in f.consensus.leader_limits.items():
                leader = self.vehicles.get(l)
                if leader is not None and leader.member and a > leader.consensus.a_min_forced:
                    self.summary.invariant_violations += 1

    def _track_convergence(self):
        ms = self.members()
        if not self.scenario.consensus or len(ms) < 2 or self._converged_since_reset:
            return
        lims = [m.consensus.a_min_forced for m in ms]
        targets = [m.entity.target for m in ms if m.entity is not None]
        if max(lims) - min(lims) < 0.01 and max(targets) - min(targets) < 0.01:
            self._converged_since_reset = True
            if not self.departures:
                self.summary.convergence_time = self.t
            elif self.summary.reconvergence_time is None:
                self.summary.reconvergence_time = self.t

    # -- main loop
    def step(self) -> None:
        self._apply_events()
        if self.check_safe_distance and self.k > 0:
            self._check_safe_distances()
        outcomes: dict[str, PlanOutcome] = {}
        inputs: dict[str, float] = {}
        tick_time = 0.0
        for vid in self.order:
            rt = self.vehicles[vid]
            if rt.member:
                oc = self.planning_step(rt)
                outcomes[vid] = oc
                inputs[vid] = oc.a_d
                tick_time += oc.plan_time
                self.summary.vehicle_plan_times.append(oc.plan_time)
            else:
                inputs[vid] = self.scripted_input(rt)
        self.summary.plan_times.append(tick_time)
        self._exchange(outcomes)
        self._check_limit_invariance()
        self._track_convergence()
        self._advance(inputs, outcomes)
        self.k += 1
        self.summary.steps = self.k

    def _exchange(self, outcomes: dict):
        sends = []
        member_ids = [v for v in self.order if self.vehicles[v].member]
        for vid, oc in outcomes.items():
            s_send = self.vehicles[vid].state.s
            for env_ in oc.outbox:
                if env_.recipient is not None:
                    if env_.recipient in self.vehicles:
                        sends.append(Delivery(env_.recipient, env_))
                    continue
                for r in member_ids:
                    if r != vid and abs(self.vehicles[r].state.s - s_send) <= self.env.s_sensor:
                        sends.append(Delivery(r, env_))
        for d in self.channel.step(sends, self.k):
            rt = self.vehicles.get(d.recipient)
            if rt is not None and d.envelope.sender in self.vehicles:
                rt.mailbox.ingest([d.envelope])

    def _advance(self, inputs: dict, outcomes: dict):
        n_sub = DEFAULT_SUBSTEPS
        w_lo, w_hi = self.env.w.lo, self.env.w.hi
        sigma = 0.25 * (w_hi - w_lo)
        subs = {}
        old = {vid: self.vehicles[vid].state for vid in self.order}
        for vid in self.order:
            rt = self.vehicles[vid]
            w = float(np.clip(self.rng_dist.normal(0.0, sigma), w_lo, w_hi)) if sigma > 0 else 0.0
            a_d = inputs[vid]
            traj = np.empty(n_sub + 1)
            traj[0] = rt.state.s
            accs = []

            def rec(tau, st, acc, traj=traj, accs=accs):
                traj[len(accs) + 1] = st.s
                accs.append(acc)

            clamped = true_accel(rt.state.s, rt.state.v, a_d, 0.0, rt.params, rt.a_min, self.env, self.true_env)
            new = advance(rt.state, a_d, w, rt.params, rt.a_min, self.env, self.true_env, self.dt, n_sub, rec)
            subs[vid] = traj
            a_applied = (new.v - rt.state.v) / self.dt
            rt.last_applied = clamped
            rt.min_sub_accel = min(accs)
            oc = outcomes.get(vid)
            self.logs.append(StepLog(
                t=self.t, vid=vid, s=old[vid].s, v=old[vid].v, a_applied=a_applied, a_d=a_d,
                a_min_forced=rt.a_min, fail_safe=bool(oc and oc.fail_safe), recap=bool(oc and oc.recap),
                transition=bool(oc and oc.transition), safe_distance=oc.safe_distance if oc else math.nan,
                alerts=oc.alerts_seen if oc else 0))
            rt.state = new
        # observed braking of cut-in vehicles
        for rt in self.vehicles.values():
            for vid, tr in rt.trackers.items():
                if vid in self.vehicles and not tr.cleared:
                    cutin_update(tr, self.vehicles[vid].min_sub_accel, False, self.t)
        # front-rear overlap at every substep
        for lead, follow in zip(self.order, self.order[1:]):
            gap = subs[lead] - self.vehicles[lead].params.l - subs[follow]
            g = float(gap.min())
            key = f"{lead}->{follow}"
            self.summary.min_gaps[key] = min(self.summary.min_gaps.get(key, math.inf), g)
            if g < 0 and key not in self.summary.collision_pairs:
                self.summary.collision_pairs.append(key)
                self.summary.collisions += 1
                if self.summary.first_collision_step is None:
                    self.summary.first_collision_step = self.k

    def finish(self) -> RunSummary:
        self.summary.final_limits = {m.vid: m.consensus.a_min_forced for m in self.members()}
        return self.summary


def cutin_update(tracker: CutinTracker, observed_a: float, gap_ok: bool, t: float) -> CutinTracker:
    """Tighten the assumed cut-in deceleration and end the clearing window once the gap is safe."""
    tracker.a_min_observed = min(tracker.a_min_observed, observed_a)
    if gap_ok:
        tracker.cleared = True
    return tracker


def run(scenario: Scenario, *, log_safe_distance: bool = True, check_safe_distance: bool = True,
        recheck_limit_safety: bool = False, duration: Optional[float] = None) -> tuple[list[StepLog], RunSummary]:
    world = World(scenario, log_safe_distance=log_safe_distance, check_safe_distance=check_safe_distance,
                  recheck_limit_safety=recheck_limit_safety)
    n = int(round((scenario.duration if duration is None else duration) / world.dt))
    for _ in range(n):
        world.step()
    return world.logs, world.finish()


def run_world(scenario: Scenario, **kw) -> World:
    """Like :func:`run` but returns the world (channel trace, final states)."""
    world = World(scenario, **kw)
    n = int(round(scenario.duration / world.dt))
    for _ in range(n):
        world.step()
    world.finish()
    return world


def write_steps_csv(logs: Sequence[StepLog], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(StepLog.COLUMNS)
        for r in logs:
            w.writerow([_fmt(getattr(r, c)) if c != "vid" else r.vid for c in StepLog.COLUMNS])


def write_summary_csv(summary: RunSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerows(summary.as_rows())
