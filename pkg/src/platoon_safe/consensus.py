"""Safe adoption of consensus braking limits under lossy, delayed communication.

Each vehicle runs :func:`safe_consensus` once per planning step. A stronger limit from the
consensus entity becomes a candidate that is adopted only after every coupled follower
confirmed it is safe; a weaker limit is adopted once the ego is verified safe with it
w.r.t. its predecessors. Failed verifications activate a transition phase that lowers the
admissible input with a jerk sequence until verification succeeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional, Protocol, Sequence

from .network import BrakingLimit, Confirmation, Mailbox

VehicleId = Hashable
NO_LABEL = -1.0


class InvariantViolation(AssertionError):
    pass


def default_jerk_seq(n: int = 10) -> tuple[float, ...]:
    """j_k = -1 - k m/s^3, capped at -10."""
    return tuple(max(-1.0 - k, -10.0) for k in range(n))


@dataclass
class TransitionState:
    active: bool = False
    a_trans: float = 0.0
    c: int = -1
    jerk_seq: tuple[float, ...] = field(default_factory=default_jerk_seq)

    def __post_init__(self):
        js = self.jerk_seq
        if not js or any(j >= 0 for j in js) or any(b > a for a, b in zip(js, js[1:])):
            raise ValueError("jerk sequence must be negative and non-increasing")

    def jerk(self, k: int) -> float:
        return self.jerk_seq[min(k, len(self.jerk_seq) - 1)]


def transition_bound(ts: TransitionState, last_applied_a: float, dt_p: float) -> tuple[float, TransitionState]:
    """Upper bound on the input for this step; ``inf`` while the transition is inactive."""
    if not ts.active:
        ts.c = -1
        ts.a_trans = last_applied_a
        return math.inf, ts
    if ts.c < 0:
        ts.a_trans = last_applied_a
    ts.c += 1
    ts.a_trans += dt_p * ts.jerk(ts.c)
    return ts.a_trans, ts


@dataclass
class ConsensusState:
    a_min_forced: float
    a_cand: Optional[float] = None
    t_accept: float = 0.0
    leader_limits: dict = field(default_factory=dict)  # leader id -> (a, label)
    follower_confirms: dict = field(default_factory=dict)  # follower id -> (a, label)
    transition: TransitionState = field(default_factory=TransitionState)
    last_sent: Optional[float] = None
    cand_discards: int = 0  # candidates dropped by a non-stronger entity output
    adoptions: int = 0

    def check_candidate_not_weaker(self):
        if self.a_cand is not None and not self.a_cand <= self.a_min_forced:
            raise InvariantViolation(f"candidate {self.a_cand} above braking limit {self.a_min_forced}")

    def couple_leader(self, leader: VehicleId, a_initial: float):
        """Initial stored limit of a freshly coupled leader (must not exceed its real limit)."""
        self.leader_limits.setdefault(leader, (a_initial, NO_LABEL))

    def forget(self, vehicle: VehicleId):
        self.leader_limits.pop(vehicle, None)
        self.follower_confirms.pop(vehicle, None)


class ConsensusEntity(Protocol):
    def next_limit(self) -> float: ...


class Verifier(Protocol):
    def ego_safe(self, a_min_ego: float, leader_limits: Mapping) -> bool:
        """Full braking of the ego with ``a_min_ego`` is safe w.r.t. all predecessors."""

    def leader_safe(self, leader: VehicleId, a_leader: float, a_min_ego: float) -> bool:
        """Full braking of the ego is safe w.r.t. ``leader`` braking with ``a_leader``."""


@dataclass
class ReferenceEntity:
    """Max-consensus toward the weakest member limit with a platoon-wide reset.

    Peers exchange ``(epoch, target)``; the output approaches the target geometrically and
    snaps to it once closer than ``snap``.
    """

    own: float
    rate: float = 0.5
    snap: float = 1e-3
    epoch: int = 0
    target: Optional[float] = None
    output: Optional[float] = None

    def __post_init__(self):
        if self.target is None:
            self.target = self.own
        if self.output is None:
            self.output = self.own

    def observe(self, peers: Iterable) -> None:
        for item in peers:
            epoch, value = item if isinstance(item, tuple) else (self.epoch, item)
            if epoch > self.epoch:
                self.epoch = epoch
                self.target = max(self.own, value)
            elif epoch == self.epoch:
                self.target = max(self.target, value)

    def reset(self) -> None:
        self.epoch += 1
        self.target = self.own

    def next_limit(self) -> float:
        self.output += self.rate * (self.target - self.output)
        if abs(self.target - self.output) < self.snap:
            self.output = self.target
        return self.output

    @property
    def converged(self) -> bool:
        return self.output == self.target

    def message(self) -> tuple[int, float]:
        return (self.epoch, self.target)


def reference_entity_step(entity: ReferenceEntity, peer_limits: Iterable) -> float:
    entity.observe(peer_limits)
    return entity.next_limit()


@dataclass
class ScriptedEntity:
    """Replays a fixed sequence of limits (last value held)."""

    values: Sequence[float]
    k: int = 0

    def next_limit(self) -> float:
        v = self.values[min(self.k, len(self.values) - 1)]
        self.k += 1
        return v


@dataclass
class Outgoing:
    recipient: Optional[VehicleId]  # None: broadcast
    payload: object


def _set_t_accept(state: ConsensusState, t: float):
    if t < state.t_accept:
        raise InvariantViolation(f"t_accept decreased from {state.t_accept} to {t}")
    state.t_accept = t


def _clear_candidate(state: ConsensusState, t: float):
    state.a_cand = None
    _set_t_accept(state, t)


def safe_consensus(state: ConsensusState, t: float, X: Sequence[VehicleId], L: Iterable[VehicleId],
                   F: Iterable[VehicleId], inbox: Mailbox, entity: ConsensusEntity, verifier: Verifier,
                   last_applied_a: float, dt_p: float, *, recheck_limit_safety: bool = False
                   ) -> tuple[float, list[Outgoing]]:
    """One execution of the braking-limit protocol at time ``t``.

    Mutates ``state`` and returns the transition bound (``inf`` when inactive) and the
    messages to send. ``X`` is accepted for symmetry with the planning step; the set of
    predecessors is captured by ``verifier``. ``recheck_limit_safety`` re-runs verification at
    every limit change to assert that safety is preserved.
    """
    L = list(L)
    F = list(F)
    outbox: list[Outgoing] = []
    ts = state.transition
    ts.active = False

    # Block 1: apply the consensus entity
    a_new = entity.next_limit()
    cand_old = state.a_cand
    if a_new < state.a_min_forced:
        state.a_cand = a_new
    else:
        if state.a_cand is not None:
            state.cand_discards += 1
        _clear_candidate(state, t)
        if verifier.ego_safe(a_new, state.leader_limits):
            old = state.a_min_forced
            if a_new < old:
                raise InvariantViolation("braking limit decreased on the verified path")
            state.a_min_forced = a_new
            if a_new != old:
                state.adoptions += 1
        else:
            ts.active = True
    state.check_candidate_not_weaker()

    # Block 2: limits received from coupled leaders
    for l in L:
        msg = inbox.latest_payload(l, BrakingLimit)
        if msg is None:
            continue
        stored_a, _ = state.leader_limits.get(l, (-math.inf, NO_LABEL))
        safe = True
        if msg.a < stored_a:
            safe = verifier.leader_safe(l, msg.a, state.a_min_forced)
        if safe:
            if recheck_limit_safety and msg.a != stored_a and math.isfinite(stored_a):
                if verifier.leader_safe(l, stored_a, state.a_min_forced) and not verifier.leader_safe(
                        l, msg.a, state.a_min_forced):
                    raise InvariantViolation(f"leader limit update {stored_a} -> {msg.a} lost safety")
            state.leader_limits[l] = (msg.a, msg.label)
        else:
            ts.active = True

    # Block 3: confirmations from coupled followers
    confirmed = []
    for f in F:
        conf = inbox.latest_payload(f, Confirmation)
        if conf is not None:
            state.follower_confirms[f] = (conf.a, conf.label)
        a_f, label_f = state.follower_confirms.get(f, (math.inf, NO_LABEL))
        if label_f >= state.t_accept and a_f <= state.a_min_forced:
            confirmed.append(a_f)
    if state.a_cand is not None and len(confirmed) == len(F):
        a_conf = max(confirmed + [state.a_cand])
        old = state.a_min_forced
        if a_conf > old:
            raise InvariantViolation("braking limit increased by confirmations")
        if recheck_limit_safety and a_conf != old:
            if verifier.ego_safe(old, state.leader_limits) and not verifier.ego_safe(a_conf, state.leader_limits):
                raise InvariantViolation(f"ego limit update {old} -> {a_conf} lost safety")
        state.a_min_forced = a_conf
        if a_conf != old:
            state.adoptions += 1
        if state.a_cand == state.a_min_forced:
            _clear_candidate(state, t)
    state.check_candidate_not_weaker()

    # Block 4: send confirmations and the limit/candidate
    for l in L:
        if l in state.leader_limits:
            a_l, label = state.leader_limits[l]
            outbox.append(Outgoing(l, Confirmation(a_l, label)))
    if state.a_cand is not None and cand_old is not None and state.a_cand > cand_old:
        _set_t_accept(state, t)
    a_to_send = state.a_cand if state.a_cand is not None else state.a_min_forced
    state.last_sent = a_to_send
    outbox.append(Outgoing(None, BrakingLimit(a_to_send, t)))
    bound, _ = transition_bound(ts, last_applied_a, dt_p)
    return bound, outbox
