"""Simulated V2V messaging: payloads, newest-wins mailboxes, a lossy channel and coupling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional

import numpy as np

from .types import VehicleParams

VehicleId = Hashable


@dataclass(frozen=True)
class ProtocolBeacon:
    pass


@dataclass(frozen=True)
class FollowRequest:
    pass


@dataclass(frozen=True)
class FollowConfirm:
    pass


@dataclass(frozen=True)
class ParamsBroadcast:
    params: VehicleParams


@dataclass(frozen=True)
class BrakingLimit:
    a: float
    label: float


@dataclass(frozen=True)
class Confirmation:
    a: float
    label: float


@dataclass(frozen=True)
class CollisionAlert:
    s_coll: float  # predicted rear position of the sender


@dataclass(frozen=True)
class AlertWithdraw:
    pass


@dataclass(frozen=True)
class EntityValue:
    """Consensus-entity gossip; outside the safety contract."""

    epoch: int
    value: float


PAYLOAD_TYPES = (ProtocolBeacon, FollowRequest, FollowConfirm, ParamsBroadcast, BrakingLimit, Confirmation,
                 CollisionAlert, AlertWithdraw, EntityValue)


def lane_of(payload_or_type) -> str:
    """Freshness lane; an alert and its withdrawal share one lane."""
    t = payload_or_type if isinstance(payload_or_type, type) else type(payload_or_type)
    if t in (CollisionAlert, AlertWithdraw):
        return "alert"
    return t.__name__


@dataclass(frozen=True)
class Envelope:
    sender: VehicleId
    send_time: float
    payload: object
    recipient: Optional[VehicleId] = None  # None: broadcast

    @property
    def kind(self) -> str:
        return type(self.payload).__name__


class Mailbox:
    """Per-vehicle cache holding the newest envelope per (sender, lane).

    Arrivals not strictly newer than the newest one seen on their lane are discarded,
    including after the cached envelope was consumed with :meth:`take`.
    """

    def __init__(self):
        self._latest: dict = {}
        self._seen: dict = {}

    def ingest(self, envelopes: Iterable[Envelope]) -> "Mailbox":
        for env in envelopes:
            key = (env.sender, lane_of(env.payload))
            if key in self._seen and env.send_time <= self._seen[key]:
                continue
            self._seen[key] = env.send_time
            self._latest[key] = env
        return self

    def latest(self, sender: VehicleId, kind: type) -> Optional[Envelope]:
        env = self._latest.get((sender, lane_of(kind)))
        if env is None or not isinstance(env.payload, kind):
            return None
        return env

    def latest_payload(self, sender: VehicleId, kind: type):
        env = self.latest(sender, kind)
        return None if env is None else env.payload

    def take(self, sender: VehicleId, kind: type) -> Optional[Envelope]:
        env = self.latest(sender, kind)
        if env is not None:
            del self._latest[(sender, lane_of(kind))]
        return env

    def seen_time(self, sender: VehicleId, kind: type) -> Optional[float]:
        return self._seen.get((sender, lane_of(kind)))

    def senders(self, kind: type) -> list:
        lane = lane_of(kind)
        return [s for (s, ln), env in self._latest.items() if ln == lane and isinstance(env.payload, kind)]

    def forget(self, sender: VehicleId):
        for key in [k for k in self._latest if k[0] == sender]:
            del self._latest[key]


def mailbox_ingest(mb: Mailbox, delivered: Iterable[Envelope]) -> Mailbox:
    return mb.ingest(delivered)


def collision_pos(mb: Mailbox, j: VehicleId) -> float:
    alert = mb.latest_payload(j, CollisionAlert)
    return math.inf if alert is None else alert.s_coll


@dataclass(frozen=True)
class ChannelConfig:
    drop_prob: float = 0.0
    delay_steps: tuple[int, int] = (0, 0)
    duplicate_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.drop_prob <= 1.0 and 0.0 <= self.duplicate_prob <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        lo, hi = self.delay_steps
        if not (0 <= lo <= hi):
            raise ValueError("delay_steps must satisfy 0 <= lo <= hi")


@dataclass(frozen=True)
class Delivery:
    recipient: VehicleId
    envelope: Envelope


@dataclass
class TraceRecord:
    sender: VehicleId
    recipient: VehicleId
    kind: str
    send_step: int
    deliver_step: Optional[int]  # None: dropped


@dataclass
class InFlight:
    deliver_step: int
    seq: int
    delivery: Delivery


def channel_step(pending: list[InFlight], new_sends: Iterable[Delivery], cfg: ChannelConfig, now_step: int,
                 rng: np.random.Generator, trace: Optional[list] = None) -> tuple[list[Delivery], list[InFlight]]:
    """Apply drop/duplicate/delay to ``new_sends`` and release everything due at ``now_step``.

    Deliveries keep their send order among equal delivery steps.
    """
    seq = max((p.seq for p in pending), default=-1) + 1
    pending = list(pending)
    lo, hi = cfg.delay_steps
    for d in new_sends:
        copies = 2 if cfg.duplicate_prob > 0 and rng.random() < cfg.duplicate_prob else 1
        for _ in range(copies):
            if cfg.drop_prob > 0 and rng.random() < cfg.drop_prob:
                deliver = None
            else:
                deliver = now_step + (int(rng.integers(lo, hi + 1)) if hi > lo else lo)
                pending.append(InFlight(deliver, seq, d))
                seq += 1
            if trace is not None:
                trace.append(TraceRecord(d.envelope.sender, d.recipient, d.envelope.kind, now_step, deliver))
    due = sorted((p for p in pending if p.deliver_step <= now_step), key=lambda p: (p.deliver_step, p.seq))
    rest = [p for p in pending if p.deliver_step > now_step]
    return [p.delivery for p in due], rest


@dataclass
class Channel:
    cfg: ChannelConfig = field(default_factory=ChannelConfig)
    keep_trace: bool = True
    pending: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.cfg.seed)

    def step(self, new_sends: Iterable[Delivery], now_step: int) -> list[Delivery]:
        delivered, self.pending = channel_step(self.pending, new_sends, self.cfg, now_step, self.rng,
                                               self.trace if self.keep_trace else None)
        return delivered

    def write_trace(self, path) -> None:
        write_trace_csv(self.trace, path)


def write_trace_csv(trace: Iterable[TraceRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sender", "recipient", "kind", "send_step", "deliver_step"])
        for r in trace:
            w.writerow([r.sender, r.recipient, r.kind, r.send_step,
                        "DROPPED" if r.deliver_step is None else r.deliver_step])


def coupling_step(vehicle: VehicleId, mb: Mailbox, L: set, F: set, pred: Optional[VehicleId],
                  succ: Optional[VehicleId], t: float) -> tuple[set, set, list[Envelope]]:
    """One round of the follow handshake with the direct predecessor ``pred`` and successor ``succ``.

    A vehicle requests to follow a predecessor whose protocol beacon it has received, and
    confirms a request from its direct successor. The follower only counts the leader as
    coupled after the confirmation arrives.
    """
    L, F = set(L), set(F)
    out = [Envelope(vehicle, t, ProtocolBeacon())]
    if pred is not None and pred not in L:
        if mb.take(pred, FollowConfirm) is not None:
            L.add(pred)
        elif mb.latest(pred, ProtocolBeacon) is not None:
            out.append(Envelope(vehicle, t, FollowRequest(), recipient=pred))
    if succ is not None and mb.take(succ, FollowRequest) is not None:
        # also re-confirm if an earlier confirmation was lost
        F.add(succ)
        out.append(Envelope(vehicle, t, FollowConfirm(), recipient=succ))
    return L, F, out
