import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_safe.network import (AlertWithdraw, BrakingLimit, Channel, ChannelConfig, CollisionAlert, Delivery,
                                  Envelope, FollowConfirm, FollowRequest, Mailbox, ParamsBroadcast, ProtocolBeacon,
                                  channel_step, collision_pos, coupling_step, lane_of, mailbox_ingest)
from platoon_safe.types import P0


def env(sender, t, payload, recipient=None):
    return Envelope(sender, t, payload, recipient)


def test_newest_wins_per_sender_and_lane():
    mb = Mailbox()
    mailbox_ingest(mb, [env("a", 1.0, BrakingLimit(-5, 1.0)), env("a", 0.5, BrakingLimit(-6, 0.5))])
    assert mb.latest_payload("a", BrakingLimit).a == -5
    mb.ingest([env("a", 2.0, BrakingLimit(-7, 2.0))])
    assert mb.latest_payload("a", BrakingLimit).a == -7
    mb.ingest([env("a", 2.0, BrakingLimit(-8, 2.0))])  # equal time: not newer
    assert mb.latest_payload("a", BrakingLimit).a == -7


def test_lanes_are_independent_and_alert_shares_lane_with_withdraw():
    assert lane_of(CollisionAlert(1.0)) == lane_of(AlertWithdraw) == "alert"
    mb = Mailbox().ingest([env("a", 1.0, CollisionAlert(50.0)), env("a", 1.0, ParamsBroadcast(P0))])
    assert collision_pos(mb, "a") == 50.0
    assert mb.latest_payload("a", ParamsBroadcast).params == P0
    mb.ingest([env("a", 2.0, AlertWithdraw())])
    assert collision_pos(mb, "a") == math.inf
    mb.ingest([env("a", 1.5, CollisionAlert(40.0))])  # older than the withdrawal
    assert collision_pos(mb, "a") == math.inf


def test_collision_pos_unknown_sender():
    assert collision_pos(Mailbox(), "zz") == math.inf


def test_take_consumes_but_remembers_freshness():
    mb = Mailbox().ingest([env("a", 1.0, FollowRequest())])
    assert mb.take("a", FollowRequest) is not None
    assert mb.take("a", FollowRequest) is None
    mb.ingest([env("a", 1.0, FollowRequest())])  # replayed duplicate
    assert mb.latest("a", FollowRequest) is None
    assert mb.seen_time("a", FollowRequest) == 1.0


def test_senders_and_forget():
    mb = Mailbox().ingest([env("a", 0.0, ProtocolBeacon()), env("b", 0.0, ProtocolBeacon()),
                           env("a", 0.0, BrakingLimit(-1, 0))])
    assert sorted(mb.senders(ProtocolBeacon)) == ["a", "b"]
    mb.forget("a")
    assert mb.senders(ProtocolBeacon) == ["b"] and mb.latest("a", BrakingLimit) is None


@given(st.lists(st.tuples(st.sampled_from("abc"), st.floats(0, 100), st.floats(-10, 0)), max_size=30))
def test_mailbox_keeps_maximum_send_time(msgs):
    mb = Mailbox().ingest(env(s, t, BrakingLimit(a, t)) for s, t, a in msgs)
    for s in "abc":
        times = [t for ss, t, _ in msgs if ss == s]
        got = mb.latest(s, BrakingLimit)
        assert (got is None) == (not times)
        if times:
            assert got.send_time == max(times)


def test_channel_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(drop_prob=1.5)
    with pytest.raises(ValueError):
        ChannelConfig(delay_steps=(3, 1))


def deliveries(n):
    return [Delivery("r", env("s", float(k), BrakingLimit(-1, k))) for k in range(n)]


def test_perfect_channel_delivers_in_order_immediately():
    out, pending = channel_step([], deliveries(5), ChannelConfig(), 0, np.random.default_rng(0))
    assert [d.envelope.send_time for d in out] == [0, 1, 2, 3, 4] and pending == []


def test_fixed_delay():
    rng = np.random.default_rng(0)
    out, pending = channel_step([], deliveries(2), ChannelConfig(delay_steps=(2, 2)), 0, rng)
    assert out == [] and len(pending) == 2
    out, pending = channel_step(pending, [], ChannelConfig(delay_steps=(2, 2)), 1, rng)
    assert out == []
    out, pending = channel_step(pending, [], ChannelConfig(delay_steps=(2, 2)), 2, rng)
    assert len(out) == 2 and pending == []


def test_drop_everything_and_trace():
    trace = []
    out, pending = channel_step([], deliveries(3), ChannelConfig(drop_prob=1.0), 4, np.random.default_rng(0),
                                trace)
    assert out == [] and pending == []
    assert [r.deliver_step for r in trace] == [None] * 3 and trace[0].send_step == 4


def test_duplicates():
    out, _ = channel_step([], deliveries(4), ChannelConfig(duplicate_prob=1.0), 0, np.random.default_rng(0))
    assert len(out) == 8


@settings(max_examples=30)
@given(st.floats(0, 1), st.integers(0, 5), st.integers(0, 5), st.integers(0, 1000))
def test_channel_conserves_messages(drop, lo, extra, seed):
    cfg = ChannelConfig(drop_prob=drop, delay_steps=(lo, lo + extra))
    rng = np.random.default_rng(seed)
    trace, got, pending = [], 0, []
    for k in range(20):
        out, pending = channel_step(pending, deliveries(3) if k < 10 else [], cfg, k, rng, trace)
        got += len(out)
    delivered = [r for r in trace if r.deliver_step is not None]
    assert got == len(delivered) and not pending
    assert all(lo <= r.deliver_step - r.send_step <= lo + extra for r in delivered)


def test_channel_trace_csv(tmp_path):
    ch = Channel(ChannelConfig(drop_prob=0.5, seed=1))
    for k in range(5):
        ch.step(deliveries(2), k)
    path = tmp_path / "trace.csv"
    ch.write_trace(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["sender", "recipient", "kind", "send_step", "deliver_step"]
    assert len(rows) == 11 and {r[2] for r in rows[1:]} == {"BrakingLimit"}


def test_channel_is_deterministic_under_seed():
    def run():
        ch = Channel(ChannelConfig(drop_prob=0.3, delay_steps=(0, 3), seed=9))
        return [[d.envelope.send_time for d in ch.step(deliveries(4), k)] for k in range(8)]
    assert run() == run()


def test_coupling_handshake_within_three_steps():
    L_f, F_f, L_l, F_l = set(), set(), set(), set()
    box_f, box_l = Mailbox(), Mailbox()
    for k in range(3):
        t = float(k)
        L_f, F_f, out_f = coupling_step("f", box_f, L_f, F_f, pred="l", succ=None, t=t)
        L_l, F_l, out_l = coupling_step("l", box_l, L_l, F_l, pred=None, succ="f", t=t)
        box_l.ingest(e for e in out_f if e.recipient in (None, "l"))
        box_f.ingest(e for e in out_l if e.recipient in (None, "f"))
    # three exchanges: beacon, request, confirm; the follower reads the confirm on its next step
    assert F_l == {"f"} and box_f.latest("l", FollowConfirm) is not None
    L_f, F_f, _ = coupling_step("f", box_f, L_f, F_f, pred="l", succ=None, t=3.0)
    assert L_f == {"l"}


def test_total_loss_never_couples():
    cfg = ChannelConfig(drop_prob=1.0)
    ch = Channel(cfg)
    L_f, F_l, box_f, box_l = set(), set(), Mailbox(), Mailbox()
    for k in range(20):
        L_f, _, out_f = coupling_step("f", box_f, L_f, set(), pred="l", succ=None, t=float(k))
        _, F_l, out_l = coupling_step("l", box_l, set(), F_l, pred=None, succ="f", t=float(k))
        sends = [Delivery("l", e) for e in out_f] + [Delivery("f", e) for e in out_l]
        for d in ch.step(sends, k):
            (box_l if d.recipient == "l" else box_f).ingest([d.envelope])
    assert not L_f and not F_l


def test_no_request_without_predecessor_beacon():
    mb = Mailbox().ingest([env("far", 0.0, ProtocolBeacon())])
    _, _, out = coupling_step("f", mb, set(), set(), pred="l", succ=None, t=1.0)
    assert not any(isinstance(e.payload, FollowRequest) for e in out)


def test_coupling_requires_a_beacon():
    L, F, out = coupling_step("f", Mailbox(), set(), set(), pred="l", succ=None, t=0.0)
    assert L == set() and [type(e.payload) for e in out] == [ProtocolBeacon]


def test_coupling_reconfirms_repeated_request():
    mb = Mailbox().ingest([env("f", 1.0, FollowRequest(), "l")])
    _, F, out = coupling_step("l", mb, set(), {"f"}, pred=None, succ="f", t=2.0)
    assert F == {"f"} and any(isinstance(e.payload, FollowConfirm) for e in out)
