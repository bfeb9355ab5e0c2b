"""Randomized property suites for the bounds, the verifier, the consensus protocol and
the fail-safe controller.

Every suite exposes ``make_case(rng) -> dict`` (plain numbers, YAML-serializable) and
``check_case(case, fault) -> Optional[str]`` returning a violation message. ``fault``
switches on a deliberately broken variant so the harness itself can be tested.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np
import yaml

from .consensus import ConsensusState, InvariantViolation, ScriptedEntity, safe_consensus
from .controllers import FailSafeConfig, fail_safe, fail_safe_margin, search_bracket
from .dynamics import NEG_INF, TrueEnv, advance, lower_pos, upper_pos
from .network import ChannelConfig, Delivery, Envelope, Mailbox, channel_step
from .sim import incline_lookup
from .types import PRESETS, EnvParams, Interval, StateInterval, VehicleParams, VehicleState
from .verify import PrecedingInfo, margin, verify

MONO_TOL = 1e-9
MONO_HORIZON = 150
OVERLAP_TOL = 1e-6
CONSENSUS_STEPS_PER_CASE = 100
_ENV = EnvParams()


# ---------------------------------------------------------------- shared helpers

def _params_to_list(p: VehicleParams) -> list[float]:
    return [float(getattr(p, f.name)) for f in fields(VehicleParams)]


def _params_from_list(x) -> VehicleParams:
    return VehicleParams(*x)


def _random_params(rng: np.random.Generator) -> VehicleParams:
    if rng.random() < 0.6:
        name = ["p0", "p1", "p2", "p3", "p4"][int(rng.integers(5))]
        return PRESETS[name]
    return VehicleParams(a_dec=float(rng.uniform(-11, -3)), a_acc=float(rng.uniform(0.5, 4)),
                         v_max=float(rng.uniform(20, 60)), m=float(rng.uniform(1000, 40000)),
                         c=float(rng.uniform(0.2, 1.0)), A=float(rng.uniform(1.5, 10)),
                         l=float(rng.uniform(4, 18)))


def _random_incline(rng: np.random.Generator, env: EnvParams, length: float = 3000.0) -> list[list[float]]:
    n = int(rng.integers(2, 8))
    xs = np.sort(rng.uniform(-200, length, n))
    ys = rng.uniform(env.alpha.lo, env.alpha.hi, n)
    # hit the extremes now and then
    if rng.random() < 0.3:
        ys[int(rng.integers(n))] = env.alpha.lo if rng.random() < 0.5 else env.alpha.hi
    return [[float(x), float(y)] for x, y in zip(xs, ys)]


def _random_interval_around(rng: np.random.Generator, x: float, width: float, floor: Optional[float] = None):
    w = float(rng.uniform(0, width))
    off = float(rng.uniform(-w, 0))
    lo, hi = x + off, x + off + w
    lo, hi = min(lo, x), max(hi, x)
    if floor is not None:
        lo, hi = max(lo, floor), max(hi, floor)
    return [lo, hi]


def _si(c: list) -> StateInterval:
    return StateInterval(Interval(c[0], c[1]), Interval(c[2], c[3]))


# ---------------------------------------------------------------- monotonicity

def mono_make_case(rng: np.random.Generator) -> dict:
    p = _random_params(rng)
    v_true = float(rng.uniform(0, p.v_max))
    s_true = float(rng.uniform(-50, 50))
    s_int = _random_interval_around(rng, s_true, 0.4)
    v_int = _random_interval_around(rng, v_true, 0.3, floor=0.0)
    n_slots = int(rng.integers(1, 12))
    vals = np.sort(rng.uniform(p.a_dec - 1, p.a_acc + 1, n_slots))[::-1]
    inputs = [float(a) for a in vals]
    if rng.random() < 0.5:
        inputs.append(NEG_INF)
    return {
        "params": _params_to_list(p),
        "true_state": [s_true, v_true],
        "meas": s_int + v_int,
        "inputs": inputs,
        "w_seed": int(rng.integers(2 ** 31)),
        "w_mode": ["random", "lo", "hi"][int(rng.integers(3))],
        "incline": _random_incline(rng, _ENV),
        "rho": float(rng.uniform(_ENV.rho.lo, _ENV.rho.hi)),
        "v_wind": float(rng.uniform(_ENV.v_wind.lo, _ENV.v_wind.hi)),
    }


def mono_check_case(case: dict, fault: bool = False) -> Optional[str]:
    p = _params_from_list(case["params"])
    env = _ENV
    meas = _si(case["meas"])
    inputs = case["inputs"]
    # inputs that never brake fully need not stop: compare over a fixed horizon then
    lb = lower_pos(meas, inputs, p.a_dec, p, env, MONO_HORIZON, require_closure=False)
    ub = upper_pos(meas, inputs, p.a_dec, p, env, MONO_HORIZON, require_closure=False)
    low, up = lb.positions + p.l, ub.positions
    if fault:
        up = up - 0.05 * np.arange(len(up))
    closed = len(low) <= MONO_HORIZON and len(up) <= MONO_HORIZON
    n = max(len(low), len(up)) + (2 if closed else 0)
    true_env = TrueEnv(case["rho"], case["v_wind"], incline_lookup(case["incline"]))
    rng = np.random.default_rng(case["w_seed"])
    st = VehicleState(*case["true_state"])
    for k in range(n):
        lo_k = low[min(k, len(low) - 1)]
        up_k = up[min(k, len(up) - 1)]
        if not (lo_k - MONO_TOL <= st.s <= up_k + MONO_TOL):
            return f"step {k}: position {st.s!r} outside [{float(lo_k)!r}, {float(up_k)!r}]"
        mode = case["w_mode"]
        w = env.w.lo if mode == "lo" else env.w.hi if mode == "hi" else float(rng.uniform(env.w.lo, env.w.hi))
        a = inputs[min(k, len(inputs) - 1)]
        st = advance(st, a, w, p, p.a_dec, env, true_env, env.dt_p)
    return None


# ---------------------------------------------------------------- vectorized rollout oracle

def rollout_batch(s0: np.ndarray, v0: np.ndarray, inputs: np.ndarray, w: np.ndarray, params: VehicleParams,
                  a_dec, rho: np.ndarray, v_wind: np.ndarray, incline: list, env: EnvParams,
                  n_sub: int = 10) -> np.ndarray:
    """Integrate R vehicles in parallel; returns positions (R, n_steps*n_sub + 1).

    ``inputs`` and ``w`` are (R, n_steps) per-slot values; ``a_dec`` may be per rollout.
    Independent of the bound kernel: RK4 on the velocity with an exact constant-acceleration stop at v = 0.
    """
    xs = np.array([q[0] for q in incline]) if incline else np.array([0.0])
    ys = np.array([q[1] for q in incline]) if incline else np.array([0.0])
    R, n_steps = inputs.shape
    kd = rho * params.c * params.A / (2 * params.m)
    h = env.dt_p / n_sub
    out = np.empty((R, n_steps * n_sub + 1))
    s, v = s0.astype(float).copy(), v0.astype(float).copy()
    out[:, 0] = s
    col = 1
    for k in range(n_steps):
        a_in, wk = inputs[:, k], w[:, k]

        def acc(s_, v_):
            inc = -env.g * np.sin(np.interp(s_, xs, ys))
            drag = -kd * (v_ + v_wind) ** 2
            a = np.clip(a_in, a_dec + inc + drag, params.a_acc + inc + drag) + wk
            a = np.where((v_ < 0) & (a <= 0), 0.0, a)
            return np.where((v_ >= params.v_max) & (a >= 0), 0.0, a)

        for _ in range(n_sub):
            a1 = acc(s, v)
            k2 = acc(s + 0.5 * h * v, v + 0.5 * h * a1)
            v2 = v + 0.5 * h * a1
            k3 = acc(s + 0.5 * h * v2, v + 0.5 * h * k2)
            v3 = v + 0.5 * h * k2
            k4 = acc(s + h * v3, v + h * k3)
            v4 = v + h * k3
            s_new = s + h / 6 * (v + 2 * v2 + 2 * v3 + v4)
            v_new = v + h / 6 * (a1 + 2 * k2 + 2 * k3 + k4)
            stop = (v_new < 0) | ((a1 < 0) & (v + h * a1 <= 0))
            if stop.any():
                a_s = np.minimum(a1, -1e-12)
                tau = np.clip(v / -a_s, 0, h)
                s_new = np.where(stop, s + v * tau + 0.5 * a_s * tau ** 2, s_new)
                v_new = np.where(stop, 0.0, v_new)
            over = v_new > params.v_max
            if over.any():
                v_new = np.where(over, params.v_max, v_new)
            s, v = s_new, v_new
            out[:, col] = s
            col += 1
    return out


# ---------------------------------------------------------------- verify soundness

def _verify_inputs(case: dict):
    ego_p = _params_from_list(case["ego_params"])
    pred_p = _params_from_list(case["pred_params"])
    ego_meas = _si(case["ego_meas"])
    pred_meas = _si(case["pred_meas"])  # front position
    pred = PrecedingInfo("pred", pred_meas, pred_p, case["pred_a_min"])
    return ego_p, pred_p, ego_meas, pred


def verify_make_case(rng: np.random.Generator, max_tries: int = 200) -> dict:
    """A case verified safe with a small margin.

    Verification margins shift one-to-one with the predecessor's position, so the
    predecessor is moved to leave a margin drawn from [0, 2] m.
    """
    for _ in range(max_tries):
        ego_p, pred_p = _random_params(rng), _random_params(rng)
        v_e = float(rng.uniform(0, min(ego_p.v_max, 35)))
        v_p = float(rng.uniform(0, min(pred_p.v_max, 35)))
        s_p = 100.0 + pred_p.l
        case = {
            "ego_params": _params_to_list(ego_p), "pred_params": _params_to_list(pred_p),
            "ego_true": [0.0, v_e], "pred_true": [s_p, v_p],
            "ego_meas": _random_interval_around(rng, 0.0, 0.4) + _random_interval_around(rng, v_e, 0.1, 0.0),
            "pred_meas": _random_interval_around(rng, s_p, 0.6) + _random_interval_around(rng, v_p, 0.2, 0.0),
            "pred_a_min": float(pred_p.a_dec - rng.uniform(0, 2) * (rng.random() < 0.5)),
            "a_d": float(rng.uniform(ego_p.a_dec - 1, ego_p.a_acc + 1)),
            "rollout_seed": int(rng.integers(2 ** 31)),
            "incline": _random_incline(rng, _ENV),
            "n_rollouts": 200,
        }
        ego_p_, _, ego_meas, pred = _verify_inputs(case)
        res = verify(case["a_d"], ego_p_.a_dec, [pred], [], ego_meas, ego_p_, _ENV, include_sensor=False)
        m = margin(res.ego_upper.positions, res.limit_sequence)
        shift = float(rng.uniform(0, 2)) - m
        if s_p + shift - pred_p.l < 0.5:
            continue  # would start overlapped
        case["pred_true"][0] += shift
        case["pred_meas"][0] += shift
        case["pred_meas"][1] += shift
        ego_p_, _, ego_meas, pred = _verify_inputs(case)
        if verify(case["a_d"], ego_p_.a_dec, [pred], [], ego_meas, ego_p_, _ENV).safe:
            return case
    raise RuntimeError("no safe case found")


def verify_check_case(case: dict, fault: bool = False) -> Optional[str]:
    env = _ENV
    ego_p, pred_p, ego_meas, pred = _verify_inputs(case)
    a_d = case["a_d"]
    res = verify(case["a_d"], ego_p.a_dec, [pred], [], ego_meas, ego_p, env)
    if not res.safe:
        return "case is not verified safe"
    rng = np.random.default_rng(case["rollout_seed"])
    R = int(case["n_rollouts"])
    n = max(len(res.ego_upper), len(res.limit_sequence)) + 2

    def corner(iv: Interval, hi_bias: bool):
        pick = rng.random(R)
        x = rng.uniform(iv.lo, iv.hi, R)
        x = np.where(pick < 0.35, iv.hi if hi_bias else iv.lo, x)
        return x

    def env_draw():
        rho = rng.uniform(env.rho.lo, env.rho.hi, R)
        vw = rng.uniform(env.v_wind.lo, env.v_wind.hi, R)
        return rho, vw

    # ego: a_d for one slot, then full braking; adversarial disturbance
    e_in = np.full((R, n), NEG_INF)
    e_in[:, 0] = a_d
    if fault:
        e_in[:, :15] = ego_p.a_acc  # keeps accelerating instead of braking after one slot
    e_w = np.where(rng.random((R, n)) < 0.6, env.w.hi, rng.uniform(env.w.lo, env.w.hi, (R, n)))
    rho, vw = env_draw()
    ego = rollout_batch(corner(ego_meas.s, True), corner(ego_meas.v, True), e_in, e_w, ego_p, ego_p.a_dec,
                        rho, vw, case["incline"], env)
    # predecessor: arbitrary input, then full braking from a random slot
    t_brake = rng.integers(0, max(2, n // 2), R)
    lead = rng.uniform(-2.0, pred_p.a_acc, R)
    p_in = np.where(np.arange(n)[None, :] < t_brake[:, None], lead[:, None], NEG_INF)
    p_w = np.where(rng.random((R, n)) < 0.6, env.w.lo, rng.uniform(env.w.lo, env.w.hi, (R, n)))
    a_true = rng.uniform(pred.a_min_assumed, pred_p.a_dec, R)
    rho, vw = env_draw()
    s0 = corner(pred.state.s, False)
    v0 = corner(pred.state.v, False)
    rear = rollout_batch(s0, v0, p_in, p_w, pred_p, a_true, rho, vw, case["incline"], env) - pred_p.l
    gap = rear - ego
    worst = float(gap.min())
    if worst < -OVERLAP_TOL:
        r, j = np.unravel_index(np.argmin(gap), gap.shape)
        return f"rollout {r}: overlap {worst:.6g} m at substep {j}"
    return None


# ---------------------------------------------------------------- consensus invariance

class _RandomVerifier:
    def __init__(self, rng: np.random.Generator, p_safe: float):
        self.rng = rng
        self.p_safe = p_safe

    def ego_safe(self, a_min_ego, leader_limits) -> bool:
        return bool(self.rng.random() < self.p_safe)

    def leader_safe(self, leader, a_leader, a_min_ego) -> bool:
        return bool(self.rng.random() < self.p_safe)


def consensus_make_case(rng: np.random.Generator, drop: float = 0.3, delay: tuple = (0, 10)) -> dict:
    n = int(rng.integers(2, 6))
    limits = []
    for _ in range(n):
        seq, a = [], float(rng.uniform(-10, -3))
        for _ in range(CONSENSUS_STEPS_PER_CASE):
            if rng.random() < 0.15:
                a = float(np.clip(a + rng.normal(0, 1.5), -12, -2))
            seq.append(a)
        limits.append(seq)
    return {"n": n, "entity_values": limits, "initial": [float(s[0]) for s in limits],
            "drop": float(drop), "delay": [int(delay[0]), int(delay[1])], "duplicate": 0.1,
            "channel_seed": int(rng.integers(2 ** 31)), "verifier_seed": int(rng.integers(2 ** 31)),
            "p_safe": float(rng.uniform(0.5, 1.0)), "steps": CONSENSUS_STEPS_PER_CASE}


def consensus_check_case(case: dict, fault: bool = False) -> Optional[str]:
    n, dt = case["n"], 0.1
    states = [ConsensusState(a_min_forced=a) for a in case["initial"]]
    for i in range(1, n):
        states[i].couple_leader(i - 1, case["initial"][i - 1])
    entities = [ScriptedEntity(v) for v in case["entity_values"]]
    mail = [Mailbox() for _ in range(n)]
    cfg = ChannelConfig(case["drop"], tuple(case["delay"]), case["duplicate"], case["channel_seed"])
    rng_ch = np.random.default_rng(cfg.seed)
    verifier = _RandomVerifier(np.random.default_rng(case["verifier_seed"]), case["p_safe"])
    pending: list = []
    for k in range(case["steps"]):
        t = k * dt
        sends = []
        for i in range(n):
            L = [i - 1] if i > 0 else []
            F = [i + 1] if i < n - 1 and not fault else []
            try:
                _, out = safe_consensus(states[i], t, L, L, F, mail[i], entities[i], verifier, 0.0, dt)
            except InvariantViolation as e:
                return f"step {k} vehicle {i}: {e}"
            for o in out:
                env_ = Envelope(i, t, o.payload, o.recipient)
                targets = [o.recipient] if o.recipient is not None else [j for j in range(n) if j != i]
                sends += [Delivery(r, env_) for r in targets]
        delivered, pending = channel_step(pending, sends, cfg, k, rng_ch)
        for d in delivered:
            mail[d.recipient].ingest([d.envelope])
        for i in range(1, n):
            stored, _ = states[i].leader_limits[i - 1]
            if stored > states[i - 1].a_min_forced:
                return (f"step {k}: follower {i} assumes {stored} but leader {i - 1} may brake with "
                        f"{states[i - 1].a_min_forced}")
    return None


# ---------------------------------------------------------------- fail-safe minimality

def failsafe_make_case(rng: np.random.Generator) -> dict:
    ego_p, pred_p = _random_params(rng), _random_params(rng)
    v_e = float(rng.uniform(0, min(ego_p.v_max, 35)))
    v_p = float(rng.uniform(0, min(pred_p.v_max, 35)))
    gap = float(rng.uniform(0, 90))
    s_p = gap + pred_p.l
    return {
        "ego_params": _params_to_list(ego_p), "pred_params": _params_to_list(pred_p),
        "ego_meas": _random_interval_around(rng, 0.0, 0.4) + _random_interval_around(rng, v_e, 0.1, 0.0),
        "pred_meas": _random_interval_around(rng, s_p, 0.6) + _random_interval_around(rng, v_p, 0.2, 0.0),
        "pred_a_min": float(pred_p.a_dec - rng.uniform(0, 2) * (rng.random() < 0.5)),
        "a_tol": 0.05,
    }


def failsafe_check_case(case: dict, fault: bool = False) -> Optional[str]:
    env = _ENV
    ego_p, _, ego_meas, pred = _verify_inputs(case)
    a_tol = case["a_tol"]
    seq = verify(NEG_INF, ego_p.a_dec, [pred], [], ego_meas, ego_p, env).limit_sequence
    cfg = FailSafeConfig(a_tol=a_tol * (20 if fault else 1))
    a = fail_safe(seq, ego_meas, ego_p.a_dec, ego_p, env, cfg)
    lo, hi = search_bracket(ego_meas, ego_p.a_dec, ego_p, env, FailSafeConfig(a_tol=a_tol))
    if a is None:
        if fail_safe_margin(lo, seq, ego_meas, ego_p.a_dec, ego_p, env) > 0:
            return "no input returned although the strongest braking is safe"
        return None
    if not fail_safe_margin(a, seq, ego_meas, ego_p.a_dec, ego_p, env) > 0:
        return f"returned input {a} is unsafe"
    probe = a + 2 * a_tol
    if probe <= hi and fail_safe_margin(probe, seq, ego_meas, ego_p.a_dec, ego_p, env) > 0:
        return f"returned input {a} is not minimal: {probe} is safe and within [{lo}, {hi}]"
    return None


# ---------------------------------------------------------------- driver

@dataclass(frozen=True)
class Suite:
    name: str
    make_case: Callable
    check_case: Callable


SUITES = {
    "monotonicity": Suite("monotonicity", mono_make_case, mono_check_case),
    "verify-soundness": Suite("verify-soundness", verify_make_case, verify_check_case),
    "consensus-invariance": Suite("consensus-invariance", consensus_make_case, consensus_check_case),
    "failsafe-minimality": Suite("failsafe-minimality", failsafe_make_case, failsafe_check_case),
}


@dataclass
class Violation:
    index: int
    message: str
    case: dict


@dataclass
class FuzzReport:
    suite: str
    cases: int
    seed: int
    violations: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def case_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _one(args) -> tuple[int, Optional[str], Optional[dict]]:
    name, seed, i, fault, kw = args
    suite = SUITES[name]
    case = suite.make_case(case_rng(seed, i), **kw)
    msg = suite.check_case(case, fault)
    return i, msg, (case if msg is not None else None)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("PLATOON_SAFE_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(name: str, cases: int, seed: int = 0, fault: bool = False, threads: Optional[int] = None,
              **make_kw) -> FuzzReport:
    """Run ``cases`` random cases of suite ``name``; violations are sorted by case index."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; available: {', '.join(SUITES)}")
    threads = thread_count() if threads is None else threads
    t0 = time.perf_counter()
    jobs = [(name, seed, i, fault, make_kw) for i in range(cases)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_one, jobs, chunksize=max(1, cases // (4 * threads))))
    else:
        results = [_one(j) for j in jobs]
    report = FuzzReport(name, cases, seed, elapsed=time.perf_counter() - t0)
    report.violations = [Violation(i, m, c) for i, m, c in sorted(results, key=lambda r: r[0]) if m is not None]
    return report


def dump_reproducer(report: FuzzReport, violation: Violation, fault: bool, path) -> None:
    doc = {"reproducer_version": 1, "suite": report.suite, "seed": report.seed, "index": violation.index,
           "fault": bool(fault), "message": violation.message, "case": violation.case}
    with open(path, "w") as fh:
        yaml.safe_dump(_plain(doc), fh, sort_keys=False)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def replay(path) -> Optional[str]:
    """Re-run a dumped reproducer; returns the violation message (None if it no longer fails)."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "suite" not in doc or "case" not in doc:
        raise ValueError(f"{path}: not a reproducer file")
    return SUITES[doc["suite"]].check_case(doc["case"], bool(doc.get("fault", False)))
