"""YAML scenario files (schema version 1) with line-precise validation errors.

See ``docs/scenario-format.md`` for the field reference.
"""
from __future__ import annotations

import math
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .network import ChannelConfig
from .sim import CutIn, Depart, FullBrake, NoiseConfig, Scenario, ScenarioInvalid, SetTarget, VehicleSpec
from .types import PRESETS, EnvParams, Interval, VehicleParams

SCHEMA_VERSION = 1
BUNDLED = ("scenario1", "scenario2", "cutin", "collision")


class ScenarioError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None, field: str = ""):
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field + ': ' if field else ''}{msg}")


def _marks(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _marks(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _marks(v, path + (i,), out)
    return out


class _Reader:
    def __init__(self, marks: dict):
        self.marks = marks

    def err(self, path: tuple, msg: str):
        line = None
        p = path
        while line is None:
            line = self.marks.get(p)
            if not p:
                break
            p = p[:-1]
        raise ScenarioError(msg, line, ".".join(str(x) for x in path))

    def get(self, d: dict, key: str, path: tuple, kind=None, default: Any = ..., allowed: Optional[set] = None):
        if not isinstance(d, dict):
            self.err(path, "expected a mapping")
        if key not in d:
            if default is ...:
                self.err(path + (key,), "missing required field")
            return default
        val = d[key]
        if kind is not None:
            val = self.coerce(val, kind, path + (key,))
        if allowed is not None and val not in allowed:
            self.err(path + (key,), f"must be one of {sorted(allowed)}")
        return val

    def coerce(self, val, kind, path):
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)) or math.isnan(val):
                self.err(path, f"expected a number, got {val!r}")
            return float(val)
        if kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                self.err(path, f"expected an integer, got {val!r}")
            return val
        if kind is bool:
            if not isinstance(val, bool):
                self.err(path, f"expected true/false, got {val!r}")
            return val
        if kind is str:
            if not isinstance(val, (str, int)) or isinstance(val, bool):
                self.err(path, f"expected a string, got {val!r}")
            return str(val)
        if kind == "interval":
            if not (isinstance(val, list) and len(val) == 2):
                self.err(path, "expected [lo, hi]")
            lo, hi = (self.coerce(x, float, path) for x in val)
            if lo > hi:
                self.err(path, "lo > hi")
            return (lo, hi)
        if kind == "time":
            if isinstance(val, list):
                return self.coerce(val, "interval", path)
            return self.coerce(val, float, path)
        raise TypeError(kind)

    def check_keys(self, d: dict, allowed: set, path: tuple):
        for k in d:
            if k not in allowed:
                self.err(path + (k,), f"unknown field (allowed: {', '.join(sorted(allowed))})")


_PARAM_KEYS = {f.name for f in fields(VehicleParams)}
_ENV_INTERVALS = ("rho", "v_wind", "alpha", "w")
_ENV_SCALARS = ("g", "s_sensor", "t_C", "a_dec_cutin", "dt_p")


def _params(r: _Reader, d: dict, path: tuple) -> VehicleParams:
    preset = r.get(d, "preset", path, str, None)
    over = r.get(d, "params", path, None, {})
    if preset is None and not over:
        r.err(path, "vehicle needs 'preset' or 'params'")
    if preset is not None and preset not in PRESETS:
        r.err(path + ("preset",), f"unknown preset (known: {', '.join(PRESETS)})")
    base = {f.name: getattr(PRESETS[preset], f.name) for f in fields(VehicleParams)} if preset else {}
    if not isinstance(over, dict):
        r.err(path + ("params",), "expected a mapping")
    r.check_keys(over, _PARAM_KEYS, path + ("params",))
    for k in over:
        base[k] = r.coerce(over[k], float, path + ("params", k))
    missing = _PARAM_KEYS - set(base)
    if missing:
        r.err(path + ("params",), f"missing {', '.join(sorted(missing))}")
    try:
        return VehicleParams(**base)
    except ValueError as e:
        r.err(path, str(e))


def _profile(r: _Reader, val, path) -> tuple:
    if not isinstance(val, list):
        r.err(path, "expected a list of [t, a] pairs")
    out = []
    for i, item in enumerate(val):
        if not (isinstance(item, list) and len(item) == 2):
            r.err(path + (i,), "expected [t, a]")
        t = r.coerce(item[0], float, path + (i,))
        a = None if item[1] in (None, "cruise") else r.coerce(item[1], float, path + (i,))
        out.append((t, a))
    return tuple(out)


_VEHICLE_KEYS = {"id", "preset", "params", "s", "v", "member", "target_speed", "headway", "profile"}


def _vehicle(r: _Reader, d: dict, path: tuple, need_s: bool = True) -> VehicleSpec:
    r.check_keys(d, _VEHICLE_KEYS, path)
    return VehicleSpec(
        vid=r.get(d, "id", path, str),
        params=_params(r, d, path),
        s0=r.get(d, "s", path, float) if need_s else r.get(d, "s", path, float, 0.0),
        v0=r.get(d, "v", path, float),
        member=r.get(d, "member", path, bool, True),
        target_speed=r.get(d, "target_speed", path, float, None),
        headway=r.get(d, "headway", path, float, 0.3),
        profile=_profile(r, d["profile"], path + ("profile",)) if "profile" in d else ())


_EVENT_KEYS = {"full_brake": {"type", "vehicle", "t"}, "depart": {"type", "vehicle", "t"},
               "set_target": {"type", "vehicle", "t", "v"}, "cut_in": {"type", "vehicle", "t", "ahead_of", "gap"}}


def _event(r: _Reader, d: dict, path: tuple):
    kind = r.get(d, "type", path, str, allowed=set(_EVENT_KEYS))
    r.check_keys(d, _EVENT_KEYS[kind], path)
    t = r.get(d, "t", path, "time")
    if kind == "full_brake":
        return FullBrake(r.get(d, "vehicle", path, str), t)
    if kind == "depart":
        return Depart(r.get(d, "vehicle", path, str), t)
    if kind == "set_target":
        return SetTarget(r.get(d, "vehicle", path, str), t, r.get(d, "v", path, float))
    veh = r.get(d, "vehicle", path)
    if not isinstance(veh, dict):
        r.err(path + ("vehicle",), "cut_in needs an inline vehicle mapping")
    return CutIn(_vehicle(r, veh, path + ("vehicle",), need_s=False), t, r.get(d, "ahead_of", path, str),
                 r.get(d, "gap", path, float))


_TOP_KEYS = {"schema_version", "name", "duration", "seed", "consensus", "env", "noise", "channel", "incline",
             "vehicles", "events"}


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(e, 'problem', e)}",
                            None if mark is None else mark.line + 1) from None
    if node is None or not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping", 1)
    r = _Reader(_marks(node))
    root = ()
    r.check_keys(data, _TOP_KEYS, root)
    version = r.get(data, "schema_version", root, int)
    if version != SCHEMA_VERSION:
        r.err(("schema_version",), f"unsupported version {version} (expected {SCHEMA_VERSION})")

    env_d = r.get(data, "env", root, None, {})
    r.check_keys(env_d, set(_ENV_INTERVALS + _ENV_SCALARS), ("env",))
    env_kw = {k: Interval(*r.get(env_d, k, ("env",), "interval")) for k in _ENV_INTERVALS if k in env_d}
    env_kw.update({k: r.get(env_d, k, ("env",), float) for k in _ENV_SCALARS if k in env_d})
    try:
        env = EnvParams(**env_kw)
    except ValueError as e:
        r.err(("env",), str(e))

    noise_d = r.get(data, "noise", root, None, {})
    r.check_keys(noise_d, {f.name for f in fields(NoiseConfig)}, ("noise",))
    noise = NoiseConfig(**{k: r.get(noise_d, k, ("noise",), float) for k in noise_d})
    for k, v in vars(noise).items():
        if v < 0:
            r.err(("noise", k), "must be >= 0")

    ch_d = r.get(data, "channel", root, None, {})
    r.check_keys(ch_d, {"drop", "delay", "duplicate", "seed"}, ("channel",))
    delay = r.get(ch_d, "delay", ("channel",), "interval", (0, 0))
    if delay[0] != int(delay[0]) or delay[1] != int(delay[1]):
        r.err(("channel", "delay"), "delay bounds must be whole steps")
    try:
        channel = ChannelConfig(drop_prob=r.get(ch_d, "drop", ("channel",), float, 0.0),
                                delay_steps=(int(delay[0]), int(delay[1])),
                                duplicate_prob=r.get(ch_d, "duplicate", ("channel",), float, 0.0),
                                seed=r.get(ch_d, "seed", ("channel",), int, 0))
    except ValueError as e:
        r.err(("channel",), str(e))

    incline = None
    if "incline" in data:
        inc = data["incline"]
        if not isinstance(inc, list) or not inc:
            r.err(("incline",), "expected a non-empty list of [s, alpha] points")
        incline = tuple(_point(r, p, ("incline", i)) for i, p in enumerate(inc))

    vehicles_d = r.get(data, "vehicles", root)
    if not isinstance(vehicles_d, list) or not vehicles_d:
        r.err(("vehicles",), "expected a non-empty list")
    vehicles = [_vehicle(r, v, ("vehicles", i)) for i, v in enumerate(vehicles_d)]
    events_d = r.get(data, "events", root, None, [])
    if not isinstance(events_d, list):
        r.err(("events",), "expected a list")
    events = [_event(r, e, ("events", i)) for i, e in enumerate(events_d)]

    sc = Scenario(vehicles=vehicles, env=env, events=events, noise=noise, channel=channel,
                  duration=r.get(data, "duration", root, float), seed=r.get(data, "seed", root, int, 0),
                  consensus=r.get(data, "consensus", root, bool, False), incline_profile=incline,
                  name=r.get(data, "name", root, str, Path(source).stem))
    try:
        sc.validate()
    except ScenarioInvalid as e:
        r.err(("vehicles",) if "vehicle" in str(e) else root, str(e))
    return sc


def _point(r: _Reader, p, path) -> tuple[float, float]:
    if not (isinstance(p, list) and len(p) == 2):
        r.err(path, "expected [s, alpha]")
    return (r.coerce(p[0], float, path), r.coerce(p[1], float, path))


def load_scenario(path) -> Scenario:
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return bundled(str(path))
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e}") from None
    return parse_scenario(text, str(p))


def bundled_text(name: str) -> str:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; available: {', '.join(BUNDLED)}")
    return resources.files("platoon_safe.scenarios").joinpath(f"{name}.yaml").read_text()


def bundled(name: str) -> Scenario:
    return parse_scenario(bundled_text(name), name)
