"""Safety layer for cooperative adaptive cruise control platoons.

Guaranteed position bounds, online verification of planned inputs, a fail-safe and a
recapturing controller, safe adoption of consensus braking limits over a lossy network,
and a scenario simulator.
"""
from .types import (P0, P1, P2, P3, P4, PRESETS, WORST_CASE, CutinTracker, EnvParams, Interval, StateInterval,
                    VehicleParams, VehicleState, interval_measure)
from .dynamics import BoundKind, HorizonTooShort, accel_limits, bound_accel_limits, lower_pos, upper_pos
from .verify import PrecedingInfo, VerifyResult, safe_distance, verify
from .controllers import FailSafeConfig, RecapPlan, fail_safe, nominal_cacc, recap
from .consensus import (ConsensusState, InvariantViolation, ReferenceEntity, TransitionState, safe_consensus,
                        transition_bound)
from .network import ChannelConfig, Envelope, Mailbox, collision_pos
from .sim import Scenario, StepLog, run
from .scenario import ScenarioError, bundled, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "P0", "P1", "P2", "P3", "P4", "PRESETS", "WORST_CASE", "CutinTracker", "EnvParams", "Interval",
    "StateInterval", "VehicleParams", "VehicleState", "interval_measure",
    "BoundKind", "HorizonTooShort", "accel_limits", "bound_accel_limits", "lower_pos", "upper_pos",
    "PrecedingInfo", "VerifyResult", "safe_distance", "verify",
    "FailSafeConfig", "RecapPlan", "fail_safe", "nominal_cacc", "recap",
    "ConsensusState", "InvariantViolation", "ReferenceEntity", "TransitionState", "safe_consensus",
    "transition_bound",
    "ChannelConfig", "Envelope", "Mailbox", "collision_pos",
    "Scenario", "StepLog", "run",
    "ScenarioError", "bundled", "load_scenario", "parse_scenario",
]
