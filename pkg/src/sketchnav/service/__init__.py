from .metrics import (
    EpisodeRecord,
    Metrics,
    OUTCOME_ALPHA,
    OUTCOME_BETA,
    OUTCOME_GAMMA,
    OUTCOME_SUCCESS,
    OUTCOME_TIMEOUT,
    classify_outcome,
    incident_for_contact,
)
from .protocol import PROTOCOL_VERSION, FrameDecoder, ProtocolError, dumps, encode, make_frame
from .scenario import Scenario, ScenarioError, ScenarioMode, ScenarioTest
from .session import (
    ControlMode,
    ManualScript,
    Session,
    SessionConfig,
    evaluate_scenario,
    run_session,
)

__all__ = [
    "EpisodeRecord",
    "Metrics",
    "OUTCOME_ALPHA",
    "OUTCOME_BETA",
    "OUTCOME_GAMMA",
    "OUTCOME_SUCCESS",
    "OUTCOME_TIMEOUT",
    "classify_outcome",
    "incident_for_contact",
    "PROTOCOL_VERSION",
    "FrameDecoder",
    "ProtocolError",
    "dumps",
    "encode",
    "make_frame",
    "Scenario",
    "ScenarioError",
    "ScenarioMode",
    "ScenarioTest",
    "ControlMode",
    "ManualScript",
    "Session",
    "SessionConfig",
    "evaluate_scenario",
    "run_session",
]
