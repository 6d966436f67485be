"""Hierarchical plan-and-execute agent runtime for curation sessions."""

from .backend import (
    API_KEY_ENV,
    BackendSchemaFailure,
    ChatBackend,
    LiveBackend,
    RecordingBackend,
    ReplayBackend,
    TranscriptMismatch,
    canonical_json,
    request_digest,
)
from .crew import SessionContext, build_supervisor
from .plan import (
    ACTIONS,
    STATUSES,
    HeadDecision,
    InvalidTransition,
    Plan,
    PlanNode,
    SchemaError,
    parse_decision,
)
from .runtime import (
    DEFAULT_DEPTH_LIMIT,
    DEFAULT_STEP_BUDGET,
    AgentSpec,
    DepthExceeded,
    NotSupported,
    StepBudgetExceeded,
    run_agent,
    summarize,
    trace_text,
)

__all__ = [
    "ACTIONS",
    "API_KEY_ENV",
    "AgentSpec",
    "BackendSchemaFailure",
    "ChatBackend",
    "DEFAULT_DEPTH_LIMIT",
    "DEFAULT_STEP_BUDGET",
    "DepthExceeded",
    "HeadDecision",
    "InvalidTransition",
    "LiveBackend",
    "NotSupported",
    "Plan",
    "PlanNode",
    "RecordingBackend",
    "ReplayBackend",
    "SchemaError",
    "SessionContext",
    "StepBudgetExceeded",
    "STATUSES",
    "TranscriptMismatch",
    "build_supervisor",
    "canonical_json",
    "parse_decision",
    "request_digest",
    "run_agent",
    "summarize",
    "trace_text",
]
