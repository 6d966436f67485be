"""The plan-and-execute loop.

One agent is a head (LLM decisions via a ChatBackend) plus a node registry.
Nodes are either plain callables taking a params dict or nested AgentSpecs
executed recursively with a decremented depth limit. Every decision, retry,
and node result is appended to one totally ordered trace shared across the
whole agent tree; replaying a recorded transcript reproduces the trace
byte for byte.
"""

from dataclasses import dataclass, field

from .backend import BackendSchemaFailure, canonical_json
from .plan import HeadDecision, Plan, PlanNode, SchemaError, parse_decision

DEFAULT_STEP_BUDGET = 64
DEFAULT_DEPTH_LIMIT = 3
MAX_SCHEMA_RETRIES = 3
SUMMARY_LIMIT = 2000


class DepthExceeded(Exception):
    pass


class StepBudgetExceeded(Exception):
    pass


class NotSupported(Exception):
    """A declared node whose capability is out of scope."""


@dataclass
class AgentSpec:
    name: str
    nodes: dict[str, object]  # callable(params) -> result, or AgentSpec
    prompt: str = ""

    def __post_init__(self):
        if len(self.nodes) != len(set(self.nodes)):
            raise ValueError("node names must be unique")


def summarize(result) -> str:
    """Bounded-length text form of a node result for the head's context."""
    text = result if isinstance(result, str) else repr(result)
    text = text.strip()
    if len(text) > SUMMARY_LIMIT:
        text = text[: SUMMARY_LIMIT - 4] + " ..."
    return text


def trace_text(trace: list[dict]) -> str:
    """Canonical byte representation of a trace (one JSON object per line)."""
    return "".join(canonical_json(event) + "\n" for event in trace)


def run_agent(
    spec: AgentSpec,
    query: str,
    backend,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    step_budget: int = DEFAULT_STEP_BUDGET,
    trace: list[dict] | None = None,
    _prefix: str = "",
) -> tuple[str, list[dict]]:
    if depth_limit < 1:
        raise DepthExceeded(f"{_prefix}{spec.name}: depth limit reached")
    if trace is None:
        trace = []
    path = _prefix + spec.name
    registry = set(spec.nodes)
    plan: Plan | None = None
    last_result: dict | None = None
    decisions = 0

    while True:
        if decisions >= step_budget:
            raise StepBudgetExceeded(f"{path}: exceeded {step_budget} decisions")

        context = {
            "agent": path,
            "prompt": spec.prompt,
            "query": query,
            "nodes": sorted(registry),
            "plan": plan.to_dict() if plan else None,
            "last_result": last_result,
        }

        decision: HeadDecision | None = None
        schema_error = None
        for _ in range(MAX_SCHEMA_RETRIES + 1):
            ctx = dict(context)
            if schema_error:
                ctx["schema_error"] = schema_error
            raw = backend.decide(ctx)
            try:
                decision = parse_decision(raw, registry)
                _check_state(decision, plan, last_result)
                break
            except SchemaError as exc:
                schema_error = str(exc)
                decision = None
                trace.append(
                    {"event": "schema_retry", "agent": path, "error": schema_error}
                )
        if decision is None:
            raise BackendSchemaFailure(f"{path}: {schema_error}")
        decisions += 1

        if decision.action == "create_plan":
            plan = Plan(
                decision.goal,
                [PlanNode(s["name"], s["description"]) for s in decision.steps],
            )
            plan.validate()
        elif decision.action == "update_plan":
            plan = plan.updated(decision.steps)

        trace.append(
            {
                "event": "decision",
                "agent": path,
                "index": decisions,
                "decision": decision.to_dict(),
                "plan": plan.to_dict() if plan else None,
            }
        )

        if decision.action == "finish":
            return decision.response, trace

        if decision.action != "invoke_node":
            continue

        if plan and decision.plan_step:
            plan.start(decision.plan_step)
        target = spec.nodes[decision.node]
        try:
            if isinstance(target, AgentSpec):
                sub_query = str(decision.params.get("query", query))
                result, _ = run_agent(
                    target,
                    sub_query,
                    backend,
                    depth_limit - 1,
                    step_budget,
                    trace,
                    _prefix=path + "/",
                )
            else:
                result = target(dict(decision.params))
            summary = summarize(result)
            status = "done"
            last_result = {"node": decision.node, "summary": summary}
        except (DepthExceeded, StepBudgetExceeded, BackendSchemaFailure):
            raise
        except Exception as exc:  # node failures are data for the head
            summary = summarize(f"{type(exc).__name__}: {exc}")
            status = "failed"
            last_result = {"node": decision.node, "error": summary}
        if plan and decision.plan_step:
            plan.mark(decision.plan_step, status, summary)
            plan.validate()
        trace.append(
            {
                "event": "node_result",
                "agent": path,
                "node": decision.node,
                "status": status,
                "summary": summary,
                "plan": plan.to_dict() if plan else None,
            }
        )


def _check_state(decision: HeadDecision, plan: Plan | None, last_result) -> None:
    """Decision checks that need loop state, beyond pure schema shape."""
    if decision.action == "create_plan" and plan is not None:
        raise SchemaError("a plan already exists; use update_plan")
    if decision.action == "update_plan" and plan is None:
        raise SchemaError("no plan exists yet; use create_plan")
    if decision.action == "invoke_node" and decision.plan_step:
        if plan is None:
            raise SchemaError("plan_step given but no plan exists")
        node = plan.node(decision.plan_step) if _has_node(plan, decision.plan_step) else None
        if node is None:
            raise SchemaError(f"plan has no step named {decision.plan_step!r}")
        if node.status != "pending":
            raise SchemaError(f"plan step {decision.plan_step!r} is {node.status}")
    if decision.action == "finish" and plan is not None and not plan.complete:
        failed = last_result is not None and "error" in last_result
        if not failed:
            raise SchemaError("finish before the plan is complete")


def _has_node(plan: Plan, name: str) -> bool:
    return any(n.name == name for n in plan.nodes)
