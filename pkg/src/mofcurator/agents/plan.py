"""Plans and head decisions.

A plan is an ordered node list with statuses; the head module drives it
through structured decisions. Status transitions are linear
(pending -> in_progress -> done | failed) and at most one node runs at a
time; updates may reshape pending work but never rewrite finished nodes.
"""

from dataclasses import asdict, dataclass, field

STATUSES = ("pending", "in_progress", "done", "failed")
ACTIONS = ("create_plan", "update_plan", "invoke_node", "finish")


class InvalidTransition(Exception):
    pass


class SchemaError(ValueError):
    """A head response that does not parse into a valid decision."""


@dataclass
class PlanNode:
    name: str
    description: str
    status: str = "pending"
    result_summary: str | None = None


@dataclass
class Plan:
    goal: str
    nodes: list[PlanNode] = field(default_factory=list)

    def validate(self) -> None:
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise InvalidTransition("duplicate plan node names")
        for n in self.nodes:
            if n.status not in STATUSES:
                raise InvalidTransition(f"unknown status {n.status!r}")
        running = [n.name for n in self.nodes if n.status == "in_progress"]
        if len(running) > 1:
            raise InvalidTransition(f"multiple nodes in progress: {running}")

    @property
    def complete(self) -> bool:
        return all(n.status in ("done", "failed") for n in self.nodes)

    def node(self, name: str) -> PlanNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise InvalidTransition(f"no plan node named {name!r}")

    def start(self, name: str) -> None:
        node = self.node(name)
        if node.status != "pending":
            raise InvalidTransition(f"{name} is {node.status}, cannot start")
        self.validate()
        if any(n.status == "in_progress" for n in self.nodes):
            raise InvalidTransition("another node is already in progress")
        node.status = "in_progress"

    def mark(self, name: str, status: str, summary: str | None = None) -> None:
        if status not in ("done", "failed"):
            raise InvalidTransition(f"cannot mark a node {status!r}")
        node = self.node(name)
        if node.status != "in_progress":
            raise InvalidTransition(f"{name} is {node.status}, cannot finish it")
        node.status = status
        node.result_summary = summary

    def updated(self, steps: list[dict]) -> "Plan":
        """New plan from a full step list; every non-pending node must be
        carried over unchanged (same name and description)."""
        new_nodes = []
        by_name = {n.name: n for n in self.nodes}
        seen = set()
        for step in steps:
            name = step["name"]
            seen.add(name)
            old = by_name.get(name)
            if old is not None and old.status != "pending":
                if step["description"] != old.description:
                    raise InvalidTransition(f"cannot rewrite finished node {name}")
                new_nodes.append(old)
            else:
                new_nodes.append(PlanNode(name, step["description"]))
        dropped = [
            n.name for n in self.nodes if n.name not in seen and n.status != "pending"
        ]
        if dropped:
            raise InvalidTransition(f"cannot drop non-pending nodes: {dropped}")
        plan = Plan(self.goal, new_nodes)
        plan.validate()
        return plan

    def to_dict(self) -> dict:
        return {"goal": self.goal, "nodes": [asdict(n) for n in self.nodes]}

    @classmethod
    def from_dict(cls, data: dict) -> "Plan":
        plan = cls(
            data["goal"],
            [PlanNode(**n) for n in data["nodes"]],
        )
        plan.validate()
        return plan


@dataclass
class HeadDecision:
    action: str
    goal: str = ""
    steps: list[dict] = field(default_factory=list)
    node: str = ""
    plan_step: str = ""
    params: dict = field(default_factory=dict)
    response: str = ""

    def to_dict(self) -> dict:
        out = {"action": self.action}
        if self.action in ("create_plan", "update_plan"):
            if self.goal:
                out["goal"] = self.goal
            out["steps"] = self.steps
        elif self.action == "invoke_node":
            out["node"] = self.node
            if self.plan_step:
                out["plan_step"] = self.plan_step
            if self.params:
                out["params"] = self.params
        elif self.action == "finish":
            out["response"] = self.response
        return out


def parse_decision(raw, registry: set[str]) -> HeadDecision:
    """Validate a raw backend payload into a HeadDecision or raise SchemaError."""
    if not isinstance(raw, dict):
        raise SchemaError("decision is not an object")
    action = raw.get("action")
    if action not in ACTIONS:
        raise SchemaError(f"action must be one of {ACTIONS}, got {action!r}")

    if action in ("create_plan", "update_plan"):
        steps = raw.get("steps")
        if not isinstance(steps, list) or not steps:
            raise SchemaError(f"{action} needs a nonempty 'steps' list")
        names = set()
        for step in steps:
            if not isinstance(step, dict):
                raise SchemaError("each step must be an object")
            name, desc = step.get("name"), step.get("description")
            if not name or not isinstance(name, str):
                raise SchemaError("step lacks a name")
            if not isinstance(desc, str) or not desc:
                raise SchemaError(f"step {name!r} lacks a description")
            if name in names:
                raise SchemaError(f"duplicate step name {name!r}")
            names.add(name)
        goal = raw.get("goal", "")
        if action == "create_plan" and (not goal or not isinstance(goal, str)):
            raise SchemaError("create_plan needs a goal")
        return HeadDecision(
            action,
            goal=goal,
            steps=[{"name": s["name"], "description": s["description"]} for s in steps],
        )

    if action == "invoke_node":
        node = raw.get("node")
        if not node or not isinstance(node, str):
            raise SchemaError("invoke_node needs a node name")
        if node not in registry:
            raise SchemaError(
                f"unknown node {node!r}; registered: {sorted(registry)}"
            )
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise SchemaError("params must be an object")
        plan_step = raw.get("plan_step", "")
        if plan_step and not isinstance(plan_step, str):
            raise SchemaError("plan_step must be a string")
        return HeadDecision(action, node=node, plan_step=plan_step, params=params)

    response = raw.get("response")
    if not isinstance(response, str):
        raise SchemaError("finish needs a string response")
    return HeadDecision(action, response=response)
