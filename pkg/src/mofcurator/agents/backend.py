"""Chat backends: a live chat-completions client and a transcript replayer.

Transcripts are JSON lines, one record per backend call:
{"kind": "decide"|"complete_json", "digest": <sha256-16 of the canonical
request payload>, "response": <payload>}. The digest binds a replay to the
exact request sequence, so any change to the agent tree or fixture data
surfaces as TranscriptMismatch instead of silently diverging.
"""

import copy
import hashlib
import json
import os
import re
from pathlib import Path
from typing import Protocol

API_KEY_ENV = "MOFCURATOR_API_KEY"


class BackendSchemaFailure(Exception):
    """Backend kept returning schema-invalid decisions past the retry bound."""


class TranscriptMismatch(Exception):
    """Replay diverged from the recorded request sequence."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def request_digest(payload) -> str:
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]


class ChatBackend(Protocol):
    def decide(self, context: dict) -> dict:
        """Raw decision payload for the head; validated by the runtime."""

    def complete_json(self, prompt: str, schema_hint: str = ""):
        """One-shot structured completion used by extraction nodes."""


_DECIDE_SYSTEM = (
    "You are the head module of a plan-and-execute agent. Reply with exactly "
    "one JSON object and nothing else. Actions: create_plan (goal, steps: "
    "[{name, description}]), update_plan (steps), invoke_node (node, "
    "plan_step?, params?), finish (response). Work the plan one node at a "
    "time and finish when it is complete."
)

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n|\n```$")


def parse_json_reply(content: str):
    text = _FENCE_RE.sub("", content.strip())
    start = text.find("{")
    start_list = text.find("[")
    if start_list != -1 and (start == -1 or start_list < start):
        start = start_list
    if start > 0:
        text = text[start:]
    return json.loads(text)


class LiveBackend:
    """Chat-completions HTTP client. Credentials come only from the
    environment; endpoint and model are configuration."""

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        temperature: float = 0.0,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.timeout = timeout

    def _chat(self, system: str, user: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        resp = requests.post(
            self.endpoint,
            json={
                "model": self.model,
                "temperature": self.temperature,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": user},
                ],
            },
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def decide(self, context: dict) -> dict:
        return parse_json_reply(self._chat(_DECIDE_SYSTEM, canonical_json(context)))

    def complete_json(self, prompt: str, schema_hint: str = ""):
        system = (
            "Reply with exactly one JSON value matching the requested schema"
            + (f" ({schema_hint})" if schema_hint else "")
            + ", nothing else."
        )
        return parse_json_reply(self._chat(system, prompt))


class ReplayBackend:
    """Replays a recorded transcript; fully deterministic."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records = [
            json.loads(line)
            for line in self.path.read_text().splitlines()
            if line.strip()
        ]
        self._pos = 0

    def _next(self, kind: str, payload) -> dict:
        if self._pos >= len(self._records):
            raise TranscriptMismatch(
                f"transcript exhausted after {self._pos} calls (next: {kind})"
            )
        record = self._records[self._pos]
        digest = request_digest(payload)
        if record.get("kind") != kind or record.get("digest") != digest:
            raise TranscriptMismatch(
                f"call {self._pos}: recorded {record.get('kind')}/"
                f"{record.get('digest')}, got {kind}/{digest}"
            )
        self._pos += 1
        return copy.deepcopy(record["response"])

    def decide(self, context: dict) -> dict:
        return self._next("decide", context)

    def complete_json(self, prompt: str, schema_hint: str = ""):
        return self._next(
            "complete_json", {"prompt": prompt, "schema_hint": schema_hint}
        )


class RecordingBackend:
    """Wraps another backend and records every call for later replay."""

    def __init__(self, inner):
        self.inner = inner
        self.records: list[dict] = []

    def decide(self, context: dict) -> dict:
        response = self.inner.decide(context)
        self.records.append(
            {"kind": "decide", "digest": request_digest(context), "response": response}
        )
        return response

    def complete_json(self, prompt: str, schema_hint: str = ""):
        response = self.inner.complete_json(prompt, schema_hint)
        payload = {"prompt": prompt, "schema_hint": schema_hint}
        self.records.append(
            {
                "kind": "complete_json",
                "digest": request_digest(payload),
                "response": response,
            }
        )
        return response

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(canonical_json(r) + "\n" for r in self.records))
        return path
