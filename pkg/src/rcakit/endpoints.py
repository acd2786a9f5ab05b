"""Chat-model endpoint contract with scripted and HTTP backends.

An endpoint, given (messages, tool declarations, generation settings),
returns a single assistant message that is either text, one tool invocation,
or text containing a final answer. The scripted backend replays canned
replies deterministically; the HTTP backend speaks a chat-completion style
wire protocol with a timeout and transient/fatal error classification.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .toolbox import ToolCall

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_ENV = "RCAKIT_API_TOKEN"


class EndpointError(RuntimeError):
    def __init__(self, message: str, transient: bool = False) -> None:
        super().__init__(message)
        self.transient = transient


@dataclass(frozen=True)
class GenerationSettings:
    temperature: float | None = None
    max_tokens: int | None = None

    def to_payload(self) -> dict:
        payload = {}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        return payload


@dataclass(frozen=True)
class ModelReply:
    text: str = ""
    tool_call: ToolCall | None = None


class ModelEndpoint(Protocol):
    def complete(
        self,
        messages: Sequence[Mapping],
        tools: Sequence[Mapping] | None = None,
        settings: GenerationSettings | None = None,
    ) -> ModelReply:
        ...


def _reply_from_entry(entry) -> ModelReply:
    if isinstance(entry, ModelReply):
        return entry
    if isinstance(entry, str):
        return ModelReply(text=entry)
    if isinstance(entry, Mapping):
        if "error" in entry:
            transient = entry["error"] == "transient"
            raise EndpointError(
                entry.get("message", f"scripted {entry['error']} endpoint failure"),
                transient=transient,
            )
        if "tool" in entry:
            return ModelReply(
                text=entry.get("text", ""),
                tool_call=ToolCall(
                    tool_name=entry["tool"],
                    args=dict(entry.get("args", {})),
                    reasoning=entry.get("reasoning", ""),
                ),
            )
        return ModelReply(text=entry.get("text", ""))
    raise TypeError(f"unsupported script entry: {entry!r}")


class ScriptedEndpoint:
    """Deterministic test double: replays a fixed response sequence.

    Entries may be plain strings, ``{"text": ...}``, tool invocations
    ``{"tool": ..., "args": {...}, "reasoning": ...}``, or injected failures
    ``{"error": "transient" | "fatal"}``. Exhausting the script raises
    :class:`EndpointError`.
    """

    def __init__(self, script: Sequence) -> None:
        if not script:
            raise ValueError("scripted endpoint needs a non-empty script")
        self._script = list(script)
        self.calls = 0

    def complete(
        self,
        messages: Sequence[Mapping],
        tools: Sequence[Mapping] | None = None,
        settings: GenerationSettings | None = None,
    ) -> ModelReply:
        if self.calls >= len(self._script):
            raise EndpointError(
                f"scripted endpoint exhausted after {len(self._script)} replies"
            )
        entry = self._script[self.calls]
        self.calls += 1
        return _reply_from_entry(entry)


def scripted_endpoint(script: Sequence) -> ScriptedEndpoint:
    return ScriptedEndpoint(script)


def load_script_file(path: Path) -> dict:
    """Script files map scenario ids to reply lists, with an optional
    ``default`` entry: ``{"scenarios": {id: [...]}, "default": [...]}``."""
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    if "scenarios" not in data and "default" not in data:
        raise ValueError(f"{path}: script file needs a 'scenarios' or 'default' key")
    return data


def script_for_scenario(script_data: Mapping, scenario_id: str) -> list:
    scenarios = script_data.get("scenarios", {})
    if scenario_id in scenarios:
        return scenarios[scenario_id]
    if "default" in script_data:
        return script_data["default"]
    raise EndpointError(f"no scripted replies for scenario {scenario_id!r}")


class HttpChatEndpoint:
    """Chat-completion style HTTP backend.

    Timeouts, connection errors, and 5xx responses raise transient errors
    (the workflow runner retries those); 4xx responses are fatal. The auth
    token comes from the configured environment variable unless passed
    directly.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        token: str | None = None,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout_s: float = 60.0,
        session=None,
    ) -> None:
        import requests

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.token = token if token is not None else os.environ.get(token_env)
        self.timeout_s = timeout_s
        self._session = session if session is not None else requests.Session()

    def complete(
        self,
        messages: Sequence[Mapping],
        tools: Sequence[Mapping] | None = None,
        settings: GenerationSettings | None = None,
    ) -> ModelReply:
        import requests

        payload: dict = {"model": self.model, "messages": list(messages)}
        if tools:
            payload["tools"] = list(tools)
        if settings is not None:
            payload.update(settings.to_payload())
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            response = self._session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout_s,
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise EndpointError(f"endpoint unreachable: {exc}", transient=True) from exc
        if response.status_code >= 500:
            raise EndpointError(f"endpoint error {response.status_code}", transient=True)
        if response.status_code >= 400:
            raise EndpointError(f"endpoint rejected request: {response.status_code}")
        try:
            data = response.json()
            message = data["choices"][0]["message"]
        except (ValueError, KeyError, IndexError) as exc:
            raise EndpointError(f"malformed endpoint response: {exc}", transient=True) from exc
        return self._parse_message(message)

    @staticmethod
    def _parse_message(message: Mapping) -> ModelReply:
        text = message.get("content") or ""
        tool_calls = message.get("tool_calls") or []
        if not tool_calls:
            return ModelReply(text=text)
        function = tool_calls[0].get("function", {})
        raw_args = function.get("arguments", "{}")
        try:
            args = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
        except json.JSONDecodeError:
            logger.warning("unparseable tool arguments %r; treating reply as text", raw_args)
            return ModelReply(text=text or raw_args)
        reasoning = str(args.pop("reasoning", ""))
        return ModelReply(
            text=text,
            tool_call=ToolCall(
                tool_name=function.get("name", ""),
                args=args,
                reasoning=reasoning,
            ),
        )
