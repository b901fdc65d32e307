"""Boundary to the multimodal model.

Three gateway kinds: ``remote`` posts to a chat-completions-style HTTP
endpoint (text + one base64 PNG image part per user message), ``replay``
returns canned responses strictly in order, and ``scripted`` runs a small
deterministic policy that emits valid Reason/Action text — enough to drive
full end-to-end runs without any network. Gateways never touch scene
state.
"""
from __future__ import annotations

import base64
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import AuthFailure, ReplayExhausted, Unreachable

logger = logging.getLogger(__name__)

VLM_ENDPOINT_ENV = "SCENELOOM_VLM_ENDPOINT"
VLM_TOKEN_ENV = "SCENELOOM_VLM_TOKEN"

MAX_RETRIES = 3
BACKOFF_BASE_S = 0.5


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    png: bytes


@dataclass(frozen=True)
class ChatMessage:
    """role is 'system' or 'user'; at most one image part per user message."""

    role: str
    parts: tuple

    def __post_init__(self):
        images = sum(1 for p in self.parts if isinstance(p, ImagePart))
        if images > 1:
            raise ValueError("at most one image part per message")


def text_message(role: str, text: str) -> ChatMessage:
    return ChatMessage(role, (TextPart(text),))


class ReplayGateway:
    """Returns recorded responses strictly in order."""

    kind = "replay"

    def __init__(self, responses: list[str], start_index: int = 0):
        self.responses = list(responses)
        self.index = start_index

    def complete(self, messages) -> str:
        if self.index >= len(self.responses):
            raise ReplayExhausted(
                f"replay has {len(self.responses)} responses; request #{self.index + 1}"
            )
        out = self.responses[self.index]
        self.index += 1
        return out


def _batch_text(reason: str, actions: list[dict]) -> str:
    return (
        f"Reason: {reason}\n\n"
        "Action:\n```json\n" + json.dumps(actions, indent=2) + "\n```"
    )


class ScriptedGateway:
    """Rule-based stand-in policies.

    * ``grid-layout`` (or ``grid-layout:N``): create N objects, place them
      on a grid, then Finish.
    * ``never-finish``: create one probe object and jitter it forever;
      exercises the max-step budget.
    """

    kind = "scripted"

    def __init__(self, policy: str, start_index: int = 0):
        self.policy = policy
        self.index = start_index
        name, _, arg = policy.partition(":")
        self._name = name
        if name == "grid-layout":
            self._count = int(arg) if arg else 4
        elif name == "never-finish":
            self._count = 0
        else:
            raise ValueError(f"unknown scripted policy {policy!r}")

    def complete(self, messages) -> str:
        step = self.index
        self.index += 1
        if self._name == "grid-layout":
            return self._grid_layout(step)
        return self._never_finish(step)

    def _grid_layout(self, step: int) -> str:
        n = self._count
        if step == 0:
            actions = [
                {"type": "Create", "args": [f"item_{i + 1}", f"simple crate variant {i + 1}"]}
                for i in range(n)
            ]
            return _batch_text("Creating all grid objects in one creation batch.", actions)
        if step == 1:
            cols = max(1, int(round(n ** 0.5)))
            actions = []
            for i in range(n):
                row, col = divmod(i, cols)
                actions.append(
                    {"type": "Place", "args": [f"item_{i + 1}", [col * 1.5, row * 1.5, 0.0]]}
                )
            return _batch_text("Spreading the objects on a grid.", actions)
        return _batch_text("Grid layout complete.", [{"type": "Finish", "args": []}])

    def _never_finish(self, step: int) -> str:
        if step == 0:
            return _batch_text(
                "Creating a probe object to nudge around.",
                [{"type": "Create", "args": ["probe", "small wooden cube"]}],
            )
        delta = 0.1 if step % 2 else -0.1
        return _batch_text(
            "Nudging the probe again.",
            [{"type": "Translate", "args": ["probe", "X", delta]}],
        )


class RemoteGateway:
    """HTTP chat endpoint client with retry/backoff on transient failures.

    Request body: {"model": ..., "messages": [{"role", "content": [
    {"type": "text", "text": ...} | {"type": "image_url", "image_url":
    {"url": "data:image/png;base64,..."}}]}]}. The response text is read
    from choices[0].message.content (falling back to a top-level "text").
    The auth token is resolved from the environment at call time and never
    logged or serialized.
    """

    kind = "remote"

    def __init__(self, endpoint: str, model: str = "default",
                 token_env: str = VLM_TOKEN_ENV, timeout_s: float = 120.0,
                 transport=None, backoff_base_s: float = BACKOFF_BASE_S):
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.timeout_s = timeout_s
        self.backoff_base_s = backoff_base_s
        self._transport = transport

    def _wire_messages(self, messages) -> list[dict]:
        wire = []
        for msg in messages:
            content = []
            for part in msg.parts:
                if isinstance(part, TextPart):
                    content.append({"type": "text", "text": part.text})
                elif isinstance(part, ImagePart):
                    b64 = base64.b64encode(part.png).decode("ascii")
                    content.append(
                        {"type": "image_url",
                         "image_url": {"url": f"data:image/png;base64,{b64}"}}
                    )
            wire.append({"role": msg.role, "content": content})
        return wire

    def complete(self, messages) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        headers = {}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {"model": self.model, "messages": self._wire_messages(messages)}
        last_error: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                with httpx.Client(transport=self._transport, timeout=self.timeout_s) as client:
                    resp = client.post(self.endpoint, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("gateway transport error (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"model endpoint rejected credentials ({resp.status_code})")
            if resp.status_code >= 500:
                last_error = Unreachable(f"model endpoint returned HTTP {resp.status_code}")
                logger.warning("gateway HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code != 200:
                raise Unreachable(f"model endpoint returned HTTP {resp.status_code}")
            doc = resp.json()
            if "choices" in doc:
                return doc["choices"][0]["message"]["content"]
            if "text" in doc:
                return doc["text"]
            raise Unreachable("model endpoint response had no text content")
        raise Unreachable(f"model endpoint unreachable after retries: {last_error}")


def gateway_from_config(config: dict, start_index: int = 0):
    """Build a gateway; ``start_index`` fast-forwards replay/scripted kinds
    when resuming a session mid-run."""
    kind = config.get("kind", "scripted")
    if kind == "replay":
        if "responses" in config:
            responses = list(config["responses"])
        else:
            responses = json.loads(Path(config["path"]).read_text())
        return ReplayGateway(responses, start_index)
    if kind == "scripted":
        return ScriptedGateway(config.get("policy", "grid-layout"), start_index)
    if kind == "remote":
        endpoint = config.get("endpoint") or os.environ.get(VLM_ENDPOINT_ENV)
        if not endpoint:
            raise ValueError(
                f"remote gateway needs an endpoint (config or {VLM_ENDPOINT_ENV})"
            )
        return RemoteGateway(
            endpoint,
            model=config.get("model", "default"),
            timeout_s=config.get("timeout_s", 120.0),
        )
    raise ValueError(f"unknown gateway kind {kind!r}")
