"""Chat transport to an OpenAI-compatible multimodal endpoint, plus a
scripted mock with the same interface and error taxonomy.

Wire format is the chat-completions schema: messages carry a list of
content parts ({"type": "text"} / {"type": "image_url"} with a base64 data
URI). Transport-level failures (connection drop, timeout) are retried with
exponential backoff up to a budget; a well-formed error response is never
retried. Credentials come from the environment and are never persisted.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    ImageTooLargeError,
    InvalidArgumentError,
    ProtocolError,
    RequestError,
    TransportError,
    UnsupportedImageError,
    VlmTimeoutError,
)

__all__ = [
    "TextPart",
    "ImagePart",
    "Message",
    "ChatRequest",
    "ChatResponse",
    "VlmClient",
    "OpenAiCompatClient",
    "MockVlmClient",
    "encode_image",
    "to_wire",
    "parse_wire",
    "ENV_BASE_URL",
    "ENV_API_KEY",
    "ENV_MODEL",
]

ENV_BASE_URL = "VLM_BASE_URL"
ENV_API_KEY = "VLM_API_KEY"
ENV_MODEL = "VLM_MODEL"

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024
DEFAULT_TIMEOUT_MS = 60_000
DEFAULT_IMAGE_LIMIT = 10 * 1024 * 1024  # pre-encode bytes

_MAGIC = {
    b"\x89PNG\r\n\x1a\n": "image/png",
    b"\xff\xd8\xff": "image/jpeg",
}
_KNOWN_OTHERS = {
    b"GIF8": "gif",
    b"BM": "bmp",
    b"II*\x00": "tiff",
    b"MM\x00*": "tiff",
    b"RIFF": "webp",
}


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    media_type: str
    data_b64: str

    def decode(self) -> bytes:
        return base64.b64decode(self.data_b64)


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    parts: tuple[TextPart | ImagePart, ...]

    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    messages: tuple[Message, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout_ms: int = DEFAULT_TIMEOUT_MS


@dataclass(frozen=True)
class ChatResponse:
    answer_text: str
    model_name: str
    token_usage: dict | None = None
    finish_reason: str = "stop"
    attempts: int = 1


def validate_request(req: ChatRequest) -> None:
    """Local structural checks, enforced before any network activity:
    exactly one system message first, images only in user messages, roles
    alternating user/assistant after the first user message."""
    msgs = req.messages
    if not msgs or msgs[0].role != "system":
        raise InvalidArgumentError("first message must be the single system message")
    if any(m.role == "system" for m in msgs[1:]):
        raise InvalidArgumentError("only one system message is allowed")
    for m in msgs:
        if m.role != "user" and any(isinstance(p, ImagePart) for p in m.parts):
            raise InvalidArgumentError(f"images are only allowed in user messages, found in {m.role!r}")
    rest = msgs[1:]
    if not rest or rest[0].role != "user":
        raise InvalidArgumentError("a user message must follow the system message")
    for i, m in enumerate(rest):
        expected = "user" if i % 2 == 0 else "assistant"
        if m.role != expected:
            raise InvalidArgumentError(
                f"roles must alternate user/assistant; message {i + 1} is {m.role!r}, expected {expected!r}"
            )
    if rest[-1].role != "user":
        raise InvalidArgumentError("the final message must be from the user")


def encode_image(data: bytes, *, max_bytes: int = DEFAULT_IMAGE_LIMIT) -> ImagePart:
    """Wrap raw PNG/JPEG bytes as a base64 payload, enforcing the size limit."""
    if len(data) > max_bytes:
        raise ImageTooLargeError(len(data), max_bytes)
    for magic, media_type in _MAGIC.items():
        if data.startswith(magic):
            return ImagePart(media_type, base64.b64encode(data).decode("ascii"))
    for magic, name in _KNOWN_OTHERS.items():
        if data.startswith(magic):
            raise UnsupportedImageError(name)
    raise UnsupportedImageError("unknown")


def to_wire(req: ChatRequest) -> dict:
    """Serialize to the chat-completions JSON body."""
    messages = []
    for m in req.messages:
        content = []
        for p in m.parts:
            if isinstance(p, TextPart):
                content.append({"type": "text", "text": p.text})
            else:
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:{p.media_type};base64,{p.data_b64}"},
                    }
                )
        messages.append({"role": m.role, "content": content})
    return {
        "model": req.model_name,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }


def parse_wire(body: dict, *, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> ChatRequest:
    """Parse a chat-completions body back into a ChatRequest. timeout_ms is
    client-side state and never travels on the wire."""
    try:
        messages = []
        for m in body["messages"]:
            parts: list[TextPart | ImagePart] = []
            for p in m["content"]:
                if p["type"] == "text":
                    parts.append(TextPart(p["text"]))
                elif p["type"] == "image_url":
                    url = p["image_url"]["url"]
                    head, _, b64 = url.partition(";base64,")
                    if not head.startswith("data:") or not b64:
                        raise ProtocolError(f"unsupported image url: {url[:40]}")
                    parts.append(ImagePart(head[len("data:"):], b64))
                else:
                    raise ProtocolError(f"unknown content part type {p['type']!r}")
            messages.append(Message(m["role"], tuple(parts)))
        return ChatRequest(
            model_name=body["model"],
            messages=tuple(messages),
            temperature=body.get("temperature", DEFAULT_TEMPERATURE),
            max_tokens=body.get("max_tokens", DEFAULT_MAX_TOKENS),
            timeout_ms=timeout_ms,
        )
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed chat request body: {exc!r}") from exc


class VlmClient:
    """Shared behavior: validation, retry-on-transport-error, attempt caps.

    Subclasses implement a single attempt; chat() guarantees the number of
    attempts never exceeds 1 + retry_budget and that well-formed error
    responses (RequestError) and protocol violations are never retried.
    """

    def __init__(self, *, retry_budget: int = 2, backoff_s: float = 0.5,
                 max_concurrent: int | None = None):
        if retry_budget < 0:
            raise InvalidArgumentError("retry_budget must be >= 0")
        self.retry_budget = retry_budget
        self.backoff_s = backoff_s
        self._gate = threading.BoundedSemaphore(max_concurrent) if max_concurrent else None

    def chat(self, req: ChatRequest) -> ChatResponse:
        validate_request(req)
        attempts = 0
        last_error: TransportError | None = None
        while attempts <= self.retry_budget:
            attempts += 1
            try:
                if self._gate:
                    with self._gate:
                        response = self._attempt(req)
                else:
                    response = self._attempt(req)
                return replace(response, attempts=attempts)
            except TransportError as exc:
                last_error = exc
                if attempts <= self.retry_budget and self.backoff_s > 0:
                    time.sleep(self.backoff_s * (2 ** (attempts - 1)))
        assert last_error is not None
        raise last_error

    def _attempt(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError


def _requests_transport(url: str, payload: dict, headers: dict, timeout_s: float) -> tuple[int, str]:
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
    except requests.exceptions.Timeout as exc:
        raise VlmTimeoutError(int(timeout_s * 1000)) from exc
    except requests.exceptions.RequestException as exc:
        raise TransportError(str(exc)) from exc
    return resp.status_code, resp.text


class OpenAiCompatClient(VlmClient):
    """Live client for any endpoint speaking the chat-completions protocol."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        model_name: str = "qwen2-vl-72b-instruct",
        *,
        retry_budget: int = 2,
        backoff_s: float = 0.5,
        max_concurrent: int | None = None,
        transport: Callable[[str, dict, dict, float], tuple[int, str]] | None = None,
    ):
        super().__init__(retry_budget=retry_budget, backoff_s=backoff_s,
                         max_concurrent=max_concurrent)
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model_name = model_name
        self._transport = transport or _requests_transport

    @classmethod
    def from_env(cls, env, **kwargs) -> "OpenAiCompatClient":
        base_url = env.get(ENV_BASE_URL)
        if not base_url:
            raise InvalidArgumentError(f"{ENV_BASE_URL} is not set")
        return cls(
            base_url,
            api_key=env.get(ENV_API_KEY),
            model_name=env.get(ENV_MODEL, "qwen2-vl-72b-instruct"),
            **kwargs,
        )

    def _attempt(self, req: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        started = time.monotonic()
        status, text = self._transport(
            f"{self.base_url}/chat/completions", to_wire(req), headers, req.timeout_ms / 1000.0
        )
        elapsed_ms = int((time.monotonic() - started) * 1000)
        if status >= 400:
            message = text[:500]
            try:
                message = json.loads(text)["error"]["message"]
            except (json.JSONDecodeError, KeyError, TypeError):
                pass
            raise RequestError(message, status=status)
        try:
            body = json.loads(text)
            choice = body["choices"][0]
            answer = choice["message"]["content"]
            if not isinstance(answer, str) or not answer:
                raise ProtocolError("empty or non-text answer content")
            usage = body.get("usage")
            token_usage = None
            if isinstance(usage, dict):
                token_usage = {
                    "prompt": usage.get("prompt_tokens"),
                    "completion": usage.get("completion_tokens"),
                }
            return ChatResponse(
                answer_text=answer,
                model_name=body.get("model", req.model_name),
                token_usage=token_usage,
                finish_reason=choice.get("finish_reason", "stop"),
            )
        except ProtocolError:
            raise
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(
                f"malformed chat-completions body after {elapsed_ms} ms: {exc!r}"
            ) from exc


@dataclass
class _ScriptEntry:
    answer: str
    match: str | None = None
    fail_times: int = 0


class MockVlmClient(VlmClient):
    """Deterministic scripted backend for tests and offline runs.

    The script is a JSON array of {match, answer, fail_times}: the first
    entry whose `match` substring occurs in the last user text (null matches
    anything) supplies the answer; `fail_times` injects that many transport
    failures before succeeding.
    """

    def __init__(self, script: Sequence[dict], *, model_name: str = "mock-vlm",
                 retry_budget: int = 2, backoff_s: float = 0.0,
                 max_concurrent: int | None = None):
        super().__init__(retry_budget=retry_budget, backoff_s=backoff_s,
                         max_concurrent=max_concurrent)
        self.model_name = model_name
        self._entries = [
            _ScriptEntry(
                answer=e["answer"], match=e.get("match"), fail_times=int(e.get("fail_times", 0))
            )
            for e in script
        ]
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "MockVlmClient":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), **kwargs)

    def _attempt(self, req: ChatRequest) -> ChatResponse:
        last_user = req.messages[-1].text()
        with self._lock:
            for entry in self._entries:
                if entry.match is None or entry.match in last_user:
                    if entry.fail_times > 0:
                        entry.fail_times -= 1
                        raise TransportError("scripted transport failure")
                    return ChatResponse(answer_text=entry.answer, model_name=self.model_name)
        raise RequestError(f"no scripted answer matches {last_user[:80]!r}", status=404)
