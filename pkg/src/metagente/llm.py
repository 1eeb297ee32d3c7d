"""Chat-completion transport with tiered models and record/replay cassettes.

The client speaks the standard OpenAI-compatible wire format (``POST
<base_url>/chat/completions``) and runs in one of three modes:

* ``live``    - send requests over HTTP, retrying transient failures;
* ``record``  - live, plus append every exchange to a cassette file;
* ``replay``  - serve responses from a cassette only, with zero network I/O.

Requests are identified by a fingerprint of their canonical JSON body, so
replay is insensitive to dict ordering or serialization whitespace but
sensitive to any change in message content, model, temperature, or schema.
"""

import enum
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import httpx
import jsonschema

from ._canonical import canonical_json, sha256_hex
from .errors import CassetteError, ReplayMissError, SchemaViolationError, TransportError

API_KEY_ENV = "METAGENTE_API_KEY"

ROLES = ("system", "user", "assistant")

# Transport callables take an OpenAI-style request body and return the raw
# response dict; used for HTTP in production and for scripted fakes in tests.
Transport = Callable[[dict], dict]


class Tier(enum.Enum):
    """Model tiers: small worker models do the task, a larger supervisor guides them."""

    WORKER = "worker"
    SUPERVISOR = "supervisor"


@dataclass(frozen=True)
class TierRegistry:
    worker: str = "gpt-4o-mini"
    supervisor: str = "gpt-4o"

    def __post_init__(self):
        if not self.worker or not self.supervisor:
            raise ValueError("both model tiers must resolve to non-empty model ids")

    def model_for(self, tier: Tier) -> str:
        return self.worker if tier is Tier.WORKER else self.supervisor


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"invalid message role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    response_schema: Mapping[str, Any] | None = None

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("request model_id must be non-empty")
        if not self.messages:
            raise ValueError("request must contain at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def wire_body(self) -> dict:
        body: dict[str, Any] = {
            "model": self.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
        }
        if self.response_schema is not None:
            body["response_format"] = {
                "type": "json_schema",
                "json_schema": dict(self.response_schema),
            }
        return body

    def fingerprint(self) -> str:
        return sha256_hex(canonical_json(self.wire_body()))

    def with_reask(self, bad_content: str, problem: str) -> "ChatRequest":
        """Follow-up request appended after an invalid structured response."""
        note = (
            "The previous reply was not valid for the required JSON schema: "
            f"{problem[:200]}. Reply again with only a JSON object matching the schema."
        )
        return ChatRequest(
            model_id=self.model_id,
            messages=self.messages
            + (ChatMessage("assistant", bad_content), ChatMessage("user", note)),
            temperature=self.temperature,
            response_schema=self.response_schema,
        )


def request(
    model_id: str,
    messages: Iterable[tuple[str, str]],
    temperature: float = 0.0,
    response_schema: Mapping[str, Any] | None = None,
) -> ChatRequest:
    """Convenience constructor from (role, content) pairs."""
    return ChatRequest(
        model_id=model_id,
        messages=tuple(ChatMessage(role, content) for role, content in messages),
        temperature=temperature,
        response_schema=response_schema,
    )


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    model_id: str
    usage: TokenUsage = TokenUsage()
    latency_ms: int = 0

    def to_wire(self) -> dict:
        return {
            "content": self.content,
            "model_id": self.model_id,
            "usage": {
                "prompt_tokens": self.usage.prompt_tokens,
                "completion_tokens": self.usage.completion_tokens,
            },
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_wire(cls, data: Mapping[str, Any]) -> "ChatResponse":
        usage = data.get("usage", {})
        return cls(
            content=data["content"],
            model_id=data["model_id"],
            usage=TokenUsage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            ),
            latency_ms=int(data.get("latency_ms", 0)),
        )


# --- cassette ----------------------------------------------------------------


@dataclass(frozen=True)
class CassetteEntry:
    fingerprint: str
    request: dict
    response: dict
    recorded_at: str


class Cassette:
    """Ordered request/response log keyed by request fingerprint.

    Stored as line-delimited JSON so recorded sessions diff cleanly. When
    bound to a path, ``record`` appends through to the file immediately.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[CassetteEntry] = []
        self._index: dict[str, ChatResponse] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        cassette = cls(path)
        raw = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                entry = CassetteEntry(
                    fingerprint=data["fingerprint"],
                    request=data["request"],
                    response=data["response"],
                    recorded_at=data.get("recorded_at", ""),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CassetteError(f"{path}:{lineno}: malformed cassette entry: {exc}") from exc
            if entry.fingerprint in cassette._index:
                raise CassetteError(
                    f"{path}:{lineno}: duplicate fingerprint {entry.fingerprint}"
                )
            cassette.entries.append(entry)
            cassette._index[entry.fingerprint] = ChatResponse.from_wire(entry.response)
        return cassette

    def lookup(self, fingerprint: str) -> ChatResponse | None:
        return self._index.get(fingerprint)

    def record(self, req: ChatRequest, resp: ChatResponse) -> bool:
        """Append an exchange; returns False (and stores nothing) for a known fingerprint."""
        fingerprint = req.fingerprint()
        with self._lock:
            if fingerprint in self._index:
                return False
            entry = CassetteEntry(
                fingerprint=fingerprint,
                request=req.wire_body(),
                response=resp.to_wire(),
                recorded_at=datetime.now(timezone.utc).isoformat(),
            )
            self.entries.append(entry)
            self._index[fingerprint] = resp
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(self._entry_line(entry))
        return True

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(self._entry_line(entry))

    @staticmethod
    def _entry_line(entry: CassetteEntry) -> str:
        record = {
            "fingerprint": entry.fingerprint,
            "request": entry.request,
            "response": entry.response,
            "recorded_at": entry.recorded_at,
        }
        return json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"

    def __len__(self) -> int:
        return len(self.entries)


# --- telemetry ----------------------------------------------------------------


@dataclass(frozen=True)
class RequestEvent:
    fingerprint: str
    model_id: str
    attempts: int
    replayed: bool
    prompt_tokens: int
    completion_tokens: int


class Telemetry:
    """Thread-safe per-session accounting of requests and token usage."""

    def __init__(self):
        self._lock = threading.Lock()
        self._events: list[RequestEvent] = []

    def add(self, event: RequestEvent) -> None:
        with self._lock:
            self._events.append(event)

    @property
    def events(self) -> tuple[RequestEvent, ...]:
        with self._lock:
            return tuple(self._events)

    @property
    def total_requests(self) -> int:
        return len(self.events)

    @property
    def total_prompt_tokens(self) -> int:
        return sum(e.prompt_tokens for e in self.events)

    @property
    def total_completion_tokens(self) -> int:
        return sum(e.completion_tokens for e in self.events)


# --- transports ---------------------------------------------------------------


class TransportFailure(Exception):
    """Internal signal from a transport; ``retryable`` gates the backoff loop."""

    def __init__(self, message: str, retryable: bool):
        super().__init__(message)
        self.retryable = retryable


class HttpTransport:
    """POSTs OpenAI-compatible bodies to ``<base_url>/chat/completions``."""

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 60.0):
        key = api_key or os.environ.get(API_KEY_ENV, "")
        if not key:
            raise TransportError(
                f"live transport needs an API key: pass api_key or set {API_KEY_ENV}"
            )
        self._client = httpx.Client(
            base_url=base_url,
            timeout=timeout,
            headers={"Authorization": f"Bearer {key}"},
        )

    def __call__(self, body: dict) -> dict:
        try:
            response = self._client.post("chat/completions", json=body)
        except httpx.TimeoutException as exc:
            raise TransportFailure(f"timeout: {exc}", retryable=True) from exc
        except httpx.HTTPError as exc:
            raise TransportFailure(f"connection error: {exc}", retryable=True) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportFailure(f"HTTP {response.status_code}", retryable=True)
        if response.status_code != 200:
            raise TransportFailure(
                f"HTTP {response.status_code}: {response.text[:200]}", retryable=False
            )
        try:
            return response.json()
        except ValueError as exc:
            raise TransportFailure(f"non-JSON response body: {exc}", retryable=False) from exc

    def close(self) -> None:
        self._client.close()


class Mode(enum.Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


# --- client -------------------------------------------------------------------


class LLMClient:
    """Shared handle for all agents; safe for concurrent use.

    An in-flight semaphore bounds parallel transport calls and cassette
    writes go through a single internal lock.
    """

    def __init__(
        self,
        mode: Mode = Mode.LIVE,
        tiers: TierRegistry | None = None,
        cassette: Cassette | None = None,
        transport: Transport | None = None,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 5,
        backoff_initial: float = 0.5,
        backoff_factor: float = 2.0,
        backoff_jitter: float = 0.2,
        max_in_flight: int = 8,
        reask_limit: int = 2,
        sleeper: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        if mode in (Mode.RECORD, Mode.REPLAY) and cassette is None:
            raise ValueError(f"{mode.value} mode requires a cassette")
        if mode in (Mode.LIVE, Mode.RECORD) and transport is None:
            if base_url is None:
                raise ValueError(f"{mode.value} mode requires a transport or base_url")
            transport = HttpTransport(base_url, api_key=api_key, timeout=timeout)
        self.mode = mode
        self.tiers = tiers or TierRegistry()
        self.cassette = cassette
        self.telemetry = Telemetry()
        self._transport = transport
        self._max_attempts = max_attempts
        self._backoff_initial = backoff_initial
        self._backoff_factor = backoff_factor
        self._backoff_jitter = backoff_jitter
        self._reask_limit = reask_limit
        self._sleeper = sleeper
        self._rng = rng or random.Random()
        self._in_flight = threading.Semaphore(max_in_flight)

    def model_for(self, tier: Tier) -> str:
        return self.tiers.model_for(tier)

    def complete(self, req: ChatRequest) -> ChatResponse:
        """Resolve one request, enforcing the structured-output contract.

        An invalid structured response triggers up to ``reask_limit``
        follow-up requests before a SchemaViolationError. Re-asks are
        ordinary requests, so they record and replay like any other.
        """
        current = req
        problem = ""
        for _ in range(self._reask_limit + 1):
            response = self._obtain(current)
            if req.response_schema is None:
                return response
            problem = _schema_problem(response.content, req.response_schema)
            if problem is None:
                return response
            current = current.with_reask(response.content, problem)
        raise SchemaViolationError(
            f"structured output still invalid after {self._reask_limit} re-asks: {problem}"
        )

    def _obtain(self, req: ChatRequest) -> ChatResponse:
        fingerprint = req.fingerprint()
        if self.mode is Mode.REPLAY:
            assert self.cassette is not None
            response = self.cassette.lookup(fingerprint)
            if response is None:
                raise ReplayMissError(fingerprint)
            self._note(fingerprint, req.model_id, attempts=0, replayed=True, resp=response)
            return response

        response = self._send_with_retries(req)
        if self.mode is Mode.RECORD:
            assert self.cassette is not None
            self.cassette.record(req, response)
        return response

    def _send_with_retries(self, req: ChatRequest) -> ChatResponse:
        assert self._transport is not None
        body = req.wire_body()
        delay = self._backoff_initial
        with self._in_flight:
            for attempt in range(1, self._max_attempts + 1):
                started = time.monotonic()
                try:
                    raw = self._transport(body)
                except TransportFailure as failure:
                    if failure.retryable and attempt < self._max_attempts:
                        self._sleeper(self._jittered(delay))
                        delay *= self._backoff_factor
                        continue
                    raise TransportError(
                        f"transport failed after {attempt} attempt(s): {failure}"
                    ) from failure
                latency_ms = int((time.monotonic() - started) * 1000)
                response = _parse_openai_response(raw, req.model_id, latency_ms)
                self._note(
                    req.fingerprint(), req.model_id, attempts=attempt, replayed=False, resp=response
                )
                return response
        raise TransportError("unreachable retry loop exit")  # pragma: no cover

    def _jittered(self, delay: float) -> float:
        spread = self._backoff_jitter * (2 * self._rng.random() - 1)
        return max(0.0, delay * (1 + spread))

    def _note(
        self, fingerprint: str, model_id: str, attempts: int, replayed: bool, resp: ChatResponse
    ) -> None:
        self.telemetry.add(
            RequestEvent(
                fingerprint=fingerprint,
                model_id=model_id,
                attempts=attempts,
                replayed=replayed,
                prompt_tokens=resp.usage.prompt_tokens,
                completion_tokens=resp.usage.completion_tokens,
            )
        )


def _parse_openai_response(raw: Mapping[str, Any], model_id: str, latency_ms: int) -> ChatResponse:
    try:
        content = raw["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion response: {exc}") from exc
    usage = raw.get("usage") or {}
    return ChatResponse(
        content=content if content is not None else "",
        model_id=str(raw.get("model") or model_id),
        usage=TokenUsage(
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        ),
        latency_ms=latency_ms,
    )


def _schema_problem(content: str, schema_descriptor: Mapping[str, Any]) -> str | None:
    """Why ``content`` fails the schema, or None when it validates."""
    try:
        parsed = json.loads(content)
    except json.JSONDecodeError as exc:
        return f"not valid JSON ({exc.msg} at position {exc.pos})"
    try:
        jsonschema.validate(parsed, schema_descriptor["schema"])
    except jsonschema.ValidationError as exc:
        return exc.message
    return None
