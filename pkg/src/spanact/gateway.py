"""Drive a chat backend through the prime-then-query protocol.

Every instance gets a fresh session: each prompt part is sent as its own
user turn (the assistant's acknowledgements are recorded but never
interpreted), then the instance question is asked and the final assistant
text becomes the result. Batch runs bound concurrency with a worker pool,
throttle request issuance with a shared token bucket, and append each
finished instance to a checkpoint file so interrupted runs resume without
re-querying anything already answered.

Two backends ship: "replay" (offline, deterministic, for tests and demos)
and "http-chat" (a chat-completions-style HTTP endpoint with bearer auth
taken from an environment variable; credentials never reach transcripts,
manifests, or logs).
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence

import httpx

from .corpus import CorpusInstance
from .errors import (
    BackendError,
    BackendTimeout,
    DataError,
    TransientBackendError,
    UsageError,
)
from .prompting import PromptSpec, render_question

OK = "OK"
REFUSED = "REFUSED"
TIMEOUT = "TIMEOUT"
BACKEND_ERROR = "BACKEND_ERROR"
STATUSES = (OK, REFUSED, TIMEOUT, BACKEND_ERROR)

ACK_TEXT = "Acknowledged."


@dataclass(frozen=True)
class BackendConfig:
    """Connection and batch-behavior settings for one backend."""

    kind: str  # "replay" | "http-chat"
    fixture: Optional[str] = None
    endpoint: Optional[str] = None
    model_name: Optional[str] = None
    auth_env_var: Optional[str] = None
    rate_limit: float = 0.0  # requests per minute; 0 disables throttling
    max_retries: int = 2
    timeout: float = 30.0
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.kind == "replay":
            if not self.fixture:
                raise DataError("replay backend requires a fixture path")
        elif self.kind == "http-chat":
            if not self.endpoint or not self.model_name:
                raise DataError("http-chat backend requires endpoint and model_name")
        else:
            raise DataError(f"unknown backend kind {self.kind!r}")
        if self.max_retries < 0 or self.parallelism < 1 or self.timeout <= 0:
            raise DataError("max_retries >= 0, parallelism >= 1, timeout > 0 required")

    @classmethod
    def from_file(cls, path: str | Path) -> "BackendConfig":
        p = Path(path)
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read backend config {path}: {exc}") from exc
        fixture = data.get("fixture")
        if fixture:
            # Fixture paths travel with the config file.
            fixture = str((p.parent / fixture).resolve())
        try:
            return cls(
                kind=data["kind"],
                fixture=fixture,
                endpoint=data.get("endpoint"),
                model_name=data.get("model_name"),
                auth_env_var=data.get("auth_env_var"),
                rate_limit=float(data.get("rate_limit", 0.0)),
                max_retries=int(data.get("max_retries", 2)),
                timeout=float(data.get("timeout", 30.0)),
                parallelism=int(data.get("parallelism", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed backend config {path}: {exc}") from exc


@dataclass(frozen=True)
class Turn:
    role: str  # "user" | "assistant"
    text: str

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "text": self.text}


@dataclass
class Transcript:
    """The full per-instance conversation, for audit and review."""

    instance_id: str
    backend: str
    turns: list[Turn] = field(default_factory=list)
    started_at: str = ""
    ended_at: str = ""
    attempt_count: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "backend": self.backend,
            "turns": [t.to_dict() for t in self.turns],
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "attempt_count": self.attempt_count,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Transcript":
        return cls(
            instance_id=data["instance_id"],
            backend=data.get("backend", ""),
            turns=[Turn(t["role"], t["text"]) for t in data.get("turns", [])],
            started_at=data.get("started_at", ""),
            ended_at=data.get("ended_at", ""),
            attempt_count=int(data.get("attempt_count", 1)),
        )


@dataclass(frozen=True)
class RawResult:
    instance_id: str
    status: str
    response_text: str = ""

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise DataError(f"unknown result status {self.status!r}")
        if self.status == OK and not self.response_text:
            raise DataError("OK result requires non-empty response_text")

    def to_dict(self) -> dict[str, str]:
        return {
            "instance_id": self.instance_id,
            "status": self.status,
            "response_text": self.response_text,
        }


class ChatSession(Protocol):
    def prime(self, text: str) -> str: ...

    def ask(self, text: str) -> str: ...


class ChatBackend(Protocol):
    def open_session(self, instance_id: str) -> ChatSession: ...

    def descriptor(self) -> str: ...


class RateLimiter:
    """Token bucket over requests per minute; 0 means unthrottled.

    The bucket holds at most one second's worth of quota (minimum one
    token), so issuance is smooth rather than bursty. Clock and sleep are
    injectable for deterministic tests.
    """

    def __init__(
        self,
        per_minute: float,
        burst: Optional[float] = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.rate = per_minute / 60.0
        self.capacity = burst if burst is not None else max(1.0, self.rate)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self.last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
                self.last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


class RefusalDetector:
    """Heuristic: a response with no answer marker that matches a refusal
    pattern is a refusal. Both lists are configurable."""

    DEFAULT_MARKERS = ("annotated version", "no speech act")
    DEFAULT_PATTERNS = (
        "i can't",
        "i cannot",
        "i won't",
        "i am not able",
        "i'm not able",
        "unable to",
        "cannot assist",
        "can't assist",
        "cannot help with",
        "against my",
        "content policy",
        "as an ai",
    )

    def __init__(
        self,
        answer_markers: Sequence[str] = DEFAULT_MARKERS,
        refusal_patterns: Sequence[str] = DEFAULT_PATTERNS,
    ):
        self.answer_markers = tuple(m.casefold() for m in answer_markers)
        self.refusal_patterns = tuple(p.casefold() for p in refusal_patterns)

    def is_refusal(self, text: str) -> bool:
        folded = text.casefold()
        if any(m in folded for m in self.answer_markers):
            return False
        return any(p in folded for p in self.refusal_patterns)


class ReplaySession:
    def __init__(self, backend: "ReplayBackend", instance_id: str):
        self._backend = backend
        self._instance_id = instance_id

    def prime(self, text: str) -> str:
        return ACK_TEXT

    def ask(self, text: str) -> str:
        return self._backend.lookup(self._instance_id)


class ReplayBackend:
    """Deterministic offline backend: instance_id -> canned response."""

    def __init__(self, responses: dict[str, str], name: str = "replay"):
        self._responses = dict(responses)
        self._name = name

    def open_session(self, instance_id: str) -> ReplaySession:
        return ReplaySession(self, instance_id)

    def descriptor(self) -> str:
        return self._name

    def lookup(self, instance_id: str) -> str:
        try:
            return self._responses[instance_id]
        except KeyError:
            raise BackendError(f"replay fixture has no entry for {instance_id!r}") from None


def make_replay_backend(fixture_path: str | Path) -> ReplayBackend:
    """Load a replay fixture: JSONL of {instance_id, response_text}."""
    responses: dict[str, str] = {}
    p = Path(fixture_path)
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read replay fixture {fixture_path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            responses[data["instance_id"]] = data["response_text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{fixture_path}:{lineno}: malformed replay record: {exc}") from exc
    return ReplayBackend(responses, name=f"replay:{p.name}")


class HttpChatSession:
    def __init__(self, backend: "HttpChatBackend"):
        self._backend = backend
        self._messages: list[dict[str, str]] = []

    def _exchange(self, text: str) -> str:
        self._messages.append({"role": "user", "content": text})
        answer = self._backend.complete(self._messages)
        self._messages.append({"role": "assistant", "content": answer})
        return answer

    def prime(self, text: str) -> str:
        return self._exchange(text)

    def ask(self, text: str) -> str:
        return self._exchange(text)


class HttpChatBackend:
    """Chat-completions-style HTTP backend.

    Request body: {model, messages:[{role, content}], temperature: 0};
    answer read from choices[0].message.content. The bearer token is read
    from the environment at request time and never stored on the object.
    """

    def __init__(self, config: BackendConfig, limiter: Optional[RateLimiter] = None):
        if config.kind != "http-chat":
            raise UsageError("HttpChatBackend requires an http-chat config")
        self._config = config
        self._limiter = limiter or RateLimiter(config.rate_limit)
        self._client = httpx.Client(timeout=config.timeout)

    def open_session(self, instance_id: str) -> HttpChatSession:
        return HttpChatSession(self)

    def descriptor(self) -> str:
        return f"http-chat:{self._config.model_name}@{self._config.endpoint}"

    def close(self) -> None:
        self._client.close()

    def complete(self, messages: list[dict[str, str]]) -> str:
        self._limiter.acquire()
        headers = {}
        if self._config.auth_env_var:
            credential = os.environ.get(self._config.auth_env_var, "")
            if credential:
                headers["Authorization"] = f"Bearer {credential}"
        body = {
            "model": self._config.model_name,
            "messages": messages,
            "temperature": 0,
        }
        try:
            response = self._client.post(
                str(self._config.endpoint), json=body, headers=headers
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"backend timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"backend returned HTTP {response.status_code}")
        if response.status_code >= 400:
            raise BackendError(f"backend returned HTTP {response.status_code}")
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        if not isinstance(content, str) or not content:
            raise BackendError("backend returned an empty completion")
        return content


def make_backend(config: BackendConfig) -> ChatBackend:
    if config.kind == "replay":
        assert config.fixture is not None
        return make_replay_backend(config.fixture)
    return HttpChatBackend(config)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def annotate_instance(
    backend: ChatBackend,
    prompt_parts: Sequence[str],
    question: str,
    instance_id: str,
    max_retries: int = 0,
    refusal: Optional[RefusalDetector] = None,
) -> tuple[RawResult, Transcript]:
    """One fresh session: prime every part, ask the question, classify.

    Transient failures retry the whole session up to max_retries times;
    non-transient failures stop immediately. Errors never escape: they
    become TIMEOUT or BACKEND_ERROR results with the transcript preserved.
    """
    if not prompt_parts:
        raise UsageError("annotate_instance requires at least one prompt part")
    refusal = refusal or RefusalDetector()
    transcript = Transcript(instance_id, backend.descriptor())
    last_error: Optional[BackendError] = None
    attempts = 0
    while attempts <= max_retries:
        attempts += 1
        transcript = Transcript(
            instance_id, backend.descriptor(), started_at=_now(), attempt_count=attempts
        )
        try:
            session = backend.open_session(instance_id)
            for part in prompt_parts:
                transcript.turns.append(Turn("user", part))
                ack = session.prime(part)
                transcript.turns.append(Turn("assistant", ack))
            transcript.turns.append(Turn("user", question))
            answer = session.ask(question)
            transcript.turns.append(Turn("assistant", answer))
            transcript.ended_at = _now()
            status = REFUSED if refusal.is_refusal(answer) else OK
            return RawResult(instance_id, status, answer), transcript
        except TransientBackendError as exc:
            last_error = exc
            transcript.ended_at = _now()
            continue
        except BackendError as exc:
            last_error = exc
            transcript.ended_at = _now()
            break
    status = TIMEOUT if isinstance(last_error, BackendTimeout) else BACKEND_ERROR
    return RawResult(instance_id, status, ""), transcript


@dataclass
class BatchSummary:
    total: int
    from_checkpoint: int
    queried: int
    status_counts: dict[str, int]


def read_checkpoint(path: str | Path) -> dict[str, RawResult]:
    """Load finished results from a checkpoint, tolerating a torn tail line.

    Only OK and REFUSED are final; TIMEOUT/BACKEND_ERROR entries are
    dropped so a resumed batch retries them.
    """
    p = Path(path)
    if not p.exists():
        return {}
    out: dict[str, RawResult] = {}
    lines = p.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            result = RawResult(data["instance_id"], data["status"], data.get("response_text", ""))
        except (json.JSONDecodeError, KeyError, TypeError, DataError) as exc:
            if lineno == len(lines):
                break  # torn final line from an interrupted write
            raise DataError(f"{path}:{lineno}: corrupt checkpoint record: {exc}") from exc
        if result.status in (OK, REFUSED):
            out[result.instance_id] = result
    return out


def run_batch(
    backend: ChatBackend,
    prompt_parts: Sequence[str],
    spec: PromptSpec,
    instances: Sequence[CorpusInstance],
    config: Optional[BackendConfig] = None,
    checkpoint_path: Optional[str | Path] = None,
    refusal: Optional[RefusalDetector] = None,
    progress: Optional[Callable[[RawResult], None]] = None,
) -> tuple[list[tuple[RawResult, Optional[Transcript]]], BatchSummary]:
    """Annotate a batch; returns per-instance results in input order.

    Instances already OK/REFUSED in the checkpoint are served from it
    (transcript None). Individual failures are recorded, never raised.
    """
    if not instances:
        raise UsageError("run_batch requires at least one instance")
    max_retries = config.max_retries if config else 0
    parallelism = config.parallelism if config else 1
    cached = read_checkpoint(checkpoint_path) if checkpoint_path else {}
    results: list[Optional[tuple[RawResult, Optional[Transcript]]]] = [None] * len(instances)
    to_query: list[int] = []
    for idx, inst in enumerate(instances):
        hit = cached.get(inst.id)
        if hit is not None:
            results[idx] = (hit, None)
        else:
            to_query.append(idx)

    write_lock = threading.Lock()
    checkpoint_fh = None
    if checkpoint_path is not None:
        checkpoint_fh = Path(checkpoint_path).open("a", encoding="utf-8")

    def work(idx: int) -> tuple[int, RawResult, Transcript]:
        inst = instances[idx]
        question = render_question(spec, inst)
        raw, transcript = annotate_instance(
            backend,
            prompt_parts,
            question,
            inst.id,
            max_retries=max_retries,
            refusal=refusal,
        )
        if checkpoint_fh is not None:
            with write_lock:
                checkpoint_fh.write(json.dumps(raw.to_dict(), ensure_ascii=False))
                checkpoint_fh.write("\n")
                checkpoint_fh.flush()
        if progress is not None:
            with write_lock:
                progress(raw)
        return idx, raw, transcript

    try:
        if to_query:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                for idx, raw, transcript in pool.map(work, to_query):
                    results[idx] = (raw, transcript)
    finally:
        if checkpoint_fh is not None:
            checkpoint_fh.close()

    final = [r for r in results if r is not None]
    assert len(final) == len(instances)
    status_counts: dict[str, int] = {}
    for raw, _ in final:
        status_counts[raw.status] = status_counts.get(raw.status, 0) + 1
    summary = BatchSummary(
        total=len(instances),
        from_checkpoint=len(instances) - len(to_query),
        queried=len(to_query),
        status_counts=status_counts,
    )
    return final, summary
