"""Wire contract, endpoint config, limiters and the retry loop shared by all roles."""

from __future__ import annotations

import base64
import enum
import logging
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol

from ..digests import json_digest, sha256_bytes

log = logging.getLogger(__name__)

BACKOFF_BASE = 2.0
BACKOFF_INITIAL = 1.0
BACKOFF_CAP = 60.0


class Role(str, enum.Enum):
    STRUCTURED_TEXT = "structured_text"
    IMAGE_EDIT = "image_edit"
    VQA = "vqa"


class BackendError(RuntimeError):
    """Final failure of a backend call, after any retries."""

    def __init__(self, message: str, cause: BaseException | None = None, attempts: int = 0):
        self.cause = cause
        self.attempts = attempts
        super().__init__(f"{message} (attempts={attempts})")


class TransientError(Exception):
    """Retryable failure: timeout, 5xx-class status or rate limiting."""

    def __init__(self, message: str, kind: str = "server", retry_after: float | None = None):
        self.kind = kind
        self.retry_after = retry_after
        super().__init__(message)


class PermanentError(Exception):
    """Failure that retrying cannot fix (bad credentials, malformed request)."""


class ContentRejected(PermanentError):
    """The backend refused to perform the requested edit."""


@dataclass(frozen=True)
class BackendEndpoint:
    role: Role
    base_url: str = ""
    auth_token_env: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    requests_per_minute: int = 0  # 0: unlimited

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if not self.timeout > 0:
            raise ValueError(f"{self.role.value}: timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError(f"{self.role.value}: max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError(f"{self.role.value}: max_concurrency must be >= 1")
        if self.requests_per_minute < 0:
            raise ValueError(f"{self.role.value}: requests_per_minute must be >= 0")

    @classmethod
    def from_mapping(cls, role: Role | str, data: Mapping[str, Any]) -> "BackendEndpoint":
        allowed = {"base_url", "auth_token_env", "timeout", "max_retries", "max_concurrency", "requests_per_minute"}
        unknown = set(data) - allowed - {"role"}
        if unknown:
            raise ValueError(f"unknown endpoint fields for {role}: {', '.join(sorted(unknown))}")
        return cls(role=Role(data.get("role", role)), **{k: data[k] for k in allowed if k in data})


@dataclass(frozen=True)
class BackendRequest:
    """One request/reply call.

    ``fields`` and ``images`` go over the wire. ``meta`` travels with the
    request in-process only (mocks and logs use it) and is excluded from
    the digest.
    """

    role: Role
    task: str
    fields: Mapping[str, str]
    images: tuple[bytes, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    def digest(self) -> str:
        return json_digest(
            {
                "role": Role(self.role).value,
                "task": self.task,
                "fields": dict(self.fields),
                "images": [sha256_bytes(b) for b in self.images],
            }
        )

    def wire_payload(self) -> dict:
        return {
            "task": self.task,
            "fields": dict(self.fields),
            "images": [base64.b64encode(b).decode("ascii") for b in self.images],
        }


@dataclass(frozen=True)
class BackendReply:
    text: str = ""
    image: bytes | None = None


class Transport(Protocol):
    def send(self, request: BackendRequest, timeout: float) -> BackendReply: ...


def scrub(text: str, secrets: list[str]) -> str:
    for s in secrets:
        if s:
            text = text.replace(s, "***")
    return text


def backoff_delay(retry_index: int, rng: random.Random) -> float:
    """Full-jitter exponential backoff for the ``retry_index``-th retry (0-based)."""
    ceiling = min(BACKOFF_CAP, BACKOFF_INITIAL * BACKOFF_BASE**retry_index)
    return rng.uniform(0.0, ceiling)


@dataclass
class CallResult:
    reply: BackendReply
    attempts: int


def call_with_retries(
    send: Callable[[], BackendReply],
    endpoint: BackendEndpoint,
    *,
    rng: random.Random | None = None,
    sleep: Callable[[float], None] = time.sleep,
    clock: Callable[[], float] = time.monotonic,
    before_attempt: Callable[[], None] | None = None,
    secrets: list[str] | None = None,
    label: str = "",
) -> CallResult:
    """Run ``send`` with up to ``endpoint.max_retries`` re-attempts on transient errors."""
    rng = rng or random.Random()
    secrets = secrets or []
    attempts = 0
    while True:
        if before_attempt is not None:
            before_attempt()
        attempts += 1
        started = clock()
        try:
            reply = send()
        except TransientError as exc:
            latency = clock() - started
            msg = scrub(str(exc), secrets)
            log.info("%s %s attempt %d failed after %.3fs (%s): %s", endpoint.role.value, label, attempts, latency, exc.kind, msg)
            if attempts > endpoint.max_retries:
                raise BackendError(f"{endpoint.role.value} {label}: giving up: {msg}", exc, attempts) from None
            delay = backoff_delay(attempts - 1, rng)
            if exc.retry_after is not None:
                delay = max(delay, exc.retry_after)
            sleep(delay)
            continue
        except PermanentError as exc:
            latency = clock() - started
            msg = scrub(str(exc), secrets)
            log.info("%s %s attempt %d failed permanently after %.3fs: %s", endpoint.role.value, label, attempts, latency, msg)
            err = BackendError(f"{endpoint.role.value} {label}: {msg}", exc, attempts)
            raise err from None
        log.info("%s %s attempt %d ok in %.3fs", endpoint.role.value, label, attempts, clock() - started)
        return CallResult(reply, attempts)


class RateLimiter:
    """Sliding 60-second window allowing at most ``per_minute`` acquisitions."""

    def __init__(self, per_minute: int, clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.per_minute = per_minute
        self.clock = clock
        self.sleep = sleep
        self._issued: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.per_minute <= 0:
            return
        while True:
            with self._lock:
                now = self.clock()
                while self._issued and self._issued[0] <= now - 60.0:
                    self._issued.popleft()
                if len(self._issued) < self.per_minute:
                    self._issued.append(now)
                    return
                wait = self._issued[0] + 60.0 - now
            self.sleep(wait)


class Client:
    """Endpoint-bound caller: concurrency cap, rate limit and retries around a transport."""

    def __init__(
        self,
        endpoint: BackendEndpoint,
        transport: Transport,
        *,
        seed: int = 0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        secrets: list[str] | None = None,
    ):
        self.endpoint = endpoint
        self.transport = transport
        self.seed = seed
        self.clock = clock
        self.sleep = sleep
        self.secrets = secrets or []
        self._slots = threading.BoundedSemaphore(endpoint.max_concurrency)
        self.limiter = RateLimiter(endpoint.requests_per_minute, clock, sleep)

    def call(self, request: BackendRequest) -> BackendReply:
        if Role(request.role) is not self.endpoint.role:
            raise ValueError(f"request role {request.role} sent to {self.endpoint.role.value} endpoint")
        digest = request.digest()
        # jitter is seeded per request so reruns back off identically
        rng = random.Random(f"{self.seed}:{digest}")
        with self._slots:
            result = call_with_retries(
                lambda: self.transport.send(request, self.endpoint.timeout),
                self.endpoint,
                rng=rng,
                sleep=self.sleep,
                clock=self.clock,
                before_attempt=self.limiter.acquire,
                secrets=self.secrets,
                label=f"{request.task}:{digest[:12]}",
            )
        return result.reply
