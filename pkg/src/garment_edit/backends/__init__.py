"""Clients for the structured-text, image-edit and VQA model roles."""

from .base import (
    BackendEndpoint,
    BackendError,
    BackendReply,
    BackendRequest,
    CallResult,
    Client,
    ContentRejected,
    PermanentError,
    RateLimiter,
    Role,
    TransientError,
    Transport,
    backoff_delay,
    call_with_retries,
    scrub,
)
from .http import HttpTransport
from .mock import MockBackend
from .vqa import VqaVerdict, ask_vqa, normalize_verdict, vqa_request

__all__ = [
    "BackendEndpoint",
    "BackendError",
    "BackendReply",
    "BackendRequest",
    "CallResult",
    "Client",
    "ContentRejected",
    "HttpTransport",
    "MockBackend",
    "PermanentError",
    "RateLimiter",
    "Role",
    "TransientError",
    "Transport",
    "VqaVerdict",
    "ask_vqa",
    "backoff_delay",
    "call_with_retries",
    "normalize_verdict",
    "scrub",
    "vqa_request",
]
