"""Plain HTTP transport: JSON request in, JSON reply out."""

from __future__ import annotations

import base64
import os

import httpx

from .base import BackendEndpoint, BackendReply, BackendRequest, ContentRejected, PermanentError, TransientError


class HttpTransport:
    """POSTs ``{task, fields, images}`` to ``base_url`` and reads ``{text, image?, rejected?}``.

    Vendor-specific adapters should sit behind a small proxy speaking this
    contract. The bearer token is read from the env var named by the endpoint.
    """

    def __init__(self, endpoint: BackendEndpoint, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self._client = client or httpx.Client()

    def token(self) -> str:
        if not self.endpoint.auth_token_env:
            return ""
        return os.environ.get(self.endpoint.auth_token_env, "")

    def send(self, request: BackendRequest, timeout: float) -> BackendReply:
        headers = {}
        token = self.token()
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._client.post(self.endpoint.base_url, json=request.wire_payload(), headers=headers, timeout=timeout)
        except httpx.TimeoutException as exc:
            raise TransientError(f"timeout: {type(exc).__name__}", kind="timeout") from None
        except httpx.TransportError as exc:
            raise TransientError(f"transport error: {type(exc).__name__}", kind="transport") from None

        status = resp.status_code
        if status == 429:
            retry_after = resp.headers.get("retry-after")
            try:
                delay = float(retry_after) if retry_after is not None else None
            except ValueError:
                delay = None
            raise TransientError("rate limited (429)", kind="rate_limit", retry_after=delay)
        if status >= 500:
            raise TransientError(f"server error ({status})", kind="server")
        if status >= 400:
            raise PermanentError(f"request failed ({status})")

        try:
            body = resp.json()
        except ValueError:
            raise PermanentError("reply is not JSON") from None
        if not isinstance(body, dict):
            raise PermanentError("reply is not a JSON object")
        if body.get("rejected"):
            raise ContentRejected(str(body.get("reason", "content rejected")))
        image = body.get("image")
        return BackendReply(text=str(body.get("text", "")), image=base64.b64decode(image) if image else None)
