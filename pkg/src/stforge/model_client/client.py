"""Chat-completion HTTP client with retries and exponential backoff."""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import httpx

from .prompts import PromptSpec

log = logging.getLogger(__name__)

RETRY_STATUS = frozenset({408, 429, 500, 502, 503, 504})


class EndpointError(RuntimeError):
    """Structured transport failure: ``kind`` is timeout, transport, http, oversized or protocol."""

    def __init__(self, kind: str, message: str, status: Optional[int] = None, body: str = ""):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.status = status
        self.body = body

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": str(self), "status": self.status, "body": self.body}


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    token_env: Optional[str] = "STFORGE_API_TOKEN"
    timeout: float = 60.0
    max_retries: int = 2
    max_in_flight: int = 4
    model: str = "default"
    backoff: float = 0.5
    max_payload_bytes: int = 20 * 1024 * 1024
    image_root: Optional[str] = None

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("endpoint base_url is empty")
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.backoff < 0:
            raise ValueError("backoff must be >= 0")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "EndpointConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown endpoint keys: {', '.join(unknown)}")
        return cls(**d)

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"

    def headers(self) -> Dict[str, str]:
        h = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env) if self.token_env else None
        if token:
            h["Authorization"] = f"Bearer {token}"
        return h


def _image_part(ref: str, root: Optional[str]) -> dict:
    if root is not None and not ref.startswith(("http://", "https://", "data:")):
        path = Path(root) / ref
        if path.is_file():
            mime = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
            data = base64.b64encode(path.read_bytes()).decode("ascii")
            return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}}
    return {"type": "image_url", "image_url": {"url": ref}}


def chat_messages(prompt: PromptSpec, image_root: Optional[str] = None) -> List[dict]:
    content: List[dict] = [_image_part(r, image_root) for r in prompt.images]
    content.append({"type": "text", "text": prompt.user_text})
    return [{"role": "system", "content": prompt.system_text}, {"role": "user", "content": content}]


def request_body(endpoint: EndpointConfig, prompt: PromptSpec) -> dict:
    return {"model": endpoint.model, "messages": chat_messages(prompt, endpoint.image_root),
            "temperature": 0.0, "stream": False}


def _text_of(data: Any) -> str:
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise EndpointError("protocol", "response has no choices[0].message.content") from None
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str):
        raise EndpointError("protocol", "message content is not text")
    return content


def query(endpoint: EndpointConfig, prompt: PromptSpec, client: Optional[httpx.Client] = None) -> str:
    """Send one chat-completion request and return the reply text verbatim.

    Timeouts, connection errors and retryable statuses are retried up to
    ``max_retries`` times, sleeping ``backoff * 2**attempt`` between tries.
    """
    body = json.dumps(request_body(endpoint, prompt)).encode("utf-8")
    if len(body) > endpoint.max_payload_bytes:
        raise EndpointError("oversized", f"request is {len(body)} bytes, limit {endpoint.max_payload_bytes}")
    own = client is None
    if own:
        client = httpx.Client(timeout=endpoint.timeout)
    try:
        last: Optional[EndpointError] = None
        for attempt in range(endpoint.max_retries + 1):
            if attempt:
                time.sleep(endpoint.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(endpoint.url, content=body, headers=endpoint.headers(), timeout=endpoint.timeout)
            except httpx.TimeoutException as exc:
                last = EndpointError("timeout", f"{endpoint.url} timed out after {endpoint.timeout}s ({exc})")
                continue
            except httpx.TransportError as exc:
                last = EndpointError("transport", f"{endpoint.url}: {exc}")
                continue
            if resp.status_code in RETRY_STATUS:
                last = EndpointError("http", f"status {resp.status_code}", resp.status_code, resp.text[:200])
                log.debug("retryable status %s from %s", resp.status_code, endpoint.url)
                continue
            if not resp.is_success:
                raise EndpointError("http", f"status {resp.status_code}", resp.status_code, resp.text[:200])
            try:
                data = resp.json()
            except ValueError:
                raise EndpointError("protocol", "response is not JSON", resp.status_code, resp.text[:200]) from None
            return _text_of(data)
        assert last is not None
        raise last
    finally:
        if own:
            client.close()
