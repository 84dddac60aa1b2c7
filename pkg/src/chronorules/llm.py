"""Chat-completion backends with a byte-exact record/replay boundary.

Every orchestrated call is appended to a :class:`Transcript` (strictly
increasing sequence numbers). The replay backend serves recorded responses in
order and refuses to continue if the requests diverge, which makes any
LLM-dependent pipeline run reproducible offline.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import BackendError, ParseError, ReplayDivergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    model: str
    temperature: float = 0.0
    max_tokens: int | None = None

    def matches(self, other: "ChatRequest") -> bool:
        return (
            self.system == other.system
            and self.user == other.user
            and self.model == other.model
            and self.temperature == other.temperature
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"


@dataclass(frozen=True)
class ChatExchange:
    seq: int
    request: ChatRequest
    response: ChatResponse


class Transcript:
    """Ordered request/response log; append is thread-safe and sequence numbers
    are strictly increasing."""

    def __init__(self, exchanges: list[ChatExchange] | None = None):
        self.exchanges: list[ChatExchange] = list(exchanges or [])
        self._lock = threading.Lock()

    def append(self, request: ChatRequest, response: ChatResponse) -> ChatExchange:
        with self._lock:
            exchange = ChatExchange(seq=len(self.exchanges) + 1, request=request, response=response)
            self.exchanges.append(exchange)
            return exchange

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ex in self.exchanges:
                record = {
                    "seq": ex.seq,
                    "request": {
                        "model": ex.request.model,
                        "system": ex.request.system,
                        "user": ex.request.user,
                        "temperature": ex.request.temperature,
                        "max_tokens": ex.request.max_tokens,
                    },
                    "response": {
                        "text": ex.response.text,
                        "finish_reason": ex.response.finish_reason,
                    },
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        exchanges = []
        last_seq = 0
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    req = record["request"]
                    resp = record["response"]
                    exchange = ChatExchange(
                        seq=int(record["seq"]),
                        request=ChatRequest(
                            system=req["system"],
                            user=req["user"],
                            model=req["model"],
                            temperature=float(req.get("temperature", 0.0)),
                            max_tokens=req.get("max_tokens"),
                        ),
                        response=ChatResponse(
                            text=resp["text"],
                            finish_reason=resp.get("finish_reason", "stop"),
                        ),
                    )
                except (KeyError, ValueError) as exc:
                    raise ParseError(f"bad transcript record: {exc}", str(path), lineno) from exc
                if exchange.seq <= last_seq:
                    raise ParseError(
                        f"sequence numbers not strictly increasing at seq {exchange.seq}",
                        str(path),
                        lineno,
                    )
                last_seq = exchange.seq
                exchanges.append(exchange)
        return cls(exchanges)


class ScriptedBackend:
    """Deterministic offline backend driven by a response function."""

    backend_id = "scripted"

    def __init__(self, responder: Callable[[ChatRequest], str]):
        self._responder = responder

    def complete(self, request: ChatRequest) -> ChatResponse:
        return ChatResponse(text=self._responder(request))


class ReplayBackend:
    """Serves a recorded transcript in sequence; diverging requests error."""

    backend_id = "replay"

    def __init__(self, transcript: Transcript):
        self._transcript = transcript
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            if self._cursor >= len(self._transcript.exchanges):
                raise ReplayDivergenceError(
                    f"transcript exhausted after {self._cursor} exchanges"
                )
            recorded = self._transcript.exchanges[self._cursor]
            if not recorded.request.matches(request):
                raise ReplayDivergenceError(
                    f"request at seq {recorded.seq} does not match the recorded transcript"
                )
            self._cursor += 1
            return recorded.response


class LiveBackend:
    """OpenAI-compatible chat-completions endpoint with bounded retries.

    Transient failures (HTTP 429/5xx, connection errors) back off
    exponentially up to ``max_retries``; anything else raises immediately.
    """

    backend_id = "live"
    _RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        base_delay: float = 1.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.base_delay = base_delay

    def _post(self, request: ChatRequest):
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        payload: dict = {
            "model": request.model or self.model,
            "messages": messages,
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens
        return requests.post(
            f"{self.endpoint}/chat/completions",
            json=payload,
            headers=headers,
            timeout=self.timeout,
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        import requests

        delay = self.base_delay
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._post(request)
                if resp.status_code in self._RETRYABLE:
                    last_error = BackendError(f"HTTP {resp.status_code} from backend")
                elif resp.status_code >= 400:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    body = resp.json()
                    choice = body["choices"][0]
                    return ChatResponse(
                        text=choice["message"]["content"],
                        finish_reason=choice.get("finish_reason", "stop"),
                    )
            except BackendError:
                raise
            except requests.RequestException as exc:
                last_error = exc
            except (KeyError, ValueError) as exc:
                raise BackendError(f"malformed backend response: {exc}") from exc
            if attempt < self.max_retries:
                logger.warning(
                    "backend call failed (attempt %d/%d): %s; retrying in %.1fs",
                    attempt + 1,
                    self.max_retries + 1,
                    last_error,
                    delay,
                )
                time.sleep(delay)
                delay *= 2
        raise BackendError(f"backend failed after {self.max_retries + 1} attempts: {last_error}")


_HEAD_RE = re.compile(r'(?:relative|related) to "(?P<head>.+?) \(X,\s*Y,\s*T\)"')
_CANDIDATES_RE = re.compile(r'candidate relations: "(?P<cands>[^"]*)"')


def default_scripted_responder(request: ChatRequest) -> str:
    """Offline stand-in for a live model: emits two well-formed rules for the
    prompt's head using its first candidate relations."""
    head_match = _HEAD_RE.search(request.user)
    cand_match = _CANDIDATES_RE.search(request.user)
    if head_match is None or cand_match is None:
        return ""
    head = head_match["head"]
    candidates = [c.strip() for c in cand_match["cands"].split(",") if c.strip()]
    if not candidates:
        return ""
    lines = [f"{head} (X, Y, T2) ← {candidates[0]} (X, Y, T1)"]
    if len(candidates) >= 2:
        lines.append(
            f"{head} (X, Y, T3) ← {candidates[0]} (X, Z1, T1) & {candidates[1]} (Z1, Y, T2)"
        )
    return "\n".join(lines)
