"""Provider-agnostic chat-completion client with record/replay.

The client serializes each request canonically and hashes it; a replay
store is an append-only JSONL file of ``{"hash", "request", "response",
"model_id"}`` records keyed by that hash.  Replay mode performs no network
activity at all, which is what makes end-to-end runs deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

DEFAULT_TEMPERATURE = 0.1
DEFAULT_TOP_P = 0.9
DEFAULT_MAX_TOKENS = 2048


class LLMClientError(Exception):
    """Base class for client failures."""


class AuthError(LLMClientError):
    pass


class RateLimitError(LLMClientError):
    pass


class TransportError(LLMClientError):
    def __init__(self, message: str, transient: bool = False):
        super().__init__(message)
        self.transient = transient


class ReplayMissError(LLMClientError):
    def __init__(self, request_hash: str, prompt_prefix: str):
        super().__init__(
            f"no recorded response for request {request_hash} (prompt: {prompt_prefix!r}...)"
        )
        self.request_hash = request_hash
        self.prompt_prefix = prompt_prefix


@dataclass(frozen=True)
class CompletionRequest:
    system_text: str
    user_text: str
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    model_id: str = "default"

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} out of [0, 2]")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p {self.top_p} out of (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def cache_key(self) -> str:
        """Stable across runs and platforms: sha256 of the canonical JSON form."""
        canonical = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class CompletionResult:
    text: str
    model_id: str
    latency: float
    cached: bool
    finish_reason: str = "stop"

    def __post_init__(self):
        if not self.text and not self.finish_reason:
            raise ValueError("empty completion text requires a finish reason")


Transport = Callable[[CompletionRequest], str]


class ReplayStore:
    """Append-only JSONL store of (hash, request, response) records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._entries[record["hash"]] = record["response"]

    def get(self, request_hash: str) -> str | None:
        with self._lock:
            return self._entries.get(request_hash)

    def append(self, request: CompletionRequest, response: str) -> None:
        record = {
            "hash": request.cache_key(),
            "request": asdict(request),
            "response": response,
            "model_id": request.model_id,
        }
        with self._lock:
            self._entries[record["hash"]] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


class LLMClient:
    """Chat-completion boundary in one of three modes.

    replay: serve recorded responses by request hash, error on miss, never
    touch the network.  record: read-through cache backed by the store,
    falling back to the transport on miss.  live: transport only.
    """

    def __init__(
        self,
        transport: Transport | None = None,
        replay_path: str | Path | None = None,
        record_path: str | Path | None = None,
        max_in_flight: int = 4,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if replay_path is not None:
            self.mode = "replay"
            self.store: ReplayStore | None = ReplayStore(replay_path)
        elif record_path is not None:
            if transport is None:
                raise ValueError("record mode requires a transport")
            self.mode = "record"
            self.store = ReplayStore(record_path)
        else:
            if transport is None:
                raise ValueError("live mode requires a transport")
            self.mode = "live"
            self.store = None
        self.transport = transport
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        key = request.cache_key()
        if self.mode == "replay":
            assert self.store is not None
            response = self.store.get(key)
            if response is None:
                raise ReplayMissError(key, request.user_text[:80])
            return CompletionResult(
                text=response, model_id=request.model_id, latency=0.0, cached=True
            )
        if self.mode == "record":
            assert self.store is not None
            response = self.store.get(key)
            if response is not None:
                return CompletionResult(
                    text=response, model_id=request.model_id, latency=0.0, cached=True
                )
        start = time.monotonic()
        with self._gate:
            response = self._call_with_retries(request)
        latency = time.monotonic() - start
        if self.mode == "record":
            assert self.store is not None
            self.store.append(request, response)
        return CompletionResult(
            text=response, model_id=request.model_id, latency=latency, cached=False
        )

    def _call_with_retries(self, request: CompletionRequest) -> str:
        assert self.transport is not None
        attempt = 0
        while True:
            try:
                return self.transport(request)
            except (RateLimitError, TransportError) as exc:
                transient = isinstance(exc, RateLimitError) or getattr(exc, "transient", False)
                attempt += 1
                if not transient or attempt >= self.max_retries:
                    raise
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))


class ScriptedClient:
    """Serves a fixed response sequence; useful for scripted refinement loops."""

    def __init__(self, responses: list[str]):
        self.responses = list(responses)
        self.requests: list[CompletionRequest] = []

    def complete(self, request: CompletionRequest) -> CompletionResult:
        self.requests.append(request)
        if not self.responses:
            raise LLMClientError("scripted client ran out of responses")
        return CompletionResult(
            text=self.responses.pop(0), model_id=request.model_id, latency=0.0, cached=True
        )

    @property
    def calls(self) -> int:
        return len(self.requests)


def http_transport(
    endpoint: str | None = None,
    api_key: str | None = None,
    profile: str = "LLM",
    timeout: float = 60.0,
) -> Transport:
    """Build a live transport for an OpenAI-style chat-completions endpoint.

    Endpoint and credential come from arguments or the environment:
    ``<PROFILE>_ENDPOINT`` / ``<PROFILE>_API_KEY`` first, then the generic
    ``LLM_ENDPOINT`` / ``LLM_API_KEY``.
    """
    env = os.environ
    endpoint = endpoint or env.get(f"{profile}_ENDPOINT") or env.get("LLM_ENDPOINT")
    api_key = api_key or env.get(f"{profile}_API_KEY") or env.get("LLM_API_KEY")
    if not endpoint:
        raise LLMClientError(f"no endpoint configured (set {profile}_ENDPOINT or LLM_ENDPOINT)")

    def call(request: CompletionRequest) -> str:
        import httpx

        payload = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = httpx.post(endpoint, json=payload, headers=headers, timeout=timeout)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc), transient=True) from exc
        if response.status_code in (401, 403):
            raise AuthError(f"authentication failed ({response.status_code})")
        if response.status_code == 429:
            raise RateLimitError("rate limited")
        if response.status_code >= 500:
            raise TransportError(f"server error {response.status_code}", transient=True)
        if response.status_code != 200:
            raise TransportError(f"unexpected status {response.status_code}")
        body = response.json()
        return body["choices"][0]["message"]["content"]

    return call
