"""Pluggable LLM backends with retry, rate limiting, and usage capture.

Two providers ship: an HTTP client for chat-completion endpoints and a
deterministic offline mock keyed on passage ids. Both share the retry loop,
the bounded-parallel batch executor, and the token accounting; results always
come back in input order no matter how requests complete.
"""

from __future__ import annotations

import math
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

import httpx

from .prompting import ChatPrompt

TokenCounter = Callable[[str], int]

_PUNCT = set(r"""!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~""")


def count_tokens(text: str, factor: float = 4 / 3) -> int:
    """Approximate token count: words plus punctuation marks, scaled.

    Counts whitespace-delimited words and individual punctuation characters,
    multiplies by ``factor`` (default 4/3) and rounds up. Deterministic and
    tokenizer-free; substitute an exact provider tokenizer where one exists.
    """
    if not text.strip():
        return 0
    words = len(text.split())
    punct = sum(1 for ch in text if ch in _PUNCT)
    return math.ceil((words + punct) * factor)


def make_token_counter(factor: float = 4 / 3) -> TokenCounter:
    return lambda text: count_tokens(text, factor=factor)


class ProviderError(Exception):
    """Base class; ``attempts`` records how many tries were made."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class RetryableProviderError(ProviderError):
    """Transient failure: retried with exponential backoff."""


class RateLimitedError(RetryableProviderError):
    pass


class ProviderTimeoutError(RetryableProviderError):
    pass


class AuthenticationError(ProviderError):
    """Credential problem; never retried."""


class MalformedResponseError(ProviderError):
    """Unparseable provider payload; never retried. Raw payload preserved."""

    def __init__(self, message: str, raw_payload: str = "", attempts: int = 1):
        super().__init__(message, attempts=attempts)
        self.raw_payload = raw_payload


@dataclass(frozen=True)
class ProviderConfig:
    provider_name: str
    model_id: str
    endpoint: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.2
    max_output_tokens: int = 512
    request_timeout: float = 60.0
    max_attempts: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    requests_per_minute: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class CompletionResult:
    """One model response plus usage; ``error`` is set on per-item batch failures."""

    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_seconds: float
    provider_name: str
    model_id: str
    attempt_count: int
    passage_id: str = ""
    total_tokens_reported: int | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class RateLimiter:
    """Sliding-window limiter: at most ``per_minute`` acquisitions in any 60 s."""

    def __init__(self, per_minute: int, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self._per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self._per_minute:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self._sleep(max(wait, 0.0))


class Provider:
    """Shared retry loop, accounting, and bounded-parallel batch execution."""

    def __init__(self, cfg: ProviderConfig, token_counter: TokenCounter = count_tokens,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self.token_counter = token_counter
        self._sleep = sleep
        self._limiter = (RateLimiter(cfg.requests_per_minute, sleep=sleep)
                         if cfg.requests_per_minute else None)

    def _attempt(self, prompt: ChatPrompt) -> tuple[str, dict[str, int], float | None]:
        """One request. Returns (text, usage dict, scripted latency or None)."""
        raise NotImplementedError

    def complete(self, prompt: ChatPrompt) -> CompletionResult:
        """Send one prompt, retrying transient failures per the config policy."""
        attempt = 0
        while True:
            attempt += 1
            if self._limiter is not None:
                self._limiter.acquire()
            started = time.perf_counter()
            try:
                text, usage, scripted_latency = self._attempt(prompt)
            except RetryableProviderError as exc:
                if attempt >= self.cfg.max_attempts:
                    exc.attempts = attempt
                    raise
                self._sleep(self.cfg.backoff_base * (2 ** (attempt - 1)))
                continue
            except ProviderError as exc:
                exc.attempts = attempt
                raise
            latency = scripted_latency if scripted_latency is not None else time.perf_counter() - started
            prompt_tokens = usage.get("prompt_tokens")
            if prompt_tokens is None:
                prompt_tokens = sum(self.token_counter(m.content) for m in prompt.messages)
            completion_tokens = usage.get("completion_tokens")
            if completion_tokens is None:
                completion_tokens = self.token_counter(text)
            return CompletionResult(
                text=text,
                prompt_tokens=prompt_tokens,
                completion_tokens=completion_tokens,
                latency_seconds=latency,
                provider_name=self.cfg.provider_name,
                model_id=self.cfg.model_id,
                attempt_count=attempt,
                passage_id=prompt.metadata.passage_id,
                total_tokens_reported=usage.get("total_tokens"),
            )

    def complete_batch(self, prompts: list[ChatPrompt]) -> list[CompletionResult]:
        """Run prompts with at most ``max_in_flight`` outstanding requests.

        Results preserve input order; a failing item becomes a result with
        ``error`` set instead of aborting the rest of the batch.
        """
        if not prompts:
            raise ValueError("complete_batch requires a non-empty prompt list")

        def run(prompt: ChatPrompt) -> CompletionResult:
            try:
                return self.complete(prompt)
            except ProviderError as exc:
                return CompletionResult(
                    text="",
                    prompt_tokens=0,
                    completion_tokens=0,
                    latency_seconds=0.0,
                    provider_name=self.cfg.provider_name,
                    model_id=self.cfg.model_id,
                    attempt_count=exc.attempts,
                    passage_id=prompt.metadata.passage_id,
                    error=f"{type(exc).__name__}: {exc}",
                )

        with ThreadPoolExecutor(max_workers=self.cfg.max_in_flight) as pool:
            futures = [pool.submit(run, p) for p in prompts]
            return [f.result() for f in futures]


DEFAULT_MOCK_RESPONSE = "RULES: 99\nJUSTIFICATION: No fixture entry matched this passage."

_FAILURE_EXCEPTIONS = {
    "rate_limit": lambda: RateLimitedError("scripted rate-limit failure"),
    "timeout": lambda: ProviderTimeoutError("scripted timeout"),
    "auth": lambda: AuthenticationError("scripted authentication failure"),
    "malformed": lambda: MalformedResponseError("scripted malformed response", raw_payload="{}"),
}


class MockProvider(Provider):
    """Deterministic offline provider driven by a fixture table.

    Fixture format::

        {
          "responses": {
            "<passage_id>": "RULES: 5\\nJUSTIFICATION: ...",        # or an object:
            "<passage_id>": {"text": "...",
                              "sentence_level": "...",              # per-variant override
                              "paragraph_level": "...",
                              "latency": 0.7,                        # reported latency (s)
                              "failures": ["rate_limit", "timeout"]} # consumed once per call
          },
          "keyword_responses": [{"contains": "substring", "text": "...", "latency": 0.1}],
          "default": "RULES: 99\\nJUSTIFICATION: ..."
        }

    Lookup order: passage id, then first keyword match against the user
    message, then the fixture default, then a built-in sentinel answer.
    Scripted latencies are reported in results without actually sleeping
    unless ``sleep_scale`` > 0 (useful to exercise out-of-order completion).
    """

    def __init__(self, cfg: ProviderConfig, fixture: dict[str, Any] | None = None,
                 token_counter: TokenCounter = count_tokens,
                 sleep: Callable[[float], None] = time.sleep,
                 sleep_scale: float = 0.0):
        super().__init__(cfg, token_counter=token_counter, sleep=sleep)
        fixture = fixture or {}
        self._responses: dict[str, Any] = dict(fixture.get("responses", {}))
        self._keyword_responses: list[dict[str, Any]] = list(fixture.get("keyword_responses", []))
        self._default = fixture.get("default")
        self._sleep_scale = sleep_scale
        self._failure_queues: dict[str, deque[str]] = {}
        self._lock = threading.Lock()
        for pid, entry in self._responses.items():
            if isinstance(entry, dict) and entry.get("failures"):
                self._failure_queues[pid] = deque(entry["failures"])

    def _entry_for(self, prompt: ChatPrompt) -> tuple[Any, str]:
        pid = prompt.metadata.passage_id
        if pid in self._responses:
            return self._responses[pid], pid
        user_text = prompt.user_message().content
        for kw in self._keyword_responses:
            if kw.get("contains", "") and kw["contains"] in user_text:
                return kw, pid
        if self._default is not None:
            return self._default, pid
        return DEFAULT_MOCK_RESPONSE, pid

    def _attempt(self, prompt: ChatPrompt) -> tuple[str, dict[str, int], float | None]:
        entry, pid = self._entry_for(prompt)
        with self._lock:
            queue = self._failure_queues.get(pid)
            failure = queue.popleft() if queue else None
        if failure is not None:
            factory = _FAILURE_EXCEPTIONS.get(failure)
            if factory is None:
                raise MalformedResponseError(f"unknown scripted failure kind {failure!r}")
            raise factory()

        latency: float | None = None
        if isinstance(entry, str):
            text = entry
        else:
            latency = entry.get("latency")
            variant_key = prompt.metadata.variant
            text = entry.get(variant_key) or entry.get("text")
            if text is None:
                text = DEFAULT_MOCK_RESPONSE
        if latency is not None and self._sleep_scale > 0:
            self._sleep(latency * self._sleep_scale)
        return text, {}, latency


class HttpChatProvider(Provider):
    """Client for HTTP chat-completion endpoints (OpenAI-compatible wire format).

    The request body carries the model id, the role-tagged message list, the
    temperature, and the output-token cap; the response is expected to carry
    ``choices[0].message.content`` and, when available, a ``usage`` block.
    Credentials are read from the environment variable named in the config,
    never from configuration files.
    """

    def __init__(self, cfg: ProviderConfig, token_counter: TokenCounter = count_tokens,
                 sleep: Callable[[float], None] = time.sleep,
                 client: httpx.Client | None = None):
        super().__init__(cfg, token_counter=token_counter, sleep=sleep)
        if not cfg.endpoint:
            raise ValueError("HttpChatProvider requires cfg.endpoint")
        self._client = client or httpx.Client(timeout=cfg.request_timeout)

    def _api_key(self) -> str:
        import os

        key = os.environ.get(self.cfg.api_key_env, "")
        if not key:
            raise AuthenticationError(
                f"environment variable {self.cfg.api_key_env} is not set")
        return key

    def _attempt(self, prompt: ChatPrompt) -> tuple[str, dict[str, int], float | None]:
        body = {
            "model": self.cfg.model_id,
            "messages": [{"role": m.role.value, "content": m.content} for m in prompt.messages],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        try:
            response = self._client.post(self.cfg.endpoint, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise ProviderTimeoutError(f"request timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise RetryableProviderError(f"transport error: {exc}") from exc

        if response.status_code in (401, 403):
            raise AuthenticationError(f"authentication failed (HTTP {response.status_code})")
        if response.status_code == 429:
            raise RateLimitedError("rate limited by provider (HTTP 429)")
        if response.status_code >= 500:
            raise RetryableProviderError(f"server error (HTTP {response.status_code})")
        if response.status_code != 200:
            raise MalformedResponseError(
                f"unexpected status {response.status_code}", raw_payload=response.text)

        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise MalformedResponseError(
                f"cannot extract completion text: {exc}", raw_payload=response.text) from exc

        usage: dict[str, int] = {}
        raw_usage = payload.get("usage") or {}
        for key in ("prompt_tokens", "completion_tokens", "total_tokens"):
            value = raw_usage.get(key)
            if isinstance(value, int):
                usage[key] = value
        return text, usage, None


def build_provider(cfg: ProviderConfig, mock_fixture: dict[str, Any] | None = None,
                   token_counter: TokenCounter = count_tokens) -> Provider:
    """Instantiate a provider by ``cfg.provider_name`` (``mock`` is offline)."""
    if cfg.provider_name == "mock":
        return MockProvider(cfg, fixture=mock_fixture, token_counter=token_counter)
    return HttpChatProvider(cfg, token_counter=token_counter)
