"""
Chat-completion backends and the on-disk response cache.

A backend turns a list of chat messages into one text completion. Two are
provided: the OpenAI client (any compatible endpoint via OPENAI_BASE_URL)
and a fixture backend that replays recorded transcripts for offline runs.
"""

import hashlib
import json
import os
import tempfile

from openai import APIConnectionError, APIError, OpenAI, RateLimitError
from tenacity import (
    RetryError,
    Retrying,
    retry_if_exception,
    stop_after_attempt,
    wait_exponential,
)

from utils import settings
from utils.error_logger import get_error_tracker
from utils.errors import BackendUnavailable


def add_prompt_messages(role, content, messages):
    json_message = {
        "role": role,
        "content": content
    }
    messages.append(json_message)
    return messages


def prompt_hash(messages):
    """sha256 of the canonical JSON form of a message list."""
    canonical = json.dumps(messages, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _is_retryable(exc):
    if isinstance(exc, (RateLimitError, APIConnectionError)):
        return True
    return isinstance(exc, APIError) and getattr(exc, "status_code", None) == 429


def _error_type(exc):
    if isinstance(exc, RateLimitError) or getattr(exc, "status_code", None) == 429:
        return "rate_limit"
    if isinstance(exc, APIConnectionError):
        return "connection_error"
    return "api_error"


class OpenAIChatBackend:
    """OpenAI chat completions with exponential back-off on rate limits."""

    kind = "openai"

    def __init__(self, model=None, temperature=1.0, api_key=None, base_url=None,
                 offline=None, max_retries=5, max_tokens=None, client=None):
        self.model = model or settings.OPENAI_MODEL
        self.temperature = temperature
        self.offline = settings.OFFLINE if offline is None else offline
        self.max_retries = max_retries
        self.max_tokens = max_tokens
        self._api_key = api_key or settings.OPENAI_API_KEY
        self._base_url = base_url or settings.OPENAI_BASE_URL
        self._client = client

    @property
    def backend_id(self):
        return f"openai:{self.model}:t={self.temperature}"

    @property
    def client(self):
        if self._client is None:
            if not self._api_key:
                raise BackendUnavailable("OPENAI_API_KEY is not set", backend=self.backend_id)
            self._client = OpenAI(api_key=self._api_key, base_url=self._base_url)
        return self._client

    def _log_retry(self, retry_state):
        exc = retry_state.outcome.exception()
        get_error_tracker().log_error(
            _error_type(exc),
            {"attempt": retry_state.attempt_number, "model": self.model, "error": str(exc)},
            component="backend",
        )
        print(f"Request error ({exc.__class__.__name__}); retry {retry_state.attempt_number}/{self.max_retries}...")

    def complete(self, messages, seed=None, draw_index=0):
        if self.offline:
            raise BackendUnavailable("network backends are disabled in offline mode", backend=self.backend_id)
        tracker = get_error_tracker()
        if not tracker.should_continue("rate_limit", threshold=20, window_seconds=300):
            raise BackendUnavailable("too many recent rate limit errors", backend=self.backend_id)

        kwargs = {"model": self.model, "messages": messages, "temperature": self.temperature}
        if seed is not None:
            kwargs["seed"] = int(seed) % (2**31)
        if self.max_tokens:
            kwargs["max_tokens"] = self.max_tokens

        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries),
            wait=wait_exponential(multiplier=2, min=2, max=60),
            retry=retry_if_exception(_is_retryable),
            before_sleep=self._log_retry,
            reraise=True,
        )
        try:
            for attempt in retrying:
                with attempt:
                    response = self.client.chat.completions.create(**kwargs)
        except (APIError, RetryError) as e:
            tracker.log_error(_error_type(e), {"model": self.model, "error": str(e)}, component="backend")
            raise BackendUnavailable(f"chat completion failed: {e}", backend=self.backend_id) from e

        tracker.log_success("chat_completion")
        return response.choices[0].message.content or ""


class FixtureBackend:
    """
    Replays recorded completions.

    `transcripts` maps a prompt hash to a list of completions; draw i gets
    entry i modulo the list length. A `responder(messages, seed)` callable
    can be given instead, which is how the tests script model behaviour.
    """

    kind = "fixture"

    def __init__(self, transcripts=None, responder=None, name="fixture"):
        self.transcripts = transcripts or {}
        self.responder = responder
        self.name = name
        self.calls = 0

    @property
    def backend_id(self):
        return f"fixture:{self.name}"

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return cls(transcripts=data.get("transcripts", {}), name=data.get("name", os.path.basename(path)))

    def complete(self, messages, seed=None, draw_index=0):
        self.calls += 1
        if self.responder is not None:
            return self.responder(messages, seed)
        key = prompt_hash(messages)
        recorded = self.transcripts.get(key)
        if not recorded:
            get_error_tracker().log_error("missing_transcript", {"prompt_hash": key}, component="backend")
            raise BackendUnavailable("no recorded transcript for prompt", prompt_hash=key, backend=self.backend_id)
        return recorded[draw_index % len(recorded)]


def make_backend(kind, offline=None, **kwargs):
    if kind == "fixture":
        path = kwargs.pop("fixture_path", None)
        return FixtureBackend.from_file(path) if path else FixtureBackend(**kwargs)
    if kind in ("http", "openai"):
        return OpenAIChatBackend(offline=offline, **kwargs)
    raise ValueError(f"unknown backend {kind!r}")


class ResponseCache:
    """
    Content-addressed transcript store.

    One JSON file per (backend, prompt hash, setting id, draw index). Writes
    go through a temporary file and `os.replace`, so concurrent writers of
    the same key leave one complete file behind.
    """

    def __init__(self, root=None):
        self.root = root or settings.CACHE_DIR
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(backend_id, prompt_digest, setting_id, draw_index):
        raw = f"{backend_id}|{prompt_digest}|{setting_id}|{draw_index}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def path(self, key):
        return os.path.join(self.root, key[:2], f"{key}.json")

    def get(self, key):
        path = self.path(key)
        if not os.path.exists(path):
            self.misses += 1
            return None
        with open(path, "r", encoding="utf-8") as f:
            record = json.load(f)
        self.hits += 1
        return record

    def put(self, key, record):
        path = self.path(key)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(record, f, sort_keys=True, ensure_ascii=False, indent=1)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        return path
