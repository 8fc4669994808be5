"""Dispatch prompts to chat/embedding endpoints, cache responses, parse labels."""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol, Sequence

from .corpus import LabelScheme
from .promptkit import PromptSpec, estimate_tokens


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    """Upstream unreachable or persistently throttled after bounded retries."""

    def __init__(self, message: str, attempts: list[str] | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class ProtocolError(GatewayError):
    """Endpoint answered, but not with a usable response body."""


class ContextOverflowError(GatewayError):
    """Prompt estimate exceeds the model's context window; refused locally."""


@dataclass(frozen=True)
class ModelProfile:
    name: str
    kind: str = "chat"  # "chat" | "embedding"
    base_url: str = "https://api.openai.com/v1"
    context_window: int = 131072
    temperature: float = 0.0
    max_output_tokens: int = 16
    rate_limit_per_s: float | None = None
    provider_tag: str = ""
    embedding_dim: int | None = None
    max_attempts: int = 4
    backoff_base_s: float = 0.5
    timeout_s: float = 60.0
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self) -> None:
        if self.kind not in ("chat", "embedding"):
            raise GatewayError(f"unknown endpoint kind {self.kind!r}")
        if self.context_window <= 0:
            raise GatewayError("context_window must be positive")
        if not self.provider_tag:
            object.__setattr__(self, "provider_tag", self.name)


# Context windows of the models this harness is typically pointed at.
DEFAULT_PROFILES: dict[str, ModelProfile] = {
    p.name: p
    for p in (
        ModelProfile(name="gpt-4o", context_window=131072),
        ModelProfile(name="gpt-3.5-turbo", context_window=16384),
        ModelProfile(name="deepseek-v3", context_window=131072),
        ModelProfile(name="gemma-3-4b", context_window=131072),
        ModelProfile(name="mistral-7b-instruct", context_window=32768),
        ModelProfile(name="llama-3.1-8b-instruct", context_window=131072),
        ModelProfile(name="llama-3.2-3b-instruct", context_window=131072),
    )
}


@dataclass(frozen=True)
class CompletionRecord:
    content_hash: str
    text: str
    latency_ms: float
    attempts: int
    model: str
    created_at: str


@dataclass(frozen=True)
class ParsedLabel:
    kind: str  # "label" | "multi_label" | "unparseable"
    labels: tuple[str, ...] = ()
    spans: tuple[tuple[str, int, int], ...] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "labels": list(self.labels), "spans": [list(s) for s in self.spans]}


_NON_WORD_RE = re.compile(r"[^a-z0-9]+")


def normalize_completion(text: str) -> str:
    """Lowercase and reduce to alphanumeric words; punctuation and markdown go."""
    return _NON_WORD_RE.sub(" ", text.lower()).strip()


def parse_label(completion: str, scheme: LabelScheme) -> ParsedLabel:
    """Total mapping from raw completion text to a ParsedLabel.

    Canonical names and aliases match as whole words on the normalized text;
    overlaps resolve longest-match-first, so a name embedded in a longer one
    (e.g. within a hyphenated compound) does not double count.
    """
    norm = normalize_completion(completion)
    if not norm:
        return ParsedLabel("unparseable")
    matches: list[tuple[int, int, str]] = []
    for label in scheme.labels:
        for form in label.surface_forms():
            norm_form = normalize_completion(form)
            if not norm_form:
                continue
            pattern = rf"(?<![a-z0-9]){re.escape(norm_form)}(?![a-z0-9])"
            for hit in re.finditer(pattern, norm):
                matches.append((hit.start(), hit.end(), label.label_id))
    accepted: list[tuple[int, int, str]] = []
    for start, end, lid in sorted(matches, key=lambda m: (-(m[1] - m[0]), m[0])):
        if all(end <= a_start or start >= a_end for a_start, a_end, _ in accepted):
            accepted.append((start, end, lid))
    accepted.sort(key=lambda m: m[0])
    ordered_labels: list[str] = []
    for _, _, lid in accepted:
        if lid not in ordered_labels:
            ordered_labels.append(lid)
    spans = tuple((lid, start, end) for start, end, lid in accepted)
    if not ordered_labels:
        return ParsedLabel("unparseable")
    if len(ordered_labels) == 1:
        return ParsedLabel("label", (ordered_labels[0],), spans)
    return ParsedLabel("multi_label", tuple(ordered_labels), spans)


class ResponseCache:
    """Append-only response store; in-memory index over JSONL segment files.

    Completions are keyed by (model, content_hash), embeddings by
    (provider_tag, text). With no directory the cache is memory-only.
    Segments are sharded by the key's leading hash byte and never rewritten,
    so interrupted runs resume by replaying the files.
    """

    def __init__(self, directory: str | Path | None = None):
        self._dir = Path(directory) if directory is not None else None
        self._completions: dict[tuple[str, str], CompletionRecord] = {}
        self._embeddings: dict[tuple[str, str], tuple[float, ...]] = {}
        self._lock = threading.Lock()
        if self._dir is not None:
            (self._dir / "completions").mkdir(parents=True, exist_ok=True)
            (self._dir / "embeddings").mkdir(parents=True, exist_ok=True)
            self._load()

    def _load(self) -> None:
        assert self._dir is not None
        for segment in sorted((self._dir / "completions").glob("*.jsonl")):
            for line in segment.read_text(encoding="utf-8").splitlines():
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    continue  # tolerate a torn final write
                record = CompletionRecord(
                    content_hash=row["content_hash"],
                    text=row["text"],
                    latency_ms=row["latency_ms"],
                    attempts=row["attempts"],
                    model=row["model"],
                    created_at=row["created_at"],
                )
                self._completions.setdefault((record.model, record.content_hash), record)
        for segment in sorted((self._dir / "embeddings").glob("*.jsonl")):
            for line in segment.read_text(encoding="utf-8").splitlines():
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    continue
                self._embeddings.setdefault(
                    (row["tag"], row["text"]), tuple(row["vector"])
                )

    def _append(self, bucket: str, shard: str, payload: dict) -> None:
        if self._dir is None:
            return
        path = self._dir / bucket / f"{shard}.jsonl"
        with path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(payload, sort_keys=True) + "\n")

    def get_completion(self, model: str, content_hash: str) -> CompletionRecord | None:
        with self._lock:
            return self._completions.get((model, content_hash))

    def put_completion(self, record: CompletionRecord) -> None:
        key = (record.model, record.content_hash)
        with self._lock:
            if key in self._completions:
                return
            self._completions[key] = record
            self._append(
                "completions",
                record.content_hash[:2],
                {
                    "content_hash": record.content_hash,
                    "text": record.text,
                    "latency_ms": record.latency_ms,
                    "attempts": record.attempts,
                    "model": record.model,
                    "created_at": record.created_at,
                },
            )

    def get_embedding(self, tag: str, text: str) -> tuple[float, ...] | None:
        with self._lock:
            return self._embeddings.get((tag, text))

    def put_embedding(self, tag: str, text: str, vector: Sequence[float]) -> None:
        key = (tag, text)
        with self._lock:
            if key in self._embeddings:
                return
            self._embeddings[key] = tuple(vector)
            shard = hashlib.sha256(text.encode("utf-8")).hexdigest()[:2]
            self._append(
                "embeddings",
                shard,
                {"tag": tag, "text": text, "vector": list(vector)},
            )

    def __len__(self) -> int:
        with self._lock:
            return len(self._completions) + len(self._embeddings)


class ChatBackend(Protocol):
    def respond(self, profile: ModelProfile, prompt: PromptSpec) -> str: ...


class EchoGoldBackend:
    """Answers with the gold label wired in for each query text."""

    def __init__(self, gold_by_text: dict[str, str]):
        self.gold_by_text = dict(gold_by_text)
        self.calls = 0
        self._lock = threading.Lock()

    def respond(self, profile: ModelProfile, prompt: PromptSpec) -> str:
        with self._lock:
            self.calls += 1
        try:
            return self.gold_by_text[prompt.query_text]
        except KeyError:
            raise GatewayError(
                f"echo-gold backend has no gold label for {prompt.query_text[:60]!r}"
            ) from None


class ConstantBackend:
    """Always answers with the same text."""

    def __init__(self, text: str):
        self.text = text
        self.calls = 0
        self._lock = threading.Lock()

    def respond(self, profile: ModelProfile, prompt: PromptSpec) -> str:
        with self._lock:
            self.calls += 1
        return self.text


class CallableBackend:
    """Adapter for arbitrary deterministic response rules (tests, schedules)."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0
        self._lock = threading.Lock()

    def respond(self, profile: ModelProfile, prompt: PromptSpec) -> str:
        with self._lock:
            self.calls += 1
        return self.fn(profile, prompt)


class _RateLimiter:
    def __init__(self, per_second: float):
        self._interval = 1.0 / per_second
        self._next_at = 0.0
        self._lock = threading.Lock()

    def acquire(self, sleeper) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_at - now
            self._next_at = max(now, self._next_at) + self._interval
        if wait > 0:
            sleeper(wait)


def _post_json(url: str, payload: dict, api_key: str | None, timeout: float) -> dict:
    body = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    request = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            raw = response.read()
    except urllib.error.HTTPError as exc:
        if exc.code == 429 or exc.code >= 500:
            raise TransportError(f"HTTP {exc.code} from {url}") from exc
        raise ProtocolError(f"HTTP {exc.code} from {url}: {exc.read()[:200]!r}") from exc
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise TransportError(f"{url} unreachable: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"non-JSON response from {url}: {raw[:200]!r}") from exc


@dataclass
class Client:
    """Single entry point for completions and embeddings.

    base_url schemes: http(s):// goes over the wire with bounded retries;
    mock://<name> resolves a registered in-process backend (still cached, so
    cache-contract tests count real backend calls).
    """

    cache: ResponseCache = field(default_factory=ResponseCache)
    mocks: dict[str, object] = field(default_factory=dict)
    sleeper: object = time.sleep
    _limiters: dict[str, _RateLimiter] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def register_mock(self, name: str, backend: object) -> None:
        self.mocks[name] = backend

    def _limiter_for(self, profile: ModelProfile) -> _RateLimiter | None:
        if profile.rate_limit_per_s is None:
            return None
        with self._lock:
            limiter = self._limiters.get(profile.name)
            if limiter is None:
                limiter = _RateLimiter(profile.rate_limit_per_s)
                self._limiters[profile.name] = limiter
            return limiter

    def _mock_for(self, profile: ModelProfile) -> object | None:
        if not profile.base_url.startswith("mock://"):
            return None
        name = profile.base_url[len("mock://") :].strip("/")
        backend = self.mocks.get(name)
        if backend is None:
            raise GatewayError(f"no mock backend registered as {name!r}")
        return backend

    def _with_retries(self, profile: ModelProfile, call) -> tuple[object, int]:
        trace: list[str] = []
        for attempt in range(1, profile.max_attempts + 1):
            limiter = self._limiter_for(profile)
            if limiter is not None:
                limiter.acquire(self.sleeper)
            try:
                return call(), attempt
            except TransportError as exc:
                trace.append(f"attempt {attempt}: {exc}")
                if attempt == profile.max_attempts:
                    raise TransportError(
                        f"{profile.name}: gave up after {attempt} attempts", trace
                    ) from exc
                delay = profile.backoff_base_s * (2 ** (attempt - 1))
                self.sleeper(delay * (1.0 + random.random() * 0.25))
        raise AssertionError("unreachable")

    def complete(self, profile: ModelProfile, prompt: PromptSpec) -> CompletionRecord:
        if profile.kind != "chat":
            raise GatewayError(f"profile {profile.name} is not a chat profile")
        estimate = estimate_tokens(prompt)
        if estimate >= profile.context_window:
            raise ContextOverflowError(
                f"prompt estimate {estimate} tokens >= {profile.name} window "
                f"{profile.context_window}"
            )
        cached = self.cache.get_completion(profile.name, prompt.content_hash)
        if cached is not None:
            return cached
        mock = self._mock_for(profile)
        started = time.monotonic()
        if mock is not None:
            text, attempts = self._with_retries(
                profile, lambda: mock.respond(profile, prompt)
            )
        else:
            text, attempts = self._with_retries(
                profile, lambda: self._http_chat(profile, prompt)
            )
        record = CompletionRecord(
            content_hash=prompt.content_hash,
            text=str(text),
            latency_ms=(time.monotonic() - started) * 1000.0,
            attempts=attempts,
            model=profile.name,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        self.cache.put_completion(record)
        return record

    def _http_chat(self, profile: ModelProfile, prompt: PromptSpec) -> str:
        payload = {
            "model": profile.name,
            "messages": [
                {"role": "system", "content": prompt.system_message},
                {"role": "user", "content": prompt.user_message},
            ],
            "temperature": profile.temperature,
            "max_tokens": profile.max_output_tokens,
        }
        url = profile.base_url.rstrip("/") + "/chat/completions"
        response = _post_json(
            url, payload, os.environ.get(profile.api_key_env), profile.timeout_s
        )
        try:
            return response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {response}") from exc

    def embed_batch(self, profile: ModelProfile, texts: Sequence[str]) -> list[list[float]]:
        if profile.kind != "embedding":
            raise GatewayError(f"profile {profile.name} is not an embedding profile")
        tag = profile.provider_tag
        missing: list[str] = []
        for text in texts:
            if self.cache.get_embedding(tag, text) is None and text not in missing:
                missing.append(text)
        if missing:
            mock = self._mock_for(profile)
            if mock is not None:
                vectors, _ = self._with_retries(
                    profile, lambda: mock.embed_batch(missing)
                )
            else:
                vectors, _ = self._with_retries(
                    profile, lambda: self._http_embed(profile, missing)
                )
            if len(vectors) != len(missing):
                raise ProtocolError(
                    f"{profile.name}: {len(vectors)} vectors for {len(missing)} texts"
                )
            dims = {len(v) for v in vectors}
            if len(dims) > 1:
                raise ProtocolError(
                    f"{profile.name}: mixed embedding dimensions in one batch: {sorted(dims)}"
                )
            if profile.embedding_dim is not None and dims != {profile.embedding_dim}:
                raise ProtocolError(
                    f"{profile.name}: got dimension {dims.pop()}, "
                    f"expected {profile.embedding_dim}"
                )
            for text, vector in zip(missing, vectors):
                self.cache.put_embedding(tag, text, vector)
        out = []
        for text in texts:
            vector = self.cache.get_embedding(tag, text)
            assert vector is not None
            out.append(list(vector))
        return out

    def _http_embed(self, profile: ModelProfile, texts: list[str]) -> list[list[float]]:
        payload = {"model": profile.name, "input": list(texts)}
        url = profile.base_url.rstrip("/") + "/embeddings"
        response = _post_json(
            url, payload, os.environ.get(profile.api_key_env), profile.timeout_s
        )
        try:
            rows = sorted(response["data"], key=lambda item: item["index"])
            return [list(map(float, row["embedding"])) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embeddings response: {response}") from exc


class GatewayEmbeddingProvider:
    """vectorspace-compatible provider backed by a gateway embedding profile."""

    def __init__(self, client: Client, profile: ModelProfile):
        if profile.kind != "embedding":
            raise GatewayError(f"profile {profile.name} is not an embedding profile")
        self.client = client
        self.profile = profile
        self.provider_tag = profile.provider_tag
        self.dim = profile.embedding_dim or 0

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        vectors = self.client.embed_batch(self.profile, texts)
        if vectors and not self.dim:
            self.dim = len(vectors[0])
        return vectors
