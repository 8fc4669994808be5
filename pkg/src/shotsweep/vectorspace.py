"""TF-IDF and embedding vector spaces over few-shot candidates, with cosine kNN."""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import RequirementRecord

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class VectorSpaceError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased maximal runs of alphanumerics; hyphens and punctuation split."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    @property
    def size(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class Neighbor:
    record_id: int
    similarity: float


def _normalize_sparse(weights: dict[int, float]) -> dict[int, float]:
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    # build in ascending column order so dot products accumulate deterministically
    return {col: weights[col] / norm for col in sorted(weights)}


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: Vocabulary
    idf: tuple[float, ...]
    rows: tuple[dict[int, float], ...]  # L2-normalized, sparse by column id
    row_ids: tuple[int, ...]
    postings: dict[int, tuple[tuple[int, float], ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        postings: dict[int, list[tuple[int, float]]] = {}
        for row_idx, row in enumerate(self.rows):
            for col, weight in row.items():
                postings.setdefault(col, []).append((row_idx, weight))
        object.__setattr__(
            self, "postings", {c: tuple(lst) for c, lst in postings.items()}
        )

    @property
    def n_docs(self) -> int:
        return len(self.rows)

    def to_json(self) -> str:
        payload = {
            "terms": list(self.vocabulary.terms),
            "idf": list(self.idf),
            "rows": [sorted(row.items()) for row in self.rows],
            "row_ids": list(self.row_ids),
        }
        return json.dumps(payload, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TfidfModel":
        payload = json.loads(text)
        return cls(
            vocabulary=Vocabulary(tuple(payload["terms"])),
            idf=tuple(payload["idf"]),
            rows=tuple({int(c): float(w) for c, w in row} for row in payload["rows"]),
            row_ids=tuple(payload["row_ids"]),
        )


def fit_tfidf(candidates: Sequence[RequirementRecord]) -> TfidfModel:
    """Fit a TF-IDF space: raw tf, idf = ln((1+N)/(1+df)) + 1, L2-normalized rows."""
    if not candidates:
        raise VectorSpaceError("cannot fit TF-IDF on an empty candidate list")
    token_lists = [tokenize(r.text) for r in candidates]
    terms = sorted({tok for tokens in token_lists for tok in tokens})
    vocab = Vocabulary(tuple(terms))
    n_docs = len(candidates)
    df = [0] * vocab.size
    for tokens in token_lists:
        for tok in set(tokens):
            df[vocab.index[tok]] += 1
    idf = tuple(math.log((1 + n_docs) / (1 + d)) + 1.0 for d in df)
    rows = []
    for tokens in token_lists:
        counts: dict[int, int] = {}
        for tok in tokens:
            counts[vocab.index[tok]] = counts.get(vocab.index[tok], 0) + 1
        rows.append(_normalize_sparse({c: n * idf[c] for c, n in counts.items()}))
    return TfidfModel(
        vocabulary=vocab,
        idf=idf,
        rows=tuple(rows),
        row_ids=tuple(r.record_id for r in candidates),
    )


def embed_query_tfidf(model: TfidfModel, text: str) -> dict[int, float]:
    """Transform a query with the fitted vocabulary; OOV tokens are dropped."""
    counts: dict[int, int] = {}
    for tok in tokenize(text):
        col = model.vocabulary.index.get(tok)
        if col is not None:
            counts[col] = counts.get(col, 0) + 1
    return _normalize_sparse({c: n * model.idf[c] for c, n in counts.items()})


class EmbeddingProvider(Protocol):
    provider_tag: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]: ...


class HashEmbeddingProvider:
    """Deterministic pseudo-encoder: signed token-hash bag projected to D dims.

    No model, no network; stable across runs and platforms. Useful for tests
    and offline runs where any consistent notion of lexical similarity will do.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise VectorSpaceError("embedding dim must be >= 1")
        self.dim = dim
        self.provider_tag = f"hashbag-{dim}-v1"

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed(t) for t in texts]

    def _embed(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        for tok in tokenize(text):
            digest = hashlib.sha256(tok.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] & 1 == 0 else -1.0
            vec[bucket] += sign
        norm = math.sqrt(sum(x * x for x in vec))
        if norm > 0:
            vec = [x / norm for x in vec]
        return vec


class EmbeddingCache:
    """Thread-safe (provider_tag, text) -> vector cache."""

    def __init__(self) -> None:
        self._store: dict[tuple[str, str], tuple[float, ...]] = {}
        self._lock = threading.Lock()

    def get(self, tag: str, text: str) -> tuple[float, ...] | None:
        with self._lock:
            return self._store.get((tag, text))

    def put(self, tag: str, text: str, vector: Sequence[float]) -> None:
        with self._lock:
            self._store[(tag, text)] = tuple(vector)

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    dim: int
    rows: np.ndarray  # N x D, float64
    row_ids: tuple[int, ...]
    provider_tag: str

    @property
    def n_docs(self) -> int:
        return len(self.row_ids)

    def to_json(self) -> str:
        payload = {
            "dim": self.dim,
            "provider_tag": self.provider_tag,
            "row_ids": list(self.row_ids),
            "rows": [[float(x) for x in row] for row in self.rows],
        }
        return json.dumps(payload, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EmbeddingMatrix":
        payload = json.loads(text)
        return cls(
            dim=payload["dim"],
            rows=np.array(payload["rows"], dtype=np.float64).reshape(
                len(payload["row_ids"]), payload["dim"]
            ),
            row_ids=tuple(payload["row_ids"]),
            provider_tag=payload["provider_tag"],
        )


def build_embedding_matrix(
    candidates: Sequence[RequirementRecord],
    provider: EmbeddingProvider,
    batch_size: int = 32,
    cache: EmbeddingCache | None = None,
    max_workers: int = 1,
) -> EmbeddingMatrix:
    """Encode candidates into an N x D matrix via batched provider calls.

    Vectors are cached by (provider_tag, text), so rebuilds and duplicate
    texts cost nothing extra.
    """
    if not candidates:
        raise VectorSpaceError("cannot build an embedding matrix over no candidates")
    cache = cache if cache is not None else EmbeddingCache()
    tag = provider.provider_tag
    pending: list[str] = []
    seen: set[str] = set()
    for record in candidates:
        if record.text not in seen and cache.get(tag, record.text) is None:
            pending.append(record.text)
            seen.add(record.text)
    batches = [pending[i : i + batch_size] for i in range(0, len(pending), batch_size)]

    def encode(batch_no: int, batch: list[str]) -> None:
        try:
            vectors = provider.embed_batch(batch)
        except Exception as exc:
            raise VectorSpaceError(
                f"embedding provider failed on batch {batch_no} "
                f"({len(batch)} texts, first: {batch[0][:60]!r}): {exc}"
            ) from exc
        if len(vectors) != len(batch):
            raise VectorSpaceError(
                f"provider returned {len(vectors)} vectors for batch {batch_no} "
                f"of {len(batch)} texts"
            )
        for text, vector in zip(batch, vectors):
            cache.put(tag, text, vector)

    if max_workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            for future in [pool.submit(encode, i, b) for i, b in enumerate(batches)]:
                future.result()
    else:
        for i, batch in enumerate(batches):
            encode(i, batch)

    first = cache.get(tag, candidates[0].text)
    assert first is not None
    dim = provider.dim if getattr(provider, "dim", 0) else len(first)
    matrix = np.zeros((len(candidates), dim), dtype=np.float64)
    for i, record in enumerate(candidates):
        vector = cache.get(tag, record.text)
        assert vector is not None
        if len(vector) != dim:
            raise VectorSpaceError(
                f"record {record.record_id}: provider returned dimension "
                f"{len(vector)}, expected {dim}"
            )
        if not all(math.isfinite(x) for x in vector):
            raise VectorSpaceError(
                f"record {record.record_id}: non-finite embedding entry"
            )
        matrix[i] = vector
    return EmbeddingMatrix(dim=dim, rows=matrix, row_ids=tuple(r.record_id for r in candidates), provider_tag=tag)


def _clamp(similarity: float) -> float:
    return max(-1.0, min(1.0, similarity))


def _knn_tfidf(model: TfidfModel, query: dict[int, float], k: int) -> list[Neighbor]:
    for col in query:
        if not 0 <= col < model.vocabulary.size:
            raise VectorSpaceError(f"query column {col} outside vocabulary")
    scores: dict[int, float] = {}
    for col in sorted(query):
        weight = query[col]
        for row_idx, row_weight in model.postings.get(col, ()):
            scores[row_idx] = scores.get(row_idx, 0.0) + weight * row_weight
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    neighbors = [
        Neighbor(model.row_ids[row_idx], _clamp(sim)) for row_idx, sim in ranked
    ]
    if len(neighbors) < k:
        matched = set(scores)
        for row_idx in range(model.n_docs):
            if row_idx not in matched:
                neighbors.append(Neighbor(model.row_ids[row_idx], 0.0))
                if len(neighbors) >= k:
                    break
    return neighbors[: min(k, model.n_docs)]


def _knn_embedding(
    matrix: EmbeddingMatrix, query: Sequence[float], k: int
) -> list[Neighbor]:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (matrix.dim,):
        raise VectorSpaceError(
            f"query dimension {q.shape} does not match space dimension ({matrix.dim},)"
        )
    q_norm = float(np.linalg.norm(q))
    row_norms = np.linalg.norm(matrix.rows, axis=1)
    dots = matrix.rows @ q
    sims = np.zeros(matrix.n_docs, dtype=np.float64)
    if q_norm > 0.0:
        nonzero = row_norms > 0.0
        sims[nonzero] = dots[nonzero] / (row_norms[nonzero] * q_norm)
    order = sorted(range(matrix.n_docs), key=lambda i: (-sims[i], i))
    return [
        Neighbor(matrix.row_ids[i], _clamp(float(sims[i])))
        for i in order[: min(k, matrix.n_docs)]
    ]


def knn(
    space: TfidfModel | EmbeddingMatrix,
    query_vector: dict[int, float] | Sequence[float],
    k: int,
) -> list[Neighbor]:
    """Exactly min(k, N) neighbors by cosine, descending; ties break by row order.

    Cosine against a zero vector is defined as 0, so degenerate queries fall
    back to stable row order.
    """
    if k < 1:
        raise VectorSpaceError(f"k must be >= 1, got {k}")
    if isinstance(space, TfidfModel):
        if not isinstance(query_vector, dict):
            raise VectorSpaceError("TF-IDF queries must be sparse {column: weight} maps")
        return _knn_tfidf(space, query_vector, k)
    return _knn_embedding(space, query_vector, k)


def candidates_key(candidates: Sequence[RequirementRecord]) -> str:
    """Content hash of a candidate set; key persisted spaces by it so sweeps
    re-use fitted artifacts only when the pool is byte-identical."""
    digest = hashlib.sha256()
    for record in candidates:
        digest.update(f"{record.record_id}\x1f{record.text}\x1e".encode("utf-8"))
    return digest.hexdigest()


def save_space(space: TfidfModel | EmbeddingMatrix, path: str | Path) -> None:
    Path(path).write_text(space.to_json(), encoding="utf-8")


def load_tfidf(path: str | Path) -> TfidfModel:
    return TfidfModel.from_json(Path(path).read_text(encoding="utf-8"))


def load_embedding_matrix(path: str | Path) -> EmbeddingMatrix:
    return EmbeddingMatrix.from_json(Path(path).read_text(encoding="utf-8"))
