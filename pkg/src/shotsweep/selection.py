"""Stratified few-shot pools and per-query example selection."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import LabelScheme, RequirementRecord
from .vectorspace import (
    EmbeddingCache,
    EmbeddingMatrix,
    EmbeddingProvider,
    TfidfModel,
    embed_query_tfidf,
    knn,
)


class SelectionError(Exception):
    pass


@dataclass(frozen=True)
class FewShotPool:
    candidates: tuple[RequirementRecord, ...]
    per_class: dict[str, tuple[int, ...]]
    pool_seed: int
    source_partition: str

    def __post_init__(self) -> None:
        by_id = {}
        for record in self.candidates:
            if record.record_id in by_id:
                raise SelectionError(f"duplicate pool candidate {record.record_id}")
            by_id[record.record_id] = record
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def candidate_ids(self) -> tuple[int, ...]:
        return tuple(r.record_id for r in self.candidates)

    def record(self, record_id: int) -> RequirementRecord:
        try:
            return self._by_id[record_id]  # type: ignore[attr-defined]
        except KeyError:
            raise SelectionError(f"record {record_id} not in pool") from None


def derived_rng(seed: int, salt: str) -> random.Random:
    """Stable per-purpose RNG: hash the (seed, salt) pair, not Python's hash()."""
    digest = hashlib.sha256(f"{seed}:{salt}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def build_pool(
    train: Sequence[RequirementRecord],
    scheme: LabelScheme,
    size: int,
    seed: int,
    source_partition: str = "train",
) -> FewShotPool:
    """Round-robin over classes in scheme order, one pick per class per round.

    Each class's pick order is a seeded shuffle of its train members. Classes
    that run out are skipped, so per-class counts among non-exhausted classes
    never spread by more than one.
    """
    if size < 0:
        raise SelectionError(f"pool size must be >= 0, got {size}")
    if size > len(train):
        raise SelectionError(
            f"pool size {size} exceeds train partition size {len(train)}"
        )
    queues: dict[str, list[RequirementRecord]] = {lid: [] for lid in scheme.label_ids}
    for record in train:
        if record.label not in queues:
            raise SelectionError(
                f"train record {record.record_id} labeled {record.label!r}, "
                f"not in scheme {scheme.name!r}"
            )
        queues[record.label].append(record)
    for lid in scheme.label_ids:
        derived_rng(seed, f"pool-class:{lid}").shuffle(queues[lid])

    picked: list[RequirementRecord] = []
    per_class: dict[str, list[int]] = {lid: [] for lid in scheme.label_ids}
    cursors = {lid: 0 for lid in scheme.label_ids}
    while len(picked) < size:
        progressed = False
        for lid in scheme.label_ids:
            if len(picked) >= size:
                break
            if cursors[lid] < len(queues[lid]):
                record = queues[lid][cursors[lid]]
                cursors[lid] += 1
                picked.append(record)
                per_class[lid].append(record.record_id)
                progressed = True
        if not progressed:
            break
    return FewShotPool(
        candidates=tuple(picked),
        per_class={lid: tuple(ids) for lid, ids in per_class.items()},
        pool_seed=seed,
        source_partition=source_partition,
    )


@dataclass(frozen=True)
class SelectionConfig:
    method: str  # "random" | "embedding" | "tfidf"
    k: int
    seed: int = 0
    exclude_query_record: bool = True

    def __post_init__(self) -> None:
        if self.method not in ("random", "embedding", "tfidf"):
            raise SelectionError(f"unknown selection method {self.method!r}")
        if self.k < 0:
            raise SelectionError(f"shot count must be >= 0, got {self.k}")


@dataclass(frozen=True)
class SelectionResult:
    query_key: str
    chosen: tuple[tuple[int, float | None], ...]
    method: str
    k_requested: int
    k_delivered: int

    @property
    def chosen_ids(self) -> tuple[int, ...]:
        return tuple(rid for rid, _ in self.chosen)

    def to_dict(self) -> dict:
        """JSONL-friendly form for offline selection audits."""
        return {
            "query_key": self.query_key,
            "chosen": [[rid, sim] for rid, sim in self.chosen],
            "method": self.method,
            "k_requested": self.k_requested,
            "k_delivered": self.k_delivered,
        }


def query_key_for(query: str | RequirementRecord) -> str:
    if isinstance(query, RequirementRecord):
        return f"record:{query.record_id}"
    digest = hashlib.sha256(query.encode("utf-8")).hexdigest()[:16]
    return f"text:{digest}"


def _check_space(pool: FewShotPool, row_ids: tuple[int, ...], what: str) -> None:
    if row_ids != pool.candidate_ids:
        raise SelectionError(
            f"{what} space was not fitted over this pool "
            f"(row_ids differ from pool candidates)"
        )


def _embed_query(
    provider: EmbeddingProvider, text: str, cache: EmbeddingCache | None
) -> list[float]:
    if cache is not None:
        hit = cache.get(provider.provider_tag, text)
        if hit is not None:
            return list(hit)
    vector = provider.embed_batch([text])[0]
    if cache is not None:
        cache.put(provider.provider_tag, text, vector)
    return list(vector)


def select(
    pool: FewShotPool,
    query: str | RequirementRecord,
    cfg: SelectionConfig,
    tfidf: TfidfModel | None = None,
    embeddings: EmbeddingMatrix | None = None,
    provider: EmbeddingProvider | None = None,
    embed_cache: EmbeddingCache | None = None,
) -> SelectionResult:
    """Pick cfg.k examples from the pool for one query.

    random draws uniformly without replacement with a per-query derived seed;
    tfidf/embedding rank the pool by cosine similarity. When the query is a
    pool member and exclusion is on, its own record is never returned.
    """
    query_key = query_key_for(query)
    query_text = query.text if isinstance(query, RequirementRecord) else query
    excluded_id: int | None = None
    if (
        cfg.exclude_query_record
        and isinstance(query, RequirementRecord)
        and query.record_id in pool.candidate_ids
    ):
        excluded_id = query.record_id
    available = len(pool) - (1 if excluded_id is not None else 0)
    k_delivered = min(cfg.k, available)

    if k_delivered == 0:
        return SelectionResult(query_key, (), cfg.method, cfg.k, 0)

    if cfg.method == "random":
        ids = [rid for rid in pool.candidate_ids if rid != excluded_id]
        rng = derived_rng(cfg.seed, f"query:{query_key}")
        chosen = tuple((rid, None) for rid in rng.sample(ids, k_delivered))
        return SelectionResult(query_key, chosen, cfg.method, cfg.k, k_delivered)

    if cfg.method == "tfidf":
        if tfidf is None:
            raise SelectionError("tfidf method requires a fitted TfidfModel")
        _check_space(pool, tfidf.row_ids, "TF-IDF")
        query_vector: dict[int, float] | list[float] = embed_query_tfidf(
            tfidf, query_text
        )
        space: TfidfModel | EmbeddingMatrix = tfidf
    else:
        if embeddings is None or provider is None:
            raise SelectionError(
                "embedding method requires an EmbeddingMatrix and a provider"
            )
        _check_space(pool, embeddings.row_ids, "embedding")
        if provider.provider_tag != embeddings.provider_tag:
            raise SelectionError(
                f"provider {provider.provider_tag!r} does not match matrix "
                f"{embeddings.provider_tag!r}"
            )
        query_vector = _embed_query(provider, query_text, embed_cache)
        space = embeddings

    want = k_delivered + (1 if excluded_id is not None else 0)
    neighbors = knn(space, query_vector, want)
    chosen = tuple(
        (n.record_id, n.similarity)
        for n in neighbors
        if n.record_id != excluded_id
    )[:k_delivered]
    return SelectionResult(query_key, chosen, cfg.method, cfg.k, k_delivered)


@dataclass(frozen=True)
class SelectionSummary:
    n_queries: int
    similarity_mean: float | None
    similarity_min: float | None
    similarity_max: float | None
    class_counts: dict[str, int] = field(default_factory=dict)
    duplication_rate: float = 0.0


def selection_report(
    results: Sequence[SelectionResult], pool: FewShotPool
) -> SelectionSummary:
    """Audit a batch of selections: similarity stats, class mix, duplication.

    duplication_rate is the fraction of queries whose chosen list also shows
    up verbatim for at least one other query.
    """
    if not results:
        return SelectionSummary(0, None, None, None, {}, 0.0)
    sims = [
        sim for result in results for _, sim in result.chosen if sim is not None
    ]
    class_counts: dict[str, int] = {}
    for result in results:
        for rid in result.chosen_ids:
            label = pool.record(rid).label
            class_counts[label] = class_counts.get(label, 0) + 1
    signatures = [result.chosen_ids for result in results]
    tally: dict[tuple[int, ...], int] = {}
    for sig in signatures:
        tally[sig] = tally.get(sig, 0) + 1
    duplicated = sum(1 for sig in signatures if tally[sig] > 1)
    return SelectionSummary(
        n_queries=len(results),
        similarity_mean=sum(sims) / len(sims) if sims else None,
        similarity_min=min(sims) if sims else None,
        similarity_max=max(sims) if sims else None,
        class_counts=class_counts,
        duplication_rate=duplicated / len(results),
    )
