"""Shot-count sweeps: F1-vs-shots curves, optimal shot counts, over-prompting."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import Corpus, make_split
from .evaluation import (
    EvalReport,
    ExperimentConfig,
    run_full,
    run_holdout,
)
from .gateway import Client, ModelProfile
from .promptkit import DEFAULT_TEMPLATE, OrderingPolicy, PromptTemplate
from .vectorspace import EmbeddingProvider

DEFAULT_GRID = (0, 5, 10, 20, 40, 80, 120, 160)
DEFAULT_OVERPROMPTING_THRESHOLD = 0.02


class SweepError(Exception):
    pass


@dataclass(frozen=True)
class SweepPlan:
    models: tuple[str, ...]
    methods: tuple[str, ...]
    shot_grid: tuple[int, ...] = DEFAULT_GRID
    split_kind: str = "holdout"  # "holdout" | "full"
    split_param: float = 0.8
    split_seed: int = 0
    pool_size: int | None = None
    pool_seed: int = 0
    selection_seed: int = 0
    scoring_policy: str = "strict"
    overprompting_threshold: float = DEFAULT_OVERPROMPTING_THRESHOLD

    def __post_init__(self) -> None:
        if not self.models:
            raise SweepError("sweep needs at least one model")
        if not self.methods:
            raise SweepError("sweep needs at least one method")
        for method in self.methods:
            if method not in ("random", "embedding", "tfidf"):
                raise SweepError(f"unknown method {method!r}")
        if not self.shot_grid:
            raise SweepError("empty shot grid")
        if any(k < 0 for k in self.shot_grid):
            raise SweepError("shot counts must be >= 0")
        if any(b <= a for a, b in zip(self.shot_grid, self.shot_grid[1:])):
            raise SweepError(f"shot grid must be strictly increasing: {self.shot_grid}")
        if self.split_kind not in ("holdout", "full"):
            raise SweepError(f"unsupported sweep split kind {self.split_kind!r}")

    @property
    def n_cells(self) -> int:
        return len(self.models) * len(self.methods) * len(self.shot_grid)

    def cells(self) -> list[tuple[str, str, int]]:
        return [
            (model, method, k)
            for model in self.models
            for method in self.methods
            for k in self.shot_grid
        ]


@dataclass(frozen=True)
class CurvePoint:
    shot_count: int
    weighted_f1: float
    macro_f1: float
    n_invalid: int


@dataclass(frozen=True)
class OverpromptingVerdict:
    flagged: bool
    peak_at: int
    max_post_peak_decline: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "flagged": self.flagged,
            "peak_at": self.peak_at,
            "max_post_peak_decline": self.max_post_peak_decline,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class SweepCurve:
    model: str
    method: str
    points: tuple[CurvePoint, ...]
    optimal_shots: int
    peak_weighted_f1: float
    overprompting: OverpromptingVerdict

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "method": self.method,
            "points": [
                {
                    "shot_count": p.shot_count,
                    "weighted_f1": p.weighted_f1,
                    "macro_f1": p.macro_f1,
                    "n_invalid": p.n_invalid,
                }
                for p in self.points
            ],
            "optimal_shots": self.optimal_shots,
            "peak_weighted_f1": self.peak_weighted_f1,
            "overprompting": self.overprompting.to_dict(),
        }


@dataclass(frozen=True)
class CellFailure:
    model: str
    method: str
    shot_count: int
    error: str


@dataclass(frozen=True)
class SweepRun:
    curves: tuple[SweepCurve, ...]
    reports: dict[tuple[str, str, int], EvalReport]
    failures: tuple[CellFailure, ...]


def find_optimum(points: Sequence[CurvePoint]) -> int:
    """Shot count with the highest weighted F1; ties go to the fewest shots."""
    if not points:
        raise SweepError("cannot take the optimum of an empty curve")
    ordered = sorted(points, key=lambda p: p.shot_count)
    best = ordered[0]
    for point in ordered[1:]:
        if point.weighted_f1 > best.weighted_f1:
            best = point
    return best.shot_count


def detect_overprompting(
    points: Sequence[CurvePoint],
    threshold: float = DEFAULT_OVERPROMPTING_THRESHOLD,
) -> OverpromptingVerdict:
    """Flag a peak-then-decline curve.

    Decline is peak minus the post-peak minimum, not the final value, so a
    dip followed by partial recovery still registers.
    """
    if len(points) < 2:
        raise SweepError("over-prompting detection needs at least 2 points")
    ordered = sorted(points, key=lambda p: p.shot_count)
    peak_at = find_optimum(ordered)
    peak_value = next(p.weighted_f1 for p in ordered if p.shot_count == peak_at)
    after = [p.weighted_f1 for p in ordered if p.shot_count > peak_at]
    decline = peak_value - min(after) if after else 0.0
    flagged = decline >= threshold and peak_at < ordered[-1].shot_count
    return OverpromptingVerdict(flagged, peak_at, decline, threshold)


def build_curve(
    model: str,
    method: str,
    reports_by_k: dict[int, EvalReport],
    threshold: float = DEFAULT_OVERPROMPTING_THRESHOLD,
) -> SweepCurve:
    points = tuple(
        CurvePoint(
            shot_count=k,
            weighted_f1=report.weighted_f1,
            macro_f1=report.macro_f1,
            n_invalid=report.n_invalid,
        )
        for k, report in sorted(reports_by_k.items())
    )
    if not points:
        raise SweepError(f"no completed cells for ({model}, {method})")
    optimal = find_optimum(points)
    peak = next(p.weighted_f1 for p in points if p.shot_count == optimal)
    verdict = (
        detect_overprompting(points, threshold)
        if len(points) >= 2
        else OverpromptingVerdict(False, optimal, 0.0, threshold)
    )
    return SweepCurve(model, method, points, optimal, peak, verdict)


def run_sweep(
    plan: SweepPlan,
    corpus: Corpus,
    profiles: dict[str, ModelProfile],
    client: Client,
    provider: EmbeddingProvider | None = None,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    ordering: OrderingPolicy = OrderingPolicy(),
) -> SweepRun:
    """Run every (model, method, shot_count) cell and assemble curves.

    Cell failures are recorded and the sweep continues; completions are
    cache-backed, so re-running a plan only executes what is missing.
    """
    missing = [m for m in plan.models if m not in profiles]
    if missing:
        raise SweepError(f"no profile for model(s): {', '.join(missing)}")
    split = (
        make_split(corpus, "holdout", plan.split_param, plan.split_seed)
        if plan.split_kind == "holdout"
        else None
    )
    reports: dict[tuple[str, str, int], EvalReport] = {}
    failures: list[CellFailure] = []
    base_cfg = ExperimentConfig(
        method="random",
        k=0,
        pool_size=plan.pool_size,
        pool_seed=plan.pool_seed,
        selection_seed=plan.selection_seed,
        scoring_policy=plan.scoring_policy,
        template=template,
        ordering=ordering,
    )
    for model, method, k in plan.cells():
        cfg = replace(base_cfg, method=method, k=k)
        try:
            if split is not None:
                report = run_holdout(
                    corpus, split, profiles[model], cfg, client, provider
                )
            else:
                report = run_full(corpus, profiles[model], cfg, client, provider)
            reports[(model, method, k)] = report
        except Exception as exc:
            failures.append(CellFailure(model, method, k, f"{type(exc).__name__}: {exc}"))
    curves = []
    for model in plan.models:
        for method in plan.methods:
            by_k = {
                k: report
                for (m, meth, k), report in reports.items()
                if m == model and meth == method
            }
            if by_k:
                curves.append(
                    build_curve(model, method, by_k, plan.overprompting_threshold)
                )
    return SweepRun(tuple(curves), reports, tuple(failures))


@dataclass(frozen=True)
class RankEntry:
    rank: int
    method: str
    peak_weighted_f1: float
    optimal_shots: int


@dataclass(frozen=True)
class MethodRanking:
    model: str
    entries: tuple[RankEntry, ...]
    notes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "entries": [
                {
                    "rank": e.rank,
                    "method": e.method,
                    "peak_weighted_f1": e.peak_weighted_f1,
                    "optimal_shots": e.optimal_shots,
                }
                for e in self.entries
            ],
            "notes": list(self.notes),
        }


def compare_methods(
    curves: Sequence[SweepCurve],
    expected_methods: Sequence[str] | None = None,
) -> MethodRanking:
    """Rank one model's selection methods by peak weighted F1.

    Ties keep the declared (input) method order and are noted; expected
    methods with no curve are noted as absent.
    """
    if len(curves) < 2:
        raise SweepError("method comparison needs at least 2 curves")
    models = {c.model for c in curves}
    if len(models) != 1:
        raise SweepError(f"curves span multiple models: {sorted(models)}")
    model = curves[0].model
    declared = {c.method: i for i, c in enumerate(curves)}
    ranked = sorted(curves, key=lambda c: (-c.peak_weighted_f1, declared[c.method]))
    entries = tuple(
        RankEntry(i + 1, c.method, c.peak_weighted_f1, c.optimal_shots)
        for i, c in enumerate(ranked)
    )
    notes = []
    by_peak: dict[float, list[str]] = {}
    for curve in ranked:
        by_peak.setdefault(curve.peak_weighted_f1, []).append(curve.method)
    for peak, methods in by_peak.items():
        if len(methods) > 1:
            notes.append(f"tie at peak {peak}: {', '.join(methods)}")
    if expected_methods:
        for method in expected_methods:
            if method not in declared:
                notes.append(f"no curve for method {method}")
    return MethodRanking(model, entries, tuple(notes))


def sweep_to_json(run: SweepRun) -> str:
    payload = {
        "curves": [c.to_dict() for c in run.curves],
        "failures": [
            {
                "model": f.model,
                "method": f.method,
                "shot_count": f.shot_count,
                "error": f.error,
            }
            for f in run.failures
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
