from __future__ import annotations

import random

import pytest

from shotsweep import (
    Client,
    EchoGoldBackend,
    ModelProfile,
    SweepPlan,
    compare_methods,
    detect_overprompting,
    find_optimum,
    run_sweep,
)
from shotsweep.sweep import (
    CurvePoint,
    OverpromptingVerdict,
    SweepCurve,
    SweepError,
    build_curve,
)

from hillmock import HILL_SCHEDULE, balanced_corpus, hill_setup


def points(*pairs):
    return [CurvePoint(k, f1, f1, 0) for k, f1 in pairs]


class TestSweepPlan:
    def test_grid_must_increase(self):
        with pytest.raises(SweepError, match="strictly increasing"):
            SweepPlan(("m",), ("tfidf",), (0, 5, 5))

    def test_unknown_method(self):
        with pytest.raises(SweepError, match="unknown method"):
            SweepPlan(("m",), ("nearest",))

    def test_cell_matrix_size(self):
        plan = SweepPlan(
            tuple(f"m{i}" for i in range(7)), ("random", "embedding", "tfidf")
        )
        assert plan.n_cells == 168
        assert len(plan.cells()) == 168


class TestFindOptimum:
    def test_single_point(self):
        assert find_optimum(points((10, 0.5))) == 10

    def test_plateau_resolves_to_fewest(self):
        assert find_optimum(points((10, 0.9), (20, 0.9), (40, 0.9))) == 10

    def test_argmax(self):
        assert find_optimum(points((5, 0.80), (10, 0.95), (20, 0.93))) == 10

    def test_matches_linear_scan_oracle(self):
        rng = random.Random(0)
        for _ in range(200):
            grid = sorted(rng.sample(range(0, 200), rng.randint(1, 9)))
            values = [round(rng.random(), 3) for _ in grid]
            curve = points(*zip(grid, values))
            best = max(values)
            expected = min(k for k, v in zip(grid, values) if v == best)
            assert find_optimum(curve) == expected


class TestDetectOverprompting:
    def test_strictly_increasing_not_flagged(self):
        verdict = detect_overprompting(points((0, 0.5), (5, 0.7), (10, 0.9)), 0.02)
        assert not verdict.flagged
        assert verdict.max_post_peak_decline == 0.0

    def test_hill_flagged(self):
        verdict = detect_overprompting(points((0, 0.5), (5, 0.9), (10, 0.7)), 0.02)
        assert verdict.flagged
        assert verdict.peak_at == 5
        assert abs(verdict.max_post_peak_decline - 0.2) < 1e-12

    def test_small_decline_below_threshold(self):
        verdict = detect_overprompting(
            points((0, 0.90), (5, 0.91), (10, 0.895)), 0.02
        )
        assert not verdict.flagged
        assert abs(verdict.max_post_peak_decline - 0.015) < 1e-12

    def test_dip_then_recovery_still_registers(self):
        verdict = detect_overprompting(
            points((0, 0.5), (5, 0.9), (10, 0.7), (20, 0.85)), 0.02
        )
        assert verdict.flagged
        assert abs(verdict.max_post_peak_decline - 0.2) < 1e-12

    def test_flagged_implies_peak_before_last(self):
        rng = random.Random(7)
        for _ in range(200):
            grid = sorted(rng.sample(range(0, 100), rng.randint(2, 8)))
            values = [round(rng.random(), 2) for _ in grid]
            verdict = detect_overprompting(points(*zip(grid, values)), 0.05)
            if verdict.flagged:
                assert verdict.peak_at < grid[-1]
                assert verdict.max_post_peak_decline >= 0.05

    def test_prepending_strictly_lower_points_is_invariant(self):
        base = points((10, 0.6), (20, 0.9), (40, 0.7))
        verdict = detect_overprompting(base, 0.02)
        extended = points((0, 0.2), (5, 0.3)) + base
        verdict2 = detect_overprompting(extended, 0.02)
        assert verdict2.peak_at == verdict.peak_at
        assert verdict2.max_post_peak_decline == verdict.max_post_peak_decline
        assert verdict2.flagged == verdict.flagged

    def test_needs_two_points(self):
        with pytest.raises(SweepError):
            detect_overprompting(points((0, 0.5)), 0.02)


def echo_gold_client(corpus):
    gold = {r.text: corpus.scheme.canonical_name(r.label) for r in corpus.records}
    backend = EchoGoldBackend(gold)
    return Client(mocks={"echo-gold": backend}), backend


def mock_profiles(names, backend="echo-gold"):
    return {n: ModelProfile(name=n, base_url=f"mock://{backend}") for n in names}


class TestRunSweep:
    def test_echo_gold_flat_curve(self):
        corpus = balanced_corpus(10)
        client, _ = echo_gold_client(corpus)
        plan = SweepPlan(("m1",), ("tfidf",), (0, 5), split_param=0.5)
        run = run_sweep(plan, corpus, mock_profiles(["m1"]), client)
        assert not run.failures
        curve = run.curves[0]
        assert [p.weighted_f1 for p in curve.points] == [1.0, 1.0]
        assert curve.optimal_shots == 0  # tie resolves to fewest shots
        assert not curve.overprompting.flagged

    def test_hill_schedule_detected(self):
        corpus, split, backend = hill_setup()
        client = Client(mocks={"hill": backend})
        profiles = {"hill-model": ModelProfile(name="hill-model", base_url="mock://hill")}
        plan = SweepPlan(
            ("hill-model",),
            ("tfidf",),
            tuple(sorted(HILL_SCHEDULE)),
            split_param=0.5,
            split_seed=0,
        )
        run = run_sweep(plan, corpus, profiles, client)
        assert not run.failures
        curve = run.curves[0]
        got = {p.shot_count: p.weighted_f1 for p in curve.points}
        for k, expected in HILL_SCHEDULE.items():
            assert abs(got[k] - expected) < 1e-9
        assert curve.optimal_shots == 10
        assert curve.overprompting.flagged
        assert abs(curve.overprompting.max_post_peak_decline - 0.1) < 1e-9

    def test_monotone_schedule_not_flagged(self):
        schedule = {0: 0.5, 5: 0.7, 10: 0.8, 20: 0.9, 40: 0.95}
        corpus, split, backend = hill_setup(schedule)
        client = Client(mocks={"hill": backend})
        profiles = {"m": ModelProfile(name="m", base_url="mock://hill")}
        plan = SweepPlan(
            ("m",), ("tfidf",), tuple(sorted(schedule)), split_param=0.5, split_seed=0
        )
        run = run_sweep(plan, corpus, profiles, client)
        curve = run.curves[0]
        assert curve.optimal_shots == 40  # last grid point
        assert not curve.overprompting.flagged

    def test_cell_failures_recorded_and_sweep_continues(self):
        corpus = balanced_corpus(10)
        gold = {r.text: corpus.scheme.canonical_name(r.label) for r in corpus.records}

        class FailsAtK5(EchoGoldBackend):
            def respond(self, profile, prompt):
                if prompt.shot_count == 5:
                    raise RuntimeError("cell-level boom")
                return super().respond(profile, prompt)

        client = Client(mocks={"echo-gold": FailsAtK5(gold)})
        plan = SweepPlan(("m1",), ("random",), (0, 5, 10), split_param=0.5)
        run = run_sweep(plan, corpus, mock_profiles(["m1"]), client)
        assert len(run.failures) == 1
        assert run.failures[0].shot_count == 5
        curve = run.curves[0]
        assert [p.shot_count for p in curve.points] == [0, 10]

    def test_missing_profile_aborts(self):
        corpus = balanced_corpus(4)
        client, _ = echo_gold_client(corpus)
        plan = SweepPlan(("ghost",), ("random",), (0,))
        with pytest.raises(SweepError, match="ghost"):
            run_sweep(plan, corpus, {}, client)

    def test_rerun_hits_cache_only(self):
        corpus = balanced_corpus(6)
        client, backend = echo_gold_client(corpus)
        plan = SweepPlan(("m1",), ("tfidf", "random"), (0, 2), split_param=0.5)
        profiles = mock_profiles(["m1"])
        run_sweep(plan, corpus, profiles, client)
        calls_first = backend.calls
        rerun = run_sweep(plan, corpus, profiles, client)
        assert backend.calls == calls_first
        assert not rerun.failures


class TestCompareMethods:
    def curve(self, method, peak, optimal=10, model="m"):
        return SweepCurve(
            model=model,
            method=method,
            points=(CurvePoint(optimal, peak, peak, 0),),
            optimal_shots=optimal,
            peak_weighted_f1=peak,
            overprompting=OverpromptingVerdict(False, optimal, 0.0, 0.02),
        )

    def test_ranking_by_peak(self):
        ranking = compare_methods(
            [self.curve("random", 0.85), self.curve("tfidf", 0.95)]
        )
        assert [e.method for e in ranking.entries] == ["tfidf", "random"]
        assert ranking.entries[0].rank == 1

    def test_identical_curves_tie_noted_in_declared_order(self):
        ranking = compare_methods(
            [self.curve("random", 0.9), self.curve("tfidf", 0.9)]
        )
        assert [e.method for e in ranking.entries] == ["random", "tfidf"]
        assert any("tie" in note for note in ranking.notes)

    def test_missing_method_recorded(self):
        ranking = compare_methods(
            [self.curve("random", 0.8), self.curve("tfidf", 0.9)],
            expected_methods=("random", "embedding", "tfidf"),
        )
        assert any("embedding" in note for note in ranking.notes)

    def test_mixed_models_rejected(self):
        with pytest.raises(SweepError, match="multiple models"):
            compare_methods(
                [self.curve("random", 0.8, model="a"), self.curve("tfidf", 0.9, model="b")]
            )

    def test_needs_two_curves(self):
        with pytest.raises(SweepError):
            compare_methods([self.curve("random", 0.8)])


class TestBuildCurve:
    def test_annotations_consistent(self):
        corpus = balanced_corpus(6)
        client, _ = echo_gold_client(corpus)
        plan = SweepPlan(("m1",), ("random",), (0, 2, 4), split_param=0.5)
        run = run_sweep(plan, corpus, mock_profiles(["m1"]), client)
        curve = run.curves[0]
        rebuilt = build_curve(
            "m1", "random",
            {k: run.reports[("m1", "random", k)] for k in (0, 2, 4)},
        )
        assert rebuilt.optimal_shots == curve.optimal_shots
        assert rebuilt.points == curve.points
