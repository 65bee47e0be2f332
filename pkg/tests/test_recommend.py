"""Recommenders, the temporal split, and ranking-metric evaluation."""

import math
from itertools import permutations

import numpy as np
import pytest

from moocmine.eventlog import build_enrollment_table, filter_window
from moocmine.recommend import (
    FrePaPopModel,
    RankingMetrics,
    RecommendationRequest,
    SplitSpec,
    evaluate,
    fit_frepapop,
    ranking_scores,
    recommend_frepapop,
    recommend_popularity,
    recommend_random,
    temporal_split,
)

from conftest import make_log, random_records


def oracle_scores(recs, truth, k):
    """Literal transcription of the metric definitions, loop by loop."""
    top = list(recs)[:k]
    hit_ranks = [r + 1 for r, c in enumerate(top) if c in truth]
    hits = len(hit_ranks)
    precision = hits / k
    recall = hits / len(truth)
    if precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    ap = sum(
        sum(1 for r2 in hit_ranks if r2 <= r) / r for r in hit_ranks
    ) / min(len(truth), k)
    rr = 1.0 / hit_ranks[0] if hit_ranks else 0.0
    dcg = sum(1.0 / math.log2(r + 1) for r in hit_ranks)
    idcg = sum(1.0 / math.log2(r + 1) for r in range(1, min(len(truth), k) + 1))
    ndcg = dcg / idcg
    return f1, ap, rr, ndcg


class TestSplit:
    def test_event_at_split_goes_to_test(self):
        log = make_log([("c", "u", 0, 100)])
        train, test = temporal_split(log, SplitSpec(0, 100, 200))
        assert len(train) == 0 and len(test) == 1

    def test_all_before_split_empty_test(self):
        log = make_log([("c", "u", 0, 10), ("c", "u", 1, 20)])
        train, test = temporal_split(log, SplitSpec(0, 50, 100))
        assert len(train) == 2 and len(test) == 0

    def test_partition_equals_filtered_original(self, rng):
        log = make_log(random_records(rng, 100, t_max=1000))
        spec = SplitSpec(0, 500, 1001)
        train, test = temporal_split(log, spec)
        whole = filter_window(log, 0, 1001)
        joined = sorted(
            [(e.learner_id, e.timestamp, e.course_id) for e in train]
            + [(e.learner_id, e.timestamp, e.course_id) for e in test]
        )
        assert joined == sorted((e.learner_id, e.timestamp, e.course_id) for e in whole)
        assert len(train) + len(test) == len(whole)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SplitSpec(10, 10, 20)
        with pytest.raises(ValueError):
            SplitSpec(0, 30, 20)


class TestFitFrePaPop:
    def test_successor_probabilities(self):
        # u1..u4 walk a->b, u5 walks a->c.
        records = []
        for i, dst in enumerate(["b", "b", "b", "c"]):
            records += [("a", f"u{i}", 0, 10), (dst, f"u{i}", 0, 20)]
        model = fit_frepapop(make_log(records))
        assert model.successors["a"] == (("b", 0.75), ("c", 0.25))

    def test_course_without_transitions_has_no_entry(self):
        records = [("a", "u1", 0, 10), ("b", "u1", 0, 20)]
        model = fit_frepapop(make_log(records))
        assert "b" not in model.successors

    def test_popularity_ranking_with_ties(self):
        records = [("b", "u1", 0, 1), ("b", "u2", 0, 2), ("a", "u1", 0, 3),
                   ("a", "u3", 0, 4), ("z", "u1", 0, 5)]
        model = fit_frepapop(make_log(records))
        assert model.popularity == ("a", "b", "z")

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            fit_frepapop(make_log([]))


MODEL = FrePaPopModel(
    successors={
        "a": (("b", 0.5), ("c", 0.3), ("d", 0.2)),
        "b": (("e", 1.0),),
    },
    popularity=("p1", "p2", "a", "b", "c", "d", "e", "p3"),
    enrollment_counts={},
)


class TestRecommendFrePaPop:
    def test_enough_successors(self):
        req = RecommendationRequest("u", ("a",), 2)
        assert recommend_frepapop(MODEL, req) == ["b", "c"]

    def test_unseen_last_course_backfills_popularity(self):
        req = RecommendationRequest("u", ("zz",), 3)
        assert recommend_frepapop(MODEL, req) == ["p1", "p2", "a"]

    def test_backfill_no_duplicates(self):
        req = RecommendationRequest("u", ("a",), 6)
        recs = recommend_frepapop(MODEL, req)
        assert recs == ["b", "c", "d", "p1", "p2", "e"]
        assert len(recs) == len(set(recs))
        assert "a" not in recs

    def test_history_excluded_everywhere(self):
        req = RecommendationRequest("u", ("c", "p1", "a"), 5)
        recs = recommend_frepapop(MODEL, req)
        assert recs == ["b", "d", "p2", "e", "p3"]

    def test_empty_history_is_popularity(self):
        req = RecommendationRequest("u", (), 4)
        assert recommend_frepapop(MODEL, req) == ["p1", "p2", "a", "b"]

    def test_degenerate_model_equals_popularity(self):
        degenerate = FrePaPopModel(
            successors={}, popularity=MODEL.popularity, enrollment_counts={}
        )
        for history in ((), ("a",), ("p1", "b")):
            for k in (1, 3, 8):
                req = RecommendationRequest("u", history, k)
                assert recommend_frepapop(degenerate, req) == recommend_popularity(MODEL, req)


class TestPopularityAndRandom:
    def test_popularity_top1(self):
        model = FrePaPopModel(successors={}, popularity=("big", "small"),
                              enrollment_counts={"big": 5, "small": 3})
        assert recommend_popularity(model, RecommendationRequest("u", (), 1)) == ["big"]

    def test_random_deterministic_under_seed(self):
        catalog = [f"c{i}" for i in range(50)]
        req = RecommendationRequest("u7", ("c0",), 10)
        a = recommend_random(catalog, req, seed=42)
        b = recommend_random(catalog, req, seed=42)
        assert a == b
        assert len(a) == 10 and "c0" not in a and len(set(a)) == 10
        assert recommend_random(catalog, req, seed=43) != a

    def test_random_inclusion_frequency(self):
        # Binomial oracle: each course appears with probability K/N.
        catalog = [f"c{i:02d}" for i in range(50)]
        k, trials = 10, 10_000
        freq = {c: 0 for c in catalog}
        for t in range(trials):
            req = RecommendationRequest(f"user{t}", (), k)
            for c in recommend_random(catalog, req, seed=1):
                freq[c] += 1
        p = k / 50
        sigma = (trials * p * (1 - p)) ** 0.5
        for c, n in freq.items():
            assert abs(n - trials * p) <= 3 * sigma, (c, n)


class TestRankingScores:
    def test_worked_example(self):
        recs = [f"c{i}" for i in range(1, 11)]
        f1, ap, rr, ndcg = ranking_scores(recs, {"c2"}, 10)
        assert rr == pytest.approx(0.5, abs=1e-12)
        assert ap == pytest.approx(0.5, abs=1e-12)
        assert ndcg == pytest.approx(1 / math.log2(3), abs=1e-4)
        assert f1 == pytest.approx(2 * (0.1 * 1.0) / 1.1, abs=1e-4)

    def test_perfect_list(self):
        truth = {f"c{i}" for i in range(10)}
        recs = sorted(truth)
        assert ranking_scores(recs, truth, 10) == (1.0, 1.0, 1.0, 1.0)

    def test_no_hits(self):
        assert ranking_scores(["x", "y"], {"z"}, 10) == (0.0, 0.0, 0.0, 0.0)

    def test_single_relevant_ap_equals_rr(self):
        for rank in range(1, 8):
            recs = [f"f{i}" for i in range(rank - 1)] + ["hit"] + ["g1", "g2"]
            f1, ap, rr, ndcg = ranking_scores(recs, {"hit"}, 10)
            assert ap == rr == pytest.approx(1.0 / rank, abs=1e-12)

    def test_exhaustive_against_oracle(self):
        courses = ["a", "b", "c", "d"]
        truths = [{"a"}, {"b", "d"}, {"a", "b", "c"}, set(courses), {"zz"}, {"a", "zz"}]
        for k in (1, 2, 3, 4, 10):
            for perm in permutations(courses):
                for truth in truths:
                    got = ranking_scores(list(perm), truth, k)
                    expected = oracle_scores(list(perm), truth, k)
                    assert got == pytest.approx(expected, abs=1e-12)


def split_fixture():
    """Train: u1 a->b, u2 a->c, u3 a only.  Test: u1 enrolls c and d."""
    records = [
        ("a", "u1", 0, 10), ("b", "u1", 0, 20),
        ("a", "u2", 0, 11), ("c", "u2", 0, 21),
        ("a", "u3", 0, 12),
        ("c", "u1", 0, 110), ("d", "u1", 0, 120),
        ("b", "u2", 0, 115),   # u2 sees b in test
        ("a", "u9", 0, 130),   # u9 absent from training
        ("a", "u3", 0, 140),   # u3 has no *new* course in test
    ]
    log = make_log(records)
    return temporal_split(log, SplitSpec(0, 100, 200))


class TestEvaluate:
    def test_protocol_skips_and_truth(self):
        train, test = split_fixture()
        model = fit_frepapop(train)
        metrics = evaluate(lambda r: recommend_frepapop(model, r), train, test, k=2)
        # u1 truth {c, d}, u2 truth {b}; u9 has no history; u3 no new truth.
        assert metrics.users_evaluated == 2
        assert metrics.users_skipped_no_history == 1
        assert metrics.users_skipped_no_truth == 1
        assert not metrics.empty

    def test_empty_result_flag(self):
        train, test = split_fixture()
        only_seen = filter_window(test, 130, 141)  # u9 + u3 only
        model = fit_frepapop(train)
        metrics = evaluate(lambda r: recommend_frepapop(model, r), train, only_seen, k=2)
        assert metrics.empty
        assert metrics.users_evaluated == 0

    def test_min_train_events_filter(self):
        train, test = split_fixture()
        model = fit_frepapop(train)
        metrics = evaluate(
            lambda r: recommend_frepapop(model, r), train, test, k=2, min_train_events=2
        )
        # u1 and u2 have 2 training events each; u3's single event is filtered
        # out before its (empty) truth is even considered.
        assert metrics.users_evaluated == 2
        assert metrics.users_skipped_filtered == 1
        strict = evaluate(
            lambda r: recommend_frepapop(model, r), train, test, k=2, min_train_events=3
        )
        assert strict.users_evaluated == 0
        assert strict.users_skipped_filtered == 3

    def test_deterministic_bit_for_bit(self):
        train, test = split_fixture()
        model = fit_frepapop(train)
        rec = lambda r: recommend_random(model.catalog, r, seed=3)
        m1 = evaluate(rec, train, test, k=2)
        m2 = evaluate(rec, train, test, k=2)
        assert m1 == m2

    def test_metrics_in_unit_interval(self, rng):
        records = random_records(rng, 400, n_learners=30, n_courses=12, t_max=1000)
        log = make_log(records)
        train, test = temporal_split(log, SplitSpec(0, 500, 1001))
        model = fit_frepapop(train)
        for recommender in (
            lambda r: recommend_frepapop(model, r),
            lambda r: recommend_popularity(model, r),
            lambda r: recommend_random(model.catalog, r, seed=0),
        ):
            m = evaluate(recommender, train, test, k=10)
            for v in (m.f1_at_k, m.map_at_k, m.mrr_at_k, m.ndcg_at_k):
                assert 0.0 <= v <= 1.0

    def test_recommendations_never_contain_history(self, rng):
        records = random_records(rng, 300, n_learners=25, n_courses=10, t_max=1000)
        log = make_log(records)
        train, _ = temporal_split(log, SplitSpec(0, 600, 1001))
        model = fit_frepapop(train)
        table = build_enrollment_table(train)
        from moocmine.seqmine import enrollment_sequences

        for s in enrollment_sequences(table):
            req = RecommendationRequest(s.learner_id, s.courses, 10)
            for recommender in (recommend_frepapop, recommend_popularity):
                recs = recommender(model, req)
                assert not set(recs) & set(s.courses)
                assert len(recs) == len(set(recs))
