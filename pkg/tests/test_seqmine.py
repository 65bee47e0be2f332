"""Enrollment sequences and transition-matrix estimation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moocmine.eventlog import CourseMeta, build_enrollment_table
from moocmine.seqmine import (
    EnrollmentSequence,
    TransitionCounts,
    category_transition_matrix,
    count_transitions,
    course_transition_matrix,
    enrollment_sequences,
)

from conftest import make_log


def seq(learner, courses, times=None):
    times = times or tuple(range(len(courses)))
    return EnrollmentSequence(learner, tuple(courses), tuple(times))


class TestSequences:
    def test_ordered_by_first_activity(self):
        log = make_log([("x", "u1", 0, 5), ("y", "u1", 0, 3)])
        seqs = enrollment_sequences(build_enrollment_table(log))
        assert seqs[0].courses == ("y", "x")
        assert seqs[0].times == (3, 5)

    def test_tie_breaks_by_course_id(self):
        log = make_log([("y", "u1", 0, 7), ("x", "u1", 0, 7)])
        seqs = enrollment_sequences(build_enrollment_table(log))
        assert seqs[0].courses == ("x", "y")

    def test_matches_sort_oracle(self, rng):
        from conftest import random_records

        records = random_records(rng, 80, n_learners=8, n_courses=6)
        table = build_enrollment_table(make_log(records))
        seqs = {s.learner_id: s for s in enrollment_sequences(table)}
        first = {}
        for c, u, _, t in records:
            key = (u, c)
            if key not in first or t < first[key]:
                first[key] = t
        by_learner = {}
        for (u, c), t in first.items():
            by_learner.setdefault(u, []).append((t, c))
        for u, pairs in by_learner.items():
            expected = tuple(c for _, c in sorted(pairs))
            assert seqs[u].courses == expected


class TestCounts:
    def test_adjacent_pairs(self):
        counts = count_transitions([seq("u", ["a", "b", "c"])])
        assert counts.counts == {("a", "b"): 1, ("b", "c"): 1}

    def test_short_sequences_contribute_nothing(self):
        counts = count_transitions([seq("u", ["a"]), seq("v", ["b"])])
        assert counts.counts == {}
        assert counts.total == 0

    def test_all_ordered_pairs_flag(self):
        counts = count_transitions([seq("u", ["a", "b", "c"])], adjacent_only=False)
        assert counts.counts == {("a", "b"): 1, ("a", "c"): 1, ("b", "c"): 1}

    def test_length_identity(self, rng):
        seqs = []
        for i in range(30):
            n = int(rng.integers(1, 6))
            courses = [f"c{j}" for j in rng.permutation(8)[:n]]
            seqs.append(seq(f"u{i}", courses))
        counts = count_transitions(seqs)
        assert counts.total == sum(max(0, len(s.courses) - 1) for s in seqs)

    def test_permutation_invariant(self, rng):
        seqs = [seq(f"u{i}", [f"c{j}" for j in rng.permutation(6)[:3]]) for i in range(20)]
        shuffled = list(seqs)
        rng.shuffle(shuffled)
        assert count_transitions(seqs).counts == count_transitions(shuffled).counts


class TestCourseMatrix:
    def test_row_normalisation(self):
        counts = TransitionCounts({("a", "b"): 3, ("a", "c"): 1})
        m = course_transition_matrix(counts)
        assert m.prob("a", "b") == pytest.approx(0.75, abs=1e-15)
        assert m.prob("a", "c") == pytest.approx(0.25, abs=1e-15)

    def test_undefined_rows_flagged(self):
        counts = TransitionCounts({("a", "b"): 2})
        m = course_transition_matrix(counts)
        assert m.is_defined("a")
        assert not m.is_defined("b")
        assert m.row("b").sum() == 0.0

    def test_matches_bruteforce_normalisation(self, rng):
        pairs = {}
        for _ in range(60):
            src, dst = f"c{int(rng.integers(6))}", f"c{int(rng.integers(6))}"
            pairs[(src, dst)] = pairs.get((src, dst), 0) + int(rng.integers(1, 5))
        m = course_transition_matrix(TransitionCounts(pairs))
        totals = {}
        for (src, _), n in pairs.items():
            totals[src] = totals.get(src, 0) + n
        for (src, dst), n in pairs.items():
            assert m.prob(src, dst) == pytest.approx(n / totals[src], abs=1e-12)

    @given(st.dictionaries(
        st.tuples(st.integers(0, 5), st.integers(0, 5)), st.integers(1, 20), max_size=25,
    ))
    @settings(max_examples=60, deadline=None)
    def test_rows_stochastic(self, raw):
        counts = TransitionCounts({(f"c{a}", f"c{b}"): n for (a, b), n in raw.items()})
        m = course_transition_matrix(counts)
        assert np.all(m.probs >= 0)
        sums = m.probs.sum(axis=1)
        assert np.all(np.abs(sums[m.row_defined] - 1.0) <= 1e-9)
        assert np.all(sums[~m.row_defined] == 0.0)


CATALOG = {
    "a1": CourseMeta("a1", category="A"),
    "a2": CourseMeta("a2", category="A"),
    "b1": CourseMeta("b1", category="B"),
    "b2": CourseMeta("b2", category="B"),
    "nocat": CourseMeta("nocat"),
}


class TestCategoryMatrix:
    def test_all_within_category(self):
        counts = TransitionCounts({("a1", "a2"): 4, ("a2", "a1"): 1})
        m = category_transition_matrix(counts, CATALOG)
        assert m.prob("A", "A") == 1.0

    def test_even_split(self):
        counts = TransitionCounts({("a1", "a2"): 2, ("a1", "b1"): 2})
        m = category_transition_matrix(counts, CATALOG)
        assert m.prob("A", "A") == pytest.approx(0.5, abs=1e-15)
        assert m.prob("A", "B") == pytest.approx(0.5, abs=1e-15)

    def test_uncategorised_endpoints_dropped(self):
        counts = TransitionCounts({("a1", "nocat"): 5, ("nocat", "b1"): 5, ("a1", "b1"): 1})
        m = category_transition_matrix(counts, CATALOG)
        assert m.prob("A", "B") == 1.0

    def test_equals_count_aggregation(self, rng):
        courses = list(CATALOG)
        pairs = {}
        for _ in range(50):
            src, dst = courses[int(rng.integers(5))], courses[int(rng.integers(5))]
            pairs[(src, dst)] = pairs.get((src, dst), 0) + 1
        counts = TransitionCounts(pairs)
        m = category_transition_matrix(counts, CATALOG)
        agg = {}
        for (src, dst), n in pairs.items():
            cs, cd = CATALOG[src].category, CATALOG[dst].category
            if cs and cd:
                agg[(cs, cd)] = agg.get((cs, cd), 0) + n
        totals = {}
        for (cs, _), n in agg.items():
            totals[cs] = totals.get(cs, 0) + n
        for (cs, cd), n in agg.items():
            assert m.prob(cs, cd) == pytest.approx(n / totals[cs], abs=1e-12)

    def test_asymmetry_is_representable(self):
        counts = TransitionCounts({("a1", "b1"): 9, ("a1", "a2"): 1, ("b1", "a1"): 1, ("b1", "b2"): 9})
        m = category_transition_matrix(counts, CATALOG)
        assert m.prob("A", "B") == pytest.approx(0.9, abs=1e-12)
        assert m.prob("B", "A") == pytest.approx(0.1, abs=1e-12)
        assert m.prob("A", "B") != m.prob("B", "A")


class TestPlantedChain:
    def test_counts_within_three_sigma(self):
        from moocmine.synthgen import ChainSpec, IntervalSpec, gen_activity_log

        # Zero-diagonal rows and length-2 walks keep the per-cell count
        # exactly Binomial(n, start_weight * p).
        trans = np.array([
            [0.0, 0.7, 0.3],
            [0.4, 0.0, 0.6],
            [0.5, 0.5, 0.0],
        ])
        spec = ChainSpec(
            course_ids=("a", "b", "c"),
            categories=(None, None, None),
            transition=trans,
            start_weights=np.array([0.5, 0.3, 0.2]),
            n_learners=100,
            seq_length_range=(2, 2),
            burst_events_range=(1, 1),
            burst_gaps=IntervalSpec(alpha=2.0, t_min_hours=0.01, t_max_hours=1.0),
            seed=11,
        )
        log = gen_activity_log(spec)
        seqs = enrollment_sequences(build_enrollment_table(log))
        counts = count_transitions(seqs).counts
        names = ("a", "b", "c")
        w = (0.5, 0.3, 0.2)
        n = 100
        for i, src in enumerate(names):
            for j, dst in enumerate(names):
                q = w[i] * trans[i, j]
                if q == 0:
                    assert (src, dst) not in counts
                    continue
                sigma = (n * q * (1 - q)) ** 0.5
                assert abs(counts.get((src, dst), 0) - n * q) <= 3 * sigma

    def test_category_mix_recovered(self):
        from moocmine.synthgen import ChainSpec, IntervalSpec, gen_activity_log

        course_ids = tuple(f"a{i}" for i in range(4)) + tuple(f"b{i}" for i in range(4))
        categories = ("A",) * 4 + ("B",) * 4
        n = len(course_ids)
        trans = np.zeros((n, n))
        for i in range(n):
            same = [j for j in range(n) if categories[j] == categories[i] and j != i]
            other = [j for j in range(n) if categories[j] != categories[i]]
            trans[i, same] = 0.7 / len(same)
            trans[i, other] = 0.3 / len(other)
        spec = ChainSpec(
            course_ids=course_ids,
            categories=categories,
            transition=trans,
            start_weights=np.ones(n),
            n_learners=10_000,
            seq_length_range=(2, 2),
            burst_events_range=(1, 1),
            burst_gaps=IntervalSpec(alpha=2.0, t_min_hours=0.01, t_max_hours=1.0),
            seed=5,
        )
        log = gen_activity_log(spec)
        seqs = enrollment_sequences(build_enrollment_table(log))
        counts = count_transitions(seqs)
        assert counts.total == 10_000
        m = category_transition_matrix(counts, log.catalog)
        assert m.prob("A", "A") == pytest.approx(0.7, abs=0.02)
        assert m.prob("A", "B") == pytest.approx(0.3, abs=0.02)
        assert m.prob("B", "B") == pytest.approx(0.7, abs=0.02)
