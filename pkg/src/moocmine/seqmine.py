"""Per-learner enrollment sequences and first-order transition statistics.

A learner's enrollments, ordered by first-activity time, form a
sequence; adjacent pairs in that sequence are transitions.  Counts
normalise into row-stochastic matrices at course level or, after
mapping endpoints through the catalog, at category level.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

import numpy as np

from .eventlog import CourseMeta, EnrollmentTable

__all__ = [
    "EnrollmentSequence",
    "TransitionCounts",
    "TransitionMatrix",
    "enrollment_sequences",
    "count_transitions",
    "course_transition_matrix",
    "category_transition_matrix",
]


@dataclass(frozen=True)
class EnrollmentSequence:
    """One learner's courses in enrollment order (no repeats)."""

    learner_id: str
    courses: tuple[str, ...]
    times: tuple[int, ...]


@dataclass(frozen=True)
class TransitionCounts:
    """Counts of observed course-to-course transitions."""

    counts: Mapping[tuple[str, str], int]

    def out_totals(self) -> dict[str, int]:
        totals: dict[str, int] = {}
        for (src, _), n in self.counts.items():
            totals[src] = totals.get(src, 0) + n
        return totals

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic transition matrix with per-row defined flags.

    Rows without any outgoing transition are flagged undefined and left
    as zeros rather than smoothed.
    """

    level: str
    labels: tuple[str, ...]
    probs: np.ndarray
    row_defined: np.ndarray
    row_totals: np.ndarray

    def row(self, label: str) -> np.ndarray:
        return self.probs[self.labels.index(label)]

    def prob(self, src: str, dst: str) -> float:
        return float(self.probs[self.labels.index(src), self.labels.index(dst)])

    def is_defined(self, label: str) -> bool:
        return bool(self.row_defined[self.labels.index(label)])


def enrollment_sequences(table: EnrollmentTable) -> list[EnrollmentSequence]:
    """Per-learner course sequences ordered by (first_activity_time, course_id).

    Ties in first-activity time break by course id, so the output is
    deterministic.  Learners with a single course yield length-1
    sequences.  Sequences are returned in learner-id order.
    """
    sequences = []
    for learner_code, course_codes, times in table.iter_learner_groups():
        # Course codes follow sorted course-id order, so (time, code)
        # ordering implements the (time, course_id) tie rule.
        order = np.lexsort((course_codes, times))
        sequences.append(
            EnrollmentSequence(
                learner_id=table.learners[learner_code],
                courses=tuple(table.courses[int(c)] for c in course_codes[order]),
                times=tuple(int(t) for t in times[order]),
            )
        )
    return sequences


def count_transitions(
    sequences: list[EnrollmentSequence], adjacent_only: bool = True
) -> TransitionCounts:
    """Count transitions over all sequences.

    By default a length-L sequence contributes its L-1 adjacent pairs.
    ``adjacent_only=False`` counts every ordered pair within a sequence
    instead, for sensitivity analysis.
    """
    counts: Counter = Counter()
    for seq in sequences:
        if adjacent_only:
            for src, dst in zip(seq.courses, seq.courses[1:]):
                counts[(src, dst)] += 1
        else:
            for src, dst in combinations(seq.courses, 2):
                counts[(src, dst)] += 1
    return TransitionCounts(counts=dict(counts))


def _normalise(
    level: str, labels: tuple[str, ...], counts: Mapping[tuple[str, str], int]
) -> TransitionMatrix:
    index = {c: i for i, c in enumerate(labels)}
    n = len(labels)
    raw = np.zeros((n, n), dtype=np.float64)
    for (src, dst), c in counts.items():
        raw[index[src], index[dst]] += c
    totals = raw.sum(axis=1)
    defined = totals > 0
    probs = np.zeros_like(raw)
    probs[defined] = raw[defined] / totals[defined, None]
    return TransitionMatrix(
        level=level,
        labels=labels,
        probs=probs,
        row_defined=defined,
        row_totals=totals.astype(np.int64),
    )


def course_transition_matrix(counts: TransitionCounts) -> TransitionMatrix:
    """Normalise counts into per-course successor probabilities."""
    labels = tuple(sorted({c for pair in counts.counts for c in pair}))
    return _normalise("course", labels, counts.counts)


def category_transition_matrix(
    counts: TransitionCounts, catalog: Mapping[str, CourseMeta]
) -> TransitionMatrix:
    """Aggregate course transitions to category level and normalise.

    Transitions whose source or destination course lacks a category are
    dropped; rows are fractions of the category-attributed transitions
    leaving each category.
    """
    cat_of = {cid: meta.category for cid, meta in catalog.items() if meta.category}
    agg: Counter = Counter()
    for (src, dst), c in counts.counts.items():
        cs, cd = cat_of.get(src), cat_of.get(dst)
        if cs is not None and cd is not None:
            agg[(cs, cd)] += c
    labels = tuple(sorted(set(cat_of.values())))
    return _normalise("category", labels, agg)
