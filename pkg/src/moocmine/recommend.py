"""Next-course recommenders and their ranking-metric evaluation.

FrePaPop ranks the courses most frequently enrolled right after the
learner's latest course, by training-set transition probability, and
pads any shortfall with the globally most popular courses.  Popularity
and Random serve as baselines.  Evaluation follows the standard
next-items protocol on a temporal split: per learner, ground truth is
the set of courses first enrolled in the test window that the learner
had not touched in training, and F1@K, MAP@K, MRR@K and NDCG@K are
macro-averaged over evaluated learners.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .eventlog import EventLog, build_enrollment_table, filter_window
from .seqmine import count_transitions, course_transition_matrix, enrollment_sequences

__all__ = [
    "SplitSpec",
    "FrePaPopModel",
    "RecommendationRequest",
    "RankingMetrics",
    "temporal_split",
    "fit_frepapop",
    "recommend_frepapop",
    "recommend_popularity",
    "recommend_random",
    "ranking_scores",
    "evaluate",
]


@dataclass(frozen=True)
class SplitSpec:
    """Temporal split: train window [start, split), test window [split, end)."""

    start: int
    split_time: int
    end: int

    def __post_init__(self) -> None:
        if not self.start < self.split_time < self.end:
            raise ValueError("need start < split_time < end")


@dataclass(frozen=True)
class RecommendationRequest:
    """A learner's training-window history plus the list length K."""

    learner_id: str
    history: tuple[str, ...]
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class FrePaPopModel:
    """Per-course ranked successors plus a global popularity ranking.

    ``successors[c]`` lists (course, probability) sorted by descending
    probability with course-id tie-breaks; ``popularity`` is every
    training course sorted by descending enrollment count with
    course-id tie-breaks.
    """

    successors: Mapping[str, tuple[tuple[str, float], ...]]
    popularity: tuple[str, ...]
    enrollment_counts: Mapping[str, int]

    @property
    def catalog(self) -> tuple[str, ...]:
        return self.popularity


def temporal_split(log: EventLog, spec: SplitSpec) -> tuple[EventLog, EventLog]:
    """Partition a log into train/test halves at the split time."""
    train = filter_window(log, spec.start, spec.split_time)
    test = filter_window(log, spec.split_time, spec.end)
    return train, test


def fit_frepapop(train: EventLog) -> FrePaPopModel:
    """Build the successor tables and popularity ranking from a training log."""
    if len(train) == 0:
        raise ValueError("training log is empty")
    table = build_enrollment_table(train)
    seqs = enrollment_sequences(table)
    matrix = course_transition_matrix(count_transitions(seqs))

    successors: dict[str, tuple[tuple[str, float], ...]] = {}
    for i, src in enumerate(matrix.labels):
        if not matrix.row_defined[i]:
            continue
        row = matrix.probs[i]
        entries = [
            (matrix.labels[j], float(row[j])) for j in np.nonzero(row > 0)[0]
        ]
        entries.sort(key=lambda e: (-e[1], e[0]))
        successors[src] = tuple(entries)

    counts = table.course_counts()
    ranked = sorted(
        ((table.courses[c], int(n)) for c, n in enumerate(counts) if n > 0),
        key=lambda e: (-e[1], e[0]),
    )
    return FrePaPopModel(
        successors=successors,
        popularity=tuple(c for c, _ in ranked),
        enrollment_counts={c: n for c, n in ranked},
    )


def _popularity_backfill(
    model: FrePaPopModel, exclude: set[str], k_needed: int, out: list[str]
) -> None:
    for c in model.popularity:
        if len(out) >= k_needed:
            return
        if c not in exclude:
            out.append(c)
            exclude.add(c)


def recommend_frepapop(model: FrePaPopModel, req: RecommendationRequest) -> list[str]:
    """Top-K successors of the learner's latest course, popularity-padded.

    Courses already in the learner's history are never recommended; a
    learner with no history gets the pure popularity top-K.  At most
    min(K, unseen catalog) items are returned, without duplicates.
    """
    exclude = set(req.history)
    out: list[str] = []
    if req.history:
        for course, _ in model.successors.get(req.history[-1], ()):
            if len(out) >= req.k:
                break
            if course not in exclude:
                out.append(course)
                exclude.add(course)
    _popularity_backfill(model, exclude, req.k, out)
    return out


def recommend_popularity(model: FrePaPopModel, req: RecommendationRequest) -> list[str]:
    """Top-K most-enrolled training courses the learner has not seen."""
    out: list[str] = []
    _popularity_backfill(model, set(req.history), req.k, out)
    return out


def _learner_rng(seed: int, learner_id: str) -> np.random.Generator:
    return np.random.default_rng((seed, zlib.crc32(learner_id.encode("utf-8"))))


def recommend_random(
    catalog: Sequence[str], req: RecommendationRequest, seed: int
) -> list[str]:
    """Uniform sample without replacement from the unseen catalog.

    Deterministic for a given (seed, learner_id): the learner id is
    folded into the random stream so results do not depend on request
    order.
    """
    seen = set(req.history)
    pool = sorted(c for c in set(catalog) if c not in seen)
    if not pool:
        return []
    rng = _learner_rng(seed, req.learner_id)
    take = min(req.k, len(pool))
    idx = rng.choice(len(pool), size=take, replace=False)
    return [pool[i] for i in idx]


def ranking_scores(
    recs: Sequence[str], truth: set[str], k: int
) -> tuple[float, float, float, float]:
    """(f1, ap, rr, ndcg) at K for one recommendation list.

    Precision counts hits over K, recall over |truth|; AP divides the
    precision-at-hit sum by min(|truth|, K); RR is the reciprocal rank
    of the first hit; NDCG uses binary gains with the ideal DCG
    truncated at min(|truth|, K).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth:
        raise ValueError("truth must be non-empty")
    top = list(recs[:k])
    hits = 0
    ap_sum = 0.0
    rr = 0.0
    dcg = 0.0
    for rank, course in enumerate(top, start=1):
        if course in truth:
            hits += 1
            ap_sum += hits / rank
            if rr == 0.0:
                rr = 1.0 / rank
            dcg += 1.0 / np.log2(rank + 1)
    precision = hits / k
    recall = hits / len(truth)
    f1 = 0.0 if hits == 0 else 2 * precision * recall / (precision + recall)
    denom = min(len(truth), k)
    ap = ap_sum / denom
    idcg = sum(1.0 / np.log2(r + 1) for r in range(1, denom + 1))
    ndcg = dcg / idcg if idcg > 0 else 0.0
    return f1, ap, rr, ndcg


@dataclass(frozen=True)
class RankingMetrics:
    """Macro-averaged top-K ranking metrics over evaluated learners."""

    f1_at_k: float
    map_at_k: float
    mrr_at_k: float
    ndcg_at_k: float
    users_evaluated: int
    users_skipped_no_history: int
    users_skipped_no_truth: int
    users_skipped_filtered: int
    empty: bool


def evaluate(
    recommender: Callable[[RecommendationRequest], Sequence[str]],
    train: EventLog,
    test: EventLog,
    k: int,
    min_train_events: int = 0,
) -> RankingMetrics:
    """Evaluate a recommender callable on a temporal split.

    Learners are processed in id order and skipped (with a count) when
    they have no training history, fall below ``min_train_events``
    training activities, or have no ground-truth courses in the test
    window.  Identical inputs give bit-identical metric values.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    train_table = build_enrollment_table(train)
    test_table = build_enrollment_table(test)

    histories = {s.learner_id: s.courses for s in enrollment_sequences(train_table)}
    event_counts: dict[str, int] = {}
    if min_train_events > 0:
        codes, counts = np.unique(train.learner_codes, return_counts=True)
        event_counts = {train.learners[c]: int(n) for c, n in zip(codes, counts)}

    truth_by_learner: dict[str, set[str]] = {}
    for seq_learner, course_codes, _ in test_table.iter_learner_groups():
        learner_id = test_table.learners[seq_learner]
        truth_by_learner[learner_id] = {
            test_table.courses[int(c)] for c in course_codes
        }

    sums = np.zeros(4, dtype=np.float64)
    evaluated = 0
    skipped_no_history = 0
    skipped_no_truth = 0
    skipped_filtered = 0
    for learner_id in sorted(truth_by_learner):
        history = histories.get(learner_id)
        if not history:
            skipped_no_history += 1
            continue
        if min_train_events > 0 and event_counts.get(learner_id, 0) < min_train_events:
            skipped_filtered += 1
            continue
        truth = truth_by_learner[learner_id] - set(history)
        if not truth:
            skipped_no_truth += 1
            continue
        recs = recommender(RecommendationRequest(learner_id=learner_id, history=history, k=k))
        sums += np.asarray(ranking_scores(recs, truth, k))
        evaluated += 1

    if evaluated == 0:
        return RankingMetrics(
            0.0, 0.0, 0.0, 0.0,
            users_evaluated=0,
            users_skipped_no_history=skipped_no_history,
            users_skipped_no_truth=skipped_no_truth,
            users_skipped_filtered=skipped_filtered,
            empty=True,
        )
    f1, ap, rr, ndcg = (sums / evaluated).tolist()
    return RankingMetrics(
        f1_at_k=f1,
        map_at_k=ap,
        mrr_at_k=rr,
        ndcg_at_k=ndcg,
        users_evaluated=evaluated,
        users_skipped_no_history=skipped_no_history,
        users_skipped_no_truth=skipped_no_truth,
        users_skipped_filtered=skipped_filtered,
        empty=False,
    )
