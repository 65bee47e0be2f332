"""Pairwise course co-enrollment statistics and the thresholded graph.

For courses i and j with learner counts n_i, n_j, joint count n_both
and platform total L, the association measures are

    jaccard = n_both / (n_i + n_j - n_both)
    pmi     = ln( (n_both * L) / (n_i * n_j) )
    npmi    = pmi / -ln(n_both / L)

Natural logarithms throughout.  Degenerate points follow the standard
limits: disjoint pairs get pmi = -inf and npmi = -1; pairs that always
co-occur get npmi = 1.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator, Mapping

import numpy as np

from .eventlog import CourseMeta, EnrollmentTable

__all__ = [
    "PairStats",
    "GraphNode",
    "CoEnrollGraph",
    "CategoryMatrix",
    "pair_stats",
    "all_pairs",
    "build_graph",
    "category_jaccard",
    "export_graph",
]


@dataclass(frozen=True)
class PairStats:
    """Co-enrollment statistics for one unordered course pair."""

    course_i: str
    course_j: str
    n_i: int
    n_j: int
    n_both: int
    n_either: int
    jaccard: float
    pmi: float
    npmi: float


@dataclass(frozen=True)
class GraphNode:
    course_id: str
    enrollment: int
    category: str | None = None


@dataclass(frozen=True)
class CoEnrollGraph:
    """Undirected co-enrollment graph; every edge meets the npmi threshold."""

    nodes: tuple[GraphNode, ...]
    edges: tuple[tuple[str, str, float], ...]
    npmi_threshold: float


@dataclass(frozen=True)
class CategoryMatrix:
    """Square learner-overlap matrix over an ordered category list."""

    categories: tuple[str, ...]
    values: np.ndarray

    def value(self, cat_i: str, cat_j: str) -> float:
        i = self.categories.index(cat_i)
        j = self.categories.index(cat_j)
        return float(self.values[i, j])


def _stats_from_counts(
    course_i: str, course_j: str, n_i: int, n_j: int, n_both: int, total: int
) -> PairStats:
    n_either = n_i + n_j - n_both
    jaccard = n_both / n_either if n_either > 0 else 0.0
    if n_both == 0:
        pmi, npmi = -math.inf, -1.0
    elif n_both == n_i == n_j:
        # Perfect co-occurrence: the normalised value is exactly 1, and
        # the plain pmi reduces to -ln p(c_i, c_j).
        pmi = math.log(total / n_both) if n_both < total else 0.0
        npmi = 1.0
    else:
        # Integer products keep the independence case exact: when
        # n_both * total == n_i * n_j the ratio is exactly 1.0.
        pmi = math.log((n_both * total) / (n_i * n_j))
        npmi = pmi / -math.log(n_both / total)
        npmi = min(1.0, max(-1.0, npmi))
    return PairStats(
        course_i=course_i,
        course_j=course_j,
        n_i=n_i,
        n_j=n_j,
        n_both=n_both,
        n_either=n_either,
        jaccard=jaccard,
        pmi=pmi,
        npmi=npmi,
    )


def pair_stats(table: EnrollmentTable, course_i: str, course_j: str) -> PairStats:
    """Full co-enrollment statistics for one course pair.

    Raises KeyError for a course with no enrollment in the table and
    ValueError when the two courses are the same.
    """
    if course_i == course_j:
        raise ValueError("course_i and course_j must differ")
    set_i = table.learners_of(course_i)
    set_j = table.learners_of(course_j)
    if not set_i:
        raise KeyError(course_i)
    if not set_j:
        raise KeyError(course_j)
    return _stats_from_counts(
        course_i,
        course_j,
        len(set_i),
        len(set_j),
        len(set_i & set_j),
        table.total_learners,
    )


def all_pairs(
    table: EnrollmentTable, min_learners: int = 1, skip_disjoint: bool = False
) -> Iterator[PairStats]:
    """Stream statistics for every unordered pair of eligible courses.

    A course is eligible when its learner count is at least
    ``min_learners``.  Joint counts are accumulated from each learner's
    course set, which is linear in the sum of squared enrollment-list
    lengths rather than quadratic in the course count.  Pairs are
    emitted in (course_i, course_j) id order; disjoint pairs (npmi -1)
    can be skipped with ``skip_disjoint``.
    """
    if min_learners < 1:
        raise ValueError("min_learners must be >= 1")
    counts = table.course_counts()
    eligible_codes = np.nonzero(counts >= min_learners)[0]
    eligible = set(int(c) for c in eligible_codes)
    total = table.total_learners

    joint: Counter = Counter()
    for _, course_codes, _ in table.iter_learner_groups():
        cs = sorted(int(c) for c in course_codes if int(c) in eligible)
        for a, b in combinations(cs, 2):
            joint[(a, b)] += 1

    # Course codes follow sorted course-id order, so code order is id order.
    for a, b in combinations(sorted(eligible), 2):
        n_both = joint.get((a, b), 0)
        if skip_disjoint and n_both == 0:
            continue
        yield _stats_from_counts(
            table.courses[a],
            table.courses[b],
            int(counts[a]),
            int(counts[b]),
            n_both,
            total,
        )


def build_graph(
    pairs: Iterable[PairStats],
    npmi_threshold: float,
    catalog: Mapping[str, CourseMeta] | None = None,
    include_isolated: bool = True,
) -> CoEnrollGraph:
    """Keep exactly the pairs with npmi >= threshold as weighted edges.

    Nodes cover every course seen in the pair stream, or only edge
    endpoints when ``include_isolated`` is off.  Output ordering is
    deterministic regardless of input pair order.
    """
    if not -1.0 <= npmi_threshold <= 1.0:
        raise ValueError("npmi_threshold must be in [-1, 1]")
    catalog = catalog or {}
    enrollment: dict[str, int] = {}
    edges = []
    for p in pairs:
        enrollment[p.course_i] = p.n_i
        enrollment[p.course_j] = p.n_j
        if p.npmi >= npmi_threshold:
            a, b = sorted((p.course_i, p.course_j))
            edges.append((a, b, p.npmi))
    edges.sort()
    if include_isolated:
        node_ids = sorted(enrollment)
    else:
        node_ids = sorted({c for a, b, _ in edges for c in (a, b)})
    nodes = tuple(
        GraphNode(
            course_id=c,
            enrollment=enrollment[c],
            category=catalog[c].category if c in catalog else None,
        )
        for c in node_ids
    )
    return CoEnrollGraph(nodes=nodes, edges=tuple(edges), npmi_threshold=npmi_threshold)


def category_jaccard(
    table: EnrollmentTable, catalog: Mapping[str, CourseMeta]
) -> CategoryMatrix:
    """Learner-overlap matrix between course categories.

    Only courses tagged with a category participate.  The off-diagonal
    entry (i, j) is |learners in both categories| / |learners in either|.
    The diagonal entry (i, i) is the share of category-i learners who
    enrolled in at least two distinct category-i courses.
    """
    cat_of: dict[str, str] = {
        cid: meta.category for cid, meta in catalog.items() if meta.category
    }
    categories = tuple(sorted(set(cat_of.values())))
    if not categories:
        return CategoryMatrix(categories=(), values=np.zeros((0, 0)))
    cat_index = {c: i for i, c in enumerate(categories)}

    # Per learner: how many distinct courses they hold in each category.
    learners_in: list[set[int]] = [set() for _ in categories]
    learners_multi: list[set[int]] = [set() for _ in categories]
    for learner_code, course_codes, _ in table.iter_learner_groups():
        per_cat: Counter = Counter()
        for cc in course_codes:
            cat = cat_of.get(table.courses[int(cc)])
            if cat is not None:
                per_cat[cat_index[cat]] += 1
        for ci, n in per_cat.items():
            learners_in[ci].add(learner_code)
            if n >= 2:
                learners_multi[ci].add(learner_code)

    n = len(categories)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        li = learners_in[i]
        values[i, i] = len(learners_multi[i]) / len(li) if li else 0.0
        for j in range(i + 1, n):
            lj = learners_in[j]
            either = len(li | lj)
            v = len(li & lj) / either if either else 0.0
            values[i, j] = values[j, i] = v
    return CategoryMatrix(categories=categories, values=values)


def export_graph(graph: CoEnrollGraph, fmt: str) -> bytes:
    """Serialise a graph as a sorted edge list or a DOT document."""
    if fmt == "edge_list":
        lines = ["course_i\tcourse_j\tnpmi"]
        for a, b, w in graph.edges:
            lines.append(f"{a}\t{b}\t{w:.17g}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    if fmt == "dot":
        lines = ["graph coenrollment {"]
        for node in graph.nodes:
            attrs = [f"enrollment={node.enrollment}"]
            if node.category is not None:
                attrs.append(f'category="{node.category}"')
            lines.append(f'  "{node.course_id}" [{", ".join(attrs)}];')
        for a, b, w in graph.edges:
            lines.append(f'  "{a}" -- "{b}" [weight={w:.17g}];')
        lines.append("}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")
