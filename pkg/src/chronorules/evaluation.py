"""Time-aware filtered ranking metrics, segmented and long-horizon evaluation.

Ranks are filtered: all other entities known to be true for the same
(subject, relation, t) key are removed from the ranking before the truth's
position is read off. A truth missing from the candidate list is ranked at
catalog size + 1 and counted separately as missed. Both query directions are
evaluated, the subject side via inverse relations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import DataError
from .reasoner import Query
from .tkg import Quadruple, RelationCatalog

HIT_LEVELS = (1, 3, 10)


@dataclass
class EvalReport:
    mrr: float | None
    hits: dict[int, float | None]
    query_count: int
    missed: int

    @classmethod
    def from_ranks(cls, ranks: Sequence[int], universe_size: int) -> "EvalReport":
        if not ranks:
            return cls(mrr=None, hits={n: None for n in HIT_LEVELS}, query_count=0, missed=0)
        mrr = sum(1.0 / r for r in ranks) / len(ranks)
        hits = {n: sum(1 for r in ranks if r <= n) / len(ranks) for n in HIT_LEVELS}
        missed = sum(1 for r in ranks if r > universe_size)
        report = cls(mrr=mrr, hits=hits, query_count=len(ranks), missed=missed)
        report.check_invariants()
        return report

    def check_invariants(self) -> None:
        if self.query_count == 0:
            return
        levels = sorted(self.hits)
        for a, b in zip(levels, levels[1:]):
            if self.hits[a] > self.hits[b] + 1e-12:
                raise DataError(f"Hit@{a} > Hit@{b}; metric computation broken")
        if self.mrr is None or self.mrr + 1e-12 < self.hits[levels[0]] or self.mrr > 1 + 1e-12:
            raise DataError("MRR outside [Hit@1, 1]; metric computation broken")

    def to_dict(self, decimals: int = 4) -> dict:
        def rnd(value):
            return None if value is None else round(value, decimals)

        return {
            "mrr": rnd(self.mrr),
            **{f"hit@{n}": rnd(self.hits.get(n)) for n in sorted(self.hits)},
            "queries": self.query_count,
            "missed": self.missed,
        }


@dataclass(frozen=True)
class HorizonSpec:
    """Evaluate the k windows of length delta_t beyond the current split."""

    delta_t: int
    k: int

    def __post_init__(self):
        if self.delta_t < 1:
            raise ValueError("delta_t must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def known_facts_index(
    quad_lists: Sequence[Sequence[Quadruple]], relations: RelationCatalog
) -> dict[tuple[int, int, int], set[int]]:
    """(subject, relation, t) -> all true objects, over both directions."""
    index: dict[tuple[int, int, int], set[int]] = {}
    for quads in quad_lists:
        for q in quads:
            index.setdefault((q.subject, q.relation, q.t), set()).add(q.object)
            inv = relations.inverse_of(q.relation)
            index.setdefault((q.object, inv, q.t), set()).add(q.subject)
    return index


def filtered_rank(
    ranked: Sequence[int],
    truth: int,
    known_true: set[int],
    universe_size: int,
) -> int:
    """1-based rank of ``truth`` after dropping other known-true entities.

    A truth absent from ``ranked`` gets rank universe_size + 1.
    """
    rank = 1
    for entity in ranked:
        if entity == truth:
            return rank
        if entity not in known_true:
            rank += 1
    return universe_size + 1


def queries_from_quads(
    quads: Sequence[Quadruple], relations: RelationCatalog
) -> list[tuple[Query, int]]:
    """Both-direction (query, truth) pairs for a list of test facts."""
    pairs = []
    for q in quads:
        pairs.append((Query(q.subject, q.relation, q.t), q.object))
        pairs.append((Query(q.object, relations.inverse_of(q.relation), q.t), q.subject))
    return pairs


def evaluate(
    query_truth_pairs: Sequence[tuple[Query, int]],
    ranker: Callable[[Query], Sequence[int]],
    known_index: dict[tuple[int, int, int], set[int]],
    universe_size: int,
) -> EvalReport:
    """Filtered MRR / Hit@N over (query, truth) pairs; ``ranker`` returns the
    ordered candidate entities for a query."""
    ranks = []
    for query, truth in query_truth_pairs:
        known = known_index.get(query.key(), set())
        ranks.append(filtered_rank(ranker(query), truth, known - {truth}, universe_size))
    return EvalReport.from_ranks(ranks, universe_size)


@dataclass
class SegmentReport:
    t_lo: int
    t_hi: int
    report: EvalReport


def segment_bounds(t_min: int, t_max: int, n_segments: int) -> list[tuple[int, int]]:
    """Partition [t_min, t_max] into n contiguous spans of near-equal width."""
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    span = t_max - t_min + 1
    edges = [t_min + (i * span) // n_segments for i in range(n_segments + 1)]
    return [(edges[i], edges[i + 1] - 1) for i in range(n_segments)]


def segment_eval(
    query_truth_pairs: Sequence[tuple[Query, int]],
    n_segments: int,
    ranker: Callable[[Query], Sequence[int]],
    known_index: dict[tuple[int, int, int], set[int]],
    universe_size: int,
) -> tuple[EvalReport, list[SegmentReport]]:
    """Chronologically segmented evaluation plus the pooled overall report."""
    if not query_truth_pairs:
        return EvalReport.from_ranks([], universe_size), []
    times = [q.t for q, _ in query_truth_pairs]
    bounds = segment_bounds(min(times), max(times), n_segments)
    segments = []
    for t_lo, t_hi in bounds:
        subset = [(q, truth) for q, truth in query_truth_pairs if t_lo <= q.t <= t_hi]
        segments.append(
            SegmentReport(t_lo, t_hi, evaluate(subset, ranker, known_index, universe_size))
        )
    overall = evaluate(query_truth_pairs, ranker, known_index, universe_size)
    return overall, segments


@dataclass
class HorizonReport:
    k: int
    t_lo: int
    t_hi: int
    report: EvalReport

    @property
    def empty(self) -> bool:
        return self.report.query_count == 0


def horizon_eval(
    spec: HorizonSpec,
    make_ranker: Callable[[list[Quadruple]], Callable[[Query], Sequence[int]]],
    splits,
    relations: RelationCatalog,
    known_index: dict[tuple[int, int, int], set[int]],
    universe_size: int,
) -> list[HorizonReport]:
    """Evaluate each of the k horizon windows beyond the current split's end.

    The evidence handed to ``make_ranker`` is capped at the split boundary:
    no fact later than the current split's last timestamp can leak in,
    regardless of what the provided splits contain.
    """
    evidence_pool = list(splits.historical) + list(splits.current)
    if not evidence_pool:
        raise DataError("horizon evaluation needs historical/current evidence")
    boundary = max(q.t for q in splits.current) if splits.current else max(
        q.t for q in evidence_pool
    )
    evidence = [q for q in evidence_pool if q.t <= boundary]
    ranker = make_ranker(evidence)
    reports = []
    for k in range(1, spec.k + 1):
        t_lo = boundary + (k - 1) * spec.delta_t + 1
        t_hi = boundary + k * spec.delta_t
        window = [q for q in splits.future if t_lo <= q.t <= t_hi]
        pairs = queries_from_quads(window, relations)
        reports.append(
            HorizonReport(k, t_lo, t_hi, evaluate(pairs, ranker, known_index, universe_size))
        )
    return reports
