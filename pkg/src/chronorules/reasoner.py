"""Link-prediction scoring: rule application, graph scorers, and score fusion.

For a query (e_s, r, ?, t) every high-confidence rule with head r is walked
forward from e_s through the evidence KG; each distinct grounding contributes
its rule's confidence plus an exponential recency bonus on the latest body
timestamp. A pluggable graph scorer supplies a second per-entity score and the
two sides are fused as a convex combination after zero-fill and (by default)
per-query min-max normalization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import ParseError
from .quality import DEFAULT_FANOUT_CAP, Grounding, ScoredRule, _chain_search
from .tkg import TemporalKG


@dataclass(frozen=True)
class Query:
    """Object-slot link-prediction query (subject, relation, ?, t)."""

    subject: int
    relation: int
    t: int

    def key(self) -> tuple[int, int, int]:
        return (self.subject, self.relation, self.t)


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.9
    gamma: float = 0.01
    lam: float = 0.1
    normalization: str = "minmax"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.normalization not in ("minmax", "none"):
            raise ValueError(f"normalization must be 'minmax' or 'none', got {self.normalization}")


@dataclass(frozen=True)
class CandidateScore:
    entity: int
    rule_score: float
    graph_score: float
    fused: float


class GraphScorer(Protocol):
    scorer_id: str

    def score(self, query: Query) -> dict[int, float]: ...


def select_high_confidence(rules: Sequence[ScoredRule], gamma: float) -> list[ScoredRule]:
    """Rules with confidence strictly greater than ``gamma``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    return [r for r in rules if r.confidence > gamma]


def apply_rule(
    rule: ScoredRule,
    query: Query,
    kg: TemporalKG,
    cap: int = DEFAULT_FANOUT_CAP,
) -> tuple[list[Grounding], bool]:
    """Candidate entities reachable from the query subject via the rule body.

    Body timestamps must be non-decreasing and all strictly earlier than the
    query time. One grounding per distinct (candidate, timestamps) tuple.
    """
    if rule.rule.head != query.relation:
        raise ValueError("rule head does not match the query relation")
    chains, truncated = _chain_search(
        kg, rule.rule.body, start=query.subject, t_max=query.t, cap=cap
    )
    seen: set[tuple] = set()
    out: list[Grounding] = []
    for nodes, times in chains:
        key = (nodes[-1], times)
        if key in seen:
            continue
        seen.add(key)
        out.append(Grounding(entities=nodes, times=times))
    return out, truncated


def rule_score(
    query: Query,
    rules: Sequence[ScoredRule],
    kg: TemporalKG,
    config: FusionConfig,
    cap: int = DEFAULT_FANOUT_CAP,
) -> dict[int, float]:
    """Aggregate per-candidate rule scores over all matching rules.

    Every distinct grounding adds confidence + exp(-lam * (t_query - t_o)),
    t_o being the grounding's latest body timestamp (always strictly past).
    """
    scores: dict[int, float] = {}
    for scored in rules:
        if scored.rule.head != query.relation:
            continue
        groundings, _truncated = apply_rule(scored, query, kg, cap=cap)
        for g in groundings:
            bonus = math.exp(-config.lam * (query.t - g.latest_body_time))
            entity = g.entities[-1]
            scores[entity] = scores.get(entity, 0.0) + scored.confidence + bonus
    return scores


class RecencyFrequencyScorer:
    """Self-contained graph baseline: each past (s, r, e, t) edge votes for e
    with exponentially decaying recency weight."""

    def __init__(self, kg: TemporalKG, lam: float = 0.1):
        if lam <= 0:
            raise ValueError(f"lam must be > 0, got {lam}")
        self.kg = kg
        self.lam = lam
        self.scorer_id = "recency-frequency"

    def score(self, query: Query) -> dict[int, float]:
        rows = self.kg.edges_from(query.subject, query.relation)
        cut = int(np.searchsorted(rows[:, 3], query.t, side="left"))
        scores: dict[int, float] = {}
        for row in rows[:cut]:
            entity = int(row[2])
            scores[entity] = scores.get(entity, 0.0) + math.exp(
                -self.lam * (query.t - int(row[3]))
            )
        return scores


class NullGraphScorer:
    """Disables the graph side: every query maps to no candidates."""

    scorer_id = "none"

    def score(self, query: Query) -> dict[int, float]:
        return {}


class ImportedGraphScorer:
    """Serves precomputed per-query score tables (e.g. from an external
    embedding model); unknown queries yield an empty mapping."""

    def __init__(self, table: dict[tuple[int, int, int], dict[int, float]], source: str = ""):
        self._table = table
        self.scorer_id = f"imported:{source}" if source else "imported"

    def score(self, query: Query) -> dict[int, float]:
        return dict(self._table.get(query.key(), {}))


def import_graph_scores(path: str | Path) -> ImportedGraphScorer:
    """Load a JSONL graph-score file: {subject, relation, t, scores:{id: v}}."""
    table: dict[tuple[int, int, int], dict[int, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                key = (int(record["subject"]), int(record["relation"]), int(record["t"]))
                scores = {int(e): float(v) for e, v in record["scores"].items()}
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"bad graph-score record: {exc}", str(path), lineno) from exc
            table[key] = scores
    return ImportedGraphScorer(table, source=Path(path).name)


def export_graph_scores(
    table: dict[tuple[int, int, int], dict[int, float]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (s, r, t), scores in sorted(table.items()):
            record = {
                "subject": s,
                "relation": r,
                "t": t,
                "scores": {str(e): scores[e] for e in sorted(scores)},
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _normalize(values: list[float], mode: str) -> list[float]:
    if mode == "none":
        return values
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def fuse(
    rule_scores: dict[int, float],
    graph_scores: dict[int, float],
    config: FusionConfig,
) -> list[CandidateScore]:
    """Combine the two score maps over their candidate union.

    Candidates missing on one side are zero-filled there; each side is then
    normalized per ``config.normalization`` and combined as
    alpha * rule + (1 - alpha) * graph. Sorted by descending fused score,
    ties by ascending entity id.
    """
    universe = sorted(set(rule_scores) | set(graph_scores))
    if not universe:
        return []
    rule_raw = [rule_scores.get(e, 0.0) for e in universe]
    graph_raw = [graph_scores.get(e, 0.0) for e in universe]
    rule_norm = _normalize(rule_raw, config.normalization)
    graph_norm = _normalize(graph_raw, config.normalization)
    fused = [
        config.alpha * r + (1.0 - config.alpha) * g for r, g in zip(rule_norm, graph_norm)
    ]
    out = [
        CandidateScore(entity=e, rule_score=rule_raw[i], graph_score=graph_raw[i], fused=fused[i])
        for i, e in enumerate(universe)
    ]
    out.sort(key=lambda c: (-c.fused, c.entity))
    return out
