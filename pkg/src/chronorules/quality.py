"""Rule grounding and confidence scoring against a temporal KG.

Confidence is the fraction of body-satisfying (X, Y) entity pairs that also
satisfy the whole rule, i.e. have a head edge strictly later than a witnessing
body chain. Groundings are enumerated with a frontier-capped, most-recent-first
search so hub entities cannot blow up the search; a truncation flag reports
when the cap was hit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tkg import TemporalKG
from .walks import ExtractedRule

DEFAULT_FANOUT_CAP = 1000


@dataclass(frozen=True)
class Grounding:
    """One variable substitution witnessing a rule body.

    ``entities`` binds (X, Z1, ..., Y); ``times`` are the matched body
    timestamps, non-decreasing, so the last entry is the latest body time.
    """

    entities: tuple[int, ...]
    times: tuple[int, ...]

    @property
    def latest_body_time(self) -> int:
        return self.times[-1]


@dataclass
class GroundingResult:
    groundings: list[Grounding]
    truncated: bool


@dataclass(frozen=True)
class ScoredRule:
    """A rule with its support counts and confidence on some KG."""

    rule: ExtractedRule
    body_support: int
    rule_support: int
    confidence: float
    truncated: bool = False

    def __post_init__(self):
        if self.rule_support > self.body_support:
            raise ValueError("rule_support cannot exceed body_support")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def key(self):
        return self.rule.key()


def _chain_search(
    kg: TemporalKG,
    body: Sequence[int],
    start: int | None,
    t_max: int | None,
    cap: int,
) -> tuple[list[tuple[tuple[int, ...], tuple[int, ...]]], bool]:
    """Enumerate body chains as (entities, times) tuples.

    ``start`` fixes X when given; ``t_max`` additionally requires every body
    timestamp to be strictly earlier. Each expansion level keeps at most
    ``cap`` partial chains, filled most-recent-first.
    """
    for rel in body:
        kg._check_relation(rel)
    if start is not None:
        kg._check_entity(start)

    truncated = False
    first_edges = (
        kg.edges_for_relation(body[0]) if start is None else kg.edges_from(start, body[0])
    )
    if t_max is not None:
        cut = int(np.searchsorted(first_edges[:, 3], t_max, side="left"))
        first_edges = first_edges[:cut]

    states: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    for row in first_edges[::-1]:
        if len(states) >= cap:
            truncated = True
            break
        states.append(((int(row[0]), int(row[2])), (int(row[3]),)))

    for rel in body[1:]:
        new_states: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        full = False
        for nodes, times in states:
            rows = kg.edges_from(nodes[-1], rel)
            lo = int(np.searchsorted(rows[:, 3], times[-1], side="left"))
            hi = len(rows)
            if t_max is not None:
                hi = int(np.searchsorted(rows[:, 3], t_max, side="left"))
            for i in range(hi - 1, lo - 1, -1):
                if len(new_states) >= cap:
                    truncated = True
                    full = True
                    break
                row = rows[i]
                new_states.append((nodes + (int(row[2]),), times + (int(row[3]),)))
            if full:
                break
        states = new_states
    return states, truncated


def ground_body(
    rule: ExtractedRule,
    kg: TemporalKG,
    cap: int = DEFAULT_FANOUT_CAP,
) -> GroundingResult:
    """All body groundings of ``rule``, one per distinct (X, Y, timestamps)."""
    chains, truncated = _chain_search(kg, rule.body, start=None, t_max=None, cap=cap)
    seen: set[tuple] = set()
    out: list[Grounding] = []
    for nodes, times in chains:
        key = (nodes[0], nodes[-1], times)
        if key in seen:
            continue
        seen.add(key)
        out.append(Grounding(entities=nodes, times=times))
    return GroundingResult(groundings=out, truncated=truncated)


def _head_satisfied(kg: TemporalKG, head: int, x: int, y: int, t_os: Sequence[int], horizon: int | None) -> bool:
    rows = kg.edges_from(x, head)
    times = rows[rows[:, 2] == y][:, 3]
    if times.size == 0:
        return False
    if horizon is None:
        return bool(times[-1] > min(t_os))
    for t_o in t_os:
        lo = int(np.searchsorted(times, t_o, side="right"))
        hi = int(np.searchsorted(times, t_o + horizon, side="right"))
        if hi > lo:
            return True
    return False


def confidence(
    rule: ExtractedRule,
    kg: TemporalKG,
    horizon: int | None = None,
    cap: int = DEFAULT_FANOUT_CAP,
) -> ScoredRule:
    """Score a rule: body_support counts distinct (X, Y) pairs with a body
    grounding, rule_support those whose head edge follows some grounding.

    ``horizon`` optionally bounds the head window to (t_o, t_o + horizon].
    """
    result = ground_body(rule, kg, cap=cap)
    pairs: dict[tuple[int, int], list[int]] = {}
    for g in result.groundings:
        pairs.setdefault((g.entities[0], g.entities[-1]), []).append(g.latest_body_time)
    rule_support = sum(
        1
        for (x, y), t_os in pairs.items()
        if _head_satisfied(kg, rule.head, x, y, t_os, horizon)
    )
    body_support = len(pairs)
    return ScoredRule(
        rule=rule,
        body_support=body_support,
        rule_support=rule_support,
        confidence=rule_support / body_support if body_support else 0.0,
        truncated=result.truncated,
    )


def score_rules(
    rules: Sequence[ExtractedRule],
    kg: TemporalKG,
    horizon: int | None = None,
    cap: int = DEFAULT_FANOUT_CAP,
    jobs: int = 1,
) -> list[ScoredRule]:
    """Score many rules, preserving input order regardless of ``jobs``."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda r: confidence(r, kg, horizon=horizon, cap=cap), rules))
    return [confidence(r, kg, horizon=horizon, cap=cap) for r in rules]


def partition_by_threshold(
    rules: Sequence[ScoredRule], theta: float
) -> tuple[list[ScoredRule], list[ScoredRule]]:
    """Split into (low, high) at confidence < theta, preserving order."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    low = [r for r in rules if r.confidence < theta]
    high = [r for r in rules if r.confidence >= theta]
    return low, high
