"""Chain-rule extraction via constrained, recency-weighted temporal random walks.

A walk anchors on a uniformly sampled edge (e_s, r, e_o, t_l) of the head
relation, then wanders backwards in time from e_o until it closes at e_s
(cyclic walk). The first step is strictly earlier than t_l; later steps are
non-increasing in time (strictly decreasing when ``strict_within_body`` is
set). At each step the candidate edges are weighted by an exponential decay
in their distance from the previous edge's timestamp, so temporally closer
evidence is preferred. Reversing and inverting the walked edges yields a
body chain X -> Z1 -> ... -> Y whose timestamps are non-decreasing and all
strictly earlier than the anchor.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .tkg import Quadruple, RelationCatalog, TemporalKG

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WalkConfig:
    """Sampling knobs; ``lam`` is the decay rate of the transition weights."""

    lam: float = 0.1
    max_body_len: int = 3
    walks_per_relation: int = 200
    seed: int = 0
    strict_within_body: bool = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.max_body_len < 1:
            raise ValueError(f"max_body_len must be >= 1, got {self.max_body_len}")
        if self.walks_per_relation < 0:
            raise ValueError("walks_per_relation must be >= 0")


@dataclass(frozen=True)
class TemporalPath:
    """A closed temporal path: anchor edge plus a body chain from its subject
    to its object.

    Body edges are stored as sampled (native orientation); an edge whose
    direction opposes the chain is encoded with its inverse relation when
    lifted. Body timestamps are non-decreasing and all precede the anchor's.
    """

    anchor: Quadruple
    body: tuple[Quadruple, ...]

    def chain_nodes(self) -> tuple[int, ...]:
        """Entities along the chain, anchor subject first; forward orientation
        is preferred when a self-loop makes both readings possible."""
        nodes = [self.anchor.subject]
        for edge in self.body:
            cur = nodes[-1]
            if edge.subject == cur:
                nodes.append(edge.object)
            elif edge.object == cur:
                nodes.append(edge.subject)
            else:
                raise DataError(f"body edge {edge} does not touch chain node {cur}")
        return tuple(nodes)

    def oriented_body(self, relations: RelationCatalog) -> list[Quadruple]:
        """Body edges re-oriented along the chain (inverse ids where the
        stored edge points backwards)."""
        out = []
        cur = self.anchor.subject
        for edge in self.body:
            if edge.subject == cur:
                out.append(edge)
                cur = edge.object
            elif edge.object == cur:
                out.append(
                    Quadruple(edge.object, relations.inverse_of(edge.relation), edge.subject, edge.t)
                )
                cur = edge.subject
            else:
                raise DataError(f"body edge {edge} does not touch chain node {cur}")
        return out

    def validate(self) -> None:
        if not self.body:
            raise DataError("temporal path has an empty body")
        nodes = self.chain_nodes()
        if nodes[-1] != self.anchor.object:
            raise DataError("path does not close at the anchor object")
        times = [e.t for e in self.body]
        if any(b < a for a, b in zip(times, times[1:])):
            raise DataError(f"body timestamps not non-decreasing: {times}")
        if times[-1] >= self.anchor.t:
            raise DataError(
                f"latest body time {times[-1]} not earlier than anchor time {self.anchor.t}"
            )


@dataclass(frozen=True)
class ExtractedRule:
    """Chain rule: head relation implied by an ordered body relation list."""

    head: int
    body: tuple[int, ...]
    support: int = 1

    def __post_init__(self):
        if len(self.body) < 1:
            raise ValueError("a rule body needs at least one relation")

    def key(self) -> tuple[int, tuple[int, ...]]:
        return (self.head, self.body)


def transition_distribution(candidate_edges, reference_time: int, lam: float) -> np.ndarray:
    """Recency-weighted transition probabilities over candidate edges.

    Weights are exp(-lam * (reference_time - t)) normalized over the
    candidates, so an edge closer in time to ``reference_time`` always gets
    strictly more mass than an older one. Computed with a shifted exponent
    for numerical stability.
    """
    arr = np.asarray(candidate_edges)
    times = arr[:, 3].astype(np.float64) if arr.ndim == 2 else arr.astype(np.float64)
    if times.size == 0:
        raise ValueError("transition_distribution requires at least one candidate edge")
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    deltas = reference_time - times
    if np.any(deltas < 0):
        raise ValueError("candidate edge later than the reference time")
    shifted = deltas - deltas.min()
    weights = np.exp(-lam * shifted)
    return weights / weights.sum()


def _try_walk(
    kg: TemporalKG,
    anchors: np.ndarray,
    body_len: int,
    config: WalkConfig,
    rng: np.random.Generator,
) -> TemporalPath | None:
    anchor_row = anchors[int(rng.integers(len(anchors)))]
    a_sub, a_rel, a_obj, a_t = (int(v) for v in anchor_row)
    cur, cur_t = a_obj, a_t
    walked: list[Quadruple] = []
    for step in range(1, body_len + 1):
        strict = step == 1 or config.strict_within_body
        cands = kg.neighbors_before(cur, cur_t, strict=strict)
        if step > 1:
            # immediately re-traversing the previous edge via its inverse
            # would make the walk degenerate
            prev = walked[-1]
            inv_prev = kg.relations.inverse_of(prev.relation)
            mask = ~(
                (cands[:, 1] == inv_prev)
                & (cands[:, 2] == prev.subject)
                & (cands[:, 3] == prev.t)
            )
            cands = cands[mask]
        if step == body_len:
            cands = cands[cands[:, 2] == a_sub]
        if len(cands) == 0:
            return None
        probs = transition_distribution(cands, cur_t, config.lam)
        row = cands[int(rng.choice(len(cands), p=probs))]
        edge = Quadruple(int(row[0]), int(row[1]), int(row[2]), int(row[3]))
        walked.append(edge)
        cur, cur_t = edge.object, edge.t
    path = TemporalPath(
        anchor=Quadruple(a_sub, a_rel, a_obj, a_t), body=tuple(reversed(walked))
    )
    path.validate()
    return path


def sample_closed_paths(
    kg: TemporalKG,
    head_relation: int,
    config: WalkConfig,
    rng: np.random.Generator | None = None,
) -> list[TemporalPath]:
    """Sample closed temporal paths anchored on ``head_relation``.

    Attempts ``walks_per_relation`` walks for every target body length in
    1..max_body_len; dead-ended or non-closing walks are discarded. When
    ``rng`` is omitted, each body length draws from an independent child
    generator seeded by (seed, relation, length), so extending the walk
    budget only appends to the sampled stream.
    """
    kg._check_relation(head_relation)
    if not kg.inverses_added:
        raise DataError("cyclic walk sampling requires an inverse-augmented KG")
    anchors = kg.edges_for_relation(head_relation)
    if len(anchors) == 0:
        logger.warning(
            "relation %s has no edges; no paths sampled",
            kg.relations.name_of(head_relation),
        )
        return []
    paths: list[TemporalPath] = []
    for body_len in range(1, config.max_body_len + 1):
        length_rng = (
            rng
            if rng is not None
            else np.random.default_rng([config.seed, head_relation, body_len])
        )
        for _ in range(config.walks_per_relation):
            path = _try_walk(kg, anchors, body_len, config, length_rng)
            if path is not None:
                paths.append(path)
    return paths


def lift_to_rule(path: TemporalPath, relations: RelationCatalog) -> ExtractedRule:
    """Abstract a path into a rule by replacing entities with chain variables.

    Body edges traversed against the chain direction are encoded with the
    inverse relation id so the body always reads X -> ... -> Y.
    """
    cur = path.anchor.subject
    body_rels: list[int] = []
    for edge in path.body:
        if edge.subject == cur:
            body_rels.append(edge.relation)
            cur = edge.object
        elif edge.object == cur:
            body_rels.append(relations.inverse_of(edge.relation))
            cur = edge.subject
        else:
            raise DataError(f"body edge {edge} does not touch chain node {cur}")
    if cur != path.anchor.object:
        raise DataError("path does not close at the anchor object")
    return ExtractedRule(head=path.anchor.relation, body=tuple(body_rels), support=1)


def _grounding_key(path: TemporalPath) -> tuple:
    return (path.chain_nodes(), tuple(e.t for e in path.body), path.anchor.t)


def extract_rules(
    kg: TemporalKG,
    relations: Sequence[int] | None,
    config: WalkConfig,
    jobs: int = 1,
) -> list[ExtractedRule]:
    """Sample paths for every head relation and lift them into a deduplicated
    rule set; support counts distinct sampled groundings.

    Results are independent of ``jobs`` because each relation owns its own
    seeded generator and merging is done in sorted relation order.
    """
    heads = sorted(relations) if relations is not None else list(range(kg.n_relations))
    for head in heads:
        kg._check_relation(head)

    def sample_one(head: int) -> list[TemporalPath]:
        return sample_closed_paths(kg, head, config)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_head = list(pool.map(sample_one, heads))
    else:
        per_head = [sample_one(h) for h in heads]

    groundings: dict[tuple[int, tuple[int, ...]], set] = {}
    for paths in per_head:
        for path in paths:
            rule = lift_to_rule(path, kg.relations)
            groundings.setdefault(rule.key(), set()).add(_grounding_key(path))
    rules = [
        ExtractedRule(head=head, body=body, support=len(seen))
        for (head, body), seen in groundings.items()
    ]
    rules.sort(key=lambda r: (r.head, r.body))
    return rules
