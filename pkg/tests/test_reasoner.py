import math

import numpy as np
import pytest

from chronorules.errors import ParseError
from chronorules.quality import ScoredRule
from chronorules.reasoner import (
    FusionConfig,
    Query,
    RecencyFrequencyScorer,
    apply_rule,
    export_graph_scores,
    fuse,
    import_graph_scores,
    rule_score,
    select_high_confidence,
)
from chronorules.walks import ExtractedRule

from conftest import kg_from_ids, make_kg
from oracles import augment, brute_apply, random_kg_quads


def scored(head, body, confidence=0.5):
    rule = ExtractedRule(head=head, body=body)
    return ScoredRule(rule=rule, body_support=10, rule_support=int(10 * confidence), confidence=confidence)


class TestSelectHighConfidence:
    def test_strict_inequality(self):
        rules = [scored(0, (1,), c) for c in (0.005, 0.01, 0.5)]
        kept = select_high_confidence(rules, 0.01)
        assert [r.confidence for r in kept] == [0.5]

    def test_gamma_zero_keeps_positive(self):
        rules = [scored(0, (1,), c) for c in (0.0, 0.2)]
        assert [r.confidence for r in select_high_confidence(rules, 0.0)] == [0.2]

    def test_gamma_one_empty(self):
        rules = [scored(0, (1,), 1.0)]
        assert select_high_confidence(rules, 1.0) == []

    def test_invalid_gamma(self):
        with pytest.raises(ValueError):
            select_high_confidence([], 2.0)


class TestApplyRule:
    def test_worked_example_filters_future_evidence(self):
        kg, entities, relations = make_kg(
            [("a", "r1", "b", 1), ("a", "r1", "c", 6), ("x", "r2", "y", 0)]
        )
        rule = scored(relations.id_of("r2"), (relations.id_of("r1"),))
        query = Query(entities.id_of("a"), relations.id_of("r2"), 5)
        groundings, truncated = apply_rule(rule, query, kg)
        assert [(g.entities[-1], g.latest_body_time) for g in groundings] == [
            (entities.id_of("b"), 1)
        ]
        assert not truncated

    def test_length_two_chain_endpoint(self):
        quads = [
            ("a", "r1", "b", 1),
            ("b", "r2", "c", 2),
            ("c", "r1", "d", 3),
            ("x", "rh", "y", 0),
        ]
        kg, entities, relations = make_kg(quads)
        rule = scored(relations.id_of("rh"), (relations.id_of("r1"), relations.id_of("r2")))
        query = Query(entities.id_of("a"), relations.id_of("rh"), 10)
        groundings, _ = apply_rule(rule, query, kg)
        assert [g.entities[-1] for g in groundings] == [entities.id_of("c")]

    def test_head_mismatch_rejected(self):
        kg, entities, relations = make_kg([("a", "r1", "b", 1)])
        rule = scored(relations.id_of("r1"), (relations.id_of("r1"),))
        with pytest.raises(ValueError):
            apply_rule(rule, Query(0, relations.inverse_of(0), 5), kg)

    def test_oracle_equivalence_random(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            n_ent, n_rel = 8, 3
            quads = random_kg_quads(rng, n_ent, n_rel, n_edges=40, t_max=10)
            kg, *_ = kg_from_ids(quads, n_ent, n_rel)
            aug = augment(quads, n_rel)
            for _ in range(5):
                body = tuple(int(rng.integers(2 * n_rel)) for _ in range(int(rng.integers(1, 4))))
                head = int(rng.integers(2 * n_rel))
                subject = int(rng.integers(n_ent))
                t_query = int(rng.integers(1, 12))
                rule = scored(head, body)
                groundings, truncated = apply_rule(
                    rule, Query(subject, head, t_query), kg, cap=100000
                )
                assert not truncated
                got = {(g.entities[-1], g.times) for g in groundings}
                assert got == brute_apply(aug, body, subject, t_query)


class TestRuleScore:
    def test_worked_value(self):
        kg, entities, relations = make_kg([("a", "r1", "b", 7), ("x", "r2", "y", 0)])
        rule = scored(relations.id_of("r2"), (relations.id_of("r1"),), confidence=0.5)
        query = Query(entities.id_of("a"), relations.id_of("r2"), 10)
        scores = rule_score(query, [rule], kg, FusionConfig(lam=0.1))
        assert scores[entities.id_of("b")] == pytest.approx(0.5 + math.exp(-0.3), abs=1e-6)
        assert scores[entities.id_of("b")] == pytest.approx(1.240818, abs=1e-6)

    def test_no_matching_rule_empty(self):
        kg, entities, relations = make_kg([("a", "r1", "b", 7)])
        query = Query(entities.id_of("a"), relations.id_of("r1"), 10)
        assert rule_score(query, [], kg, FusionConfig()) == {}

    def test_more_recent_grounding_scores_higher(self):
        kg, entities, relations = make_kg(
            [("a", "r1", "b", 9), ("a", "r1", "c", 7), ("x", "r2", "y", 0)]
        )
        rule = scored(relations.id_of("r2"), (relations.id_of("r1"),), confidence=0.0)
        query = Query(entities.id_of("a"), relations.id_of("r2"), 10)
        scores = rule_score(query, [rule], kg, FusionConfig(lam=0.1))
        assert scores[entities.id_of("b")] > scores[entities.id_of("c")]

    def test_grounding_multiplicity_sums(self):
        kg, entities, relations = make_kg(
            [("a", "r1", "b", 9), ("a", "r1", "b", 7), ("x", "r2", "y", 0)]
        )
        rule = scored(relations.id_of("r2"), (relations.id_of("r1"),), confidence=0.3)
        query = Query(entities.id_of("a"), relations.id_of("r2"), 10)
        scores = rule_score(query, [rule], kg, FusionConfig(lam=0.1))
        expected = (0.3 + math.exp(-0.1)) + (0.3 + math.exp(-0.3))
        assert scores[entities.id_of("b")] == pytest.approx(expected)


class TestRecencyFrequencyScorer:
    def test_no_past_edges(self):
        kg, entities, relations = make_kg([("a", "r", "b", 9)])
        scorer = RecencyFrequencyScorer(kg, lam=0.1)
        assert scorer.score(Query(entities.id_of("a"), relations.id_of("r"), 9)) == {}

    def test_single_edge_value(self):
        kg, entities, relations = make_kg([("a", "r", "b", 9)])
        scorer = RecencyFrequencyScorer(kg, lam=0.1)
        scores = scorer.score(Query(entities.id_of("a"), relations.id_of("r"), 10))
        assert scores[entities.id_of("b")] == pytest.approx(math.exp(-0.1), abs=1e-6)
        assert scores[entities.id_of("b")] == pytest.approx(0.904837, abs=1e-6)

    def test_repeat_edges_accumulate(self):
        kg, entities, relations = make_kg([("a", "r", "b", 9), ("a", "r", "b", 5)])
        scorer = RecencyFrequencyScorer(kg, lam=0.1)
        score = scorer.score(Query(entities.id_of("a"), relations.id_of("r"), 10))[
            entities.id_of("b")
        ]
        assert score > math.exp(-0.1) and score > math.exp(-0.5)
        assert score == pytest.approx(math.exp(-0.1) + math.exp(-0.5))


class TestImportedScores:
    def test_round_trip_bit_exact(self, tmp_path):
        table = {
            (0, 1, 5): {3: 0.123456789012345, 7: -2.5},
            (2, 0, 9): {1: 1e-17},
        }
        path = tmp_path / "scores.jsonl"
        export_graph_scores(table, path)
        scorer = import_graph_scores(path)
        assert scorer.score(Query(0, 1, 5)) == table[(0, 1, 5)]
        assert scorer.score(Query(2, 0, 9)) == table[(2, 0, 9)]
        export_graph_scores(
            {(0, 1, 5): scorer.score(Query(0, 1, 5)), (2, 0, 9): scorer.score(Query(2, 0, 9))},
            tmp_path / "again.jsonl",
        )
        assert path.read_bytes() == (tmp_path / "again.jsonl").read_bytes()

    def test_unknown_query_empty(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        export_graph_scores({(0, 0, 0): {1: 1.0}}, path)
        assert import_graph_scores(path).score(Query(9, 9, 9)) == {}

    def test_malformed_record_names_line(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        path.write_text('{"subject": 0, "relation": 1, "t": 2, "scores": {"x": 1.0}}\n')
        with pytest.raises(ParseError, match=":1:"):
            import_graph_scores(path)


class TestFuse:
    def test_worked_value_without_normalization(self):
        config = FusionConfig(alpha=0.9, normalization="none")
        ranked = fuse({5: 0.8}, {5: 0.5}, config)
        assert ranked[0].fused == pytest.approx(0.77, abs=1e-12)
        assert ranked[0].fused == 0.9 * 0.8 + (1.0 - 0.9) * 0.5

    def test_zero_fill_graph_only_candidate(self):
        config = FusionConfig(alpha=0.9, normalization="none")
        ranked = fuse({}, {4: 2.0}, config)
        assert ranked[0].entity == 4
        assert ranked[0].rule_score == 0.0
        assert ranked[0].fused == pytest.approx(0.1 * 2.0)

    def _random_tables(self, rng):
        universe = rng.choice(50, size=int(rng.integers(1, 12)), replace=False)
        rule = {int(e): float(rng.uniform(0, 5)) for e in universe if rng.random() < 0.8}
        graph = {int(e): float(rng.uniform(-2, 2)) for e in universe if rng.random() < 0.8}
        if not rule and not graph:
            rule = {int(universe[0]): 1.0}
        return rule, graph

    @pytest.mark.parametrize("normalization", ["minmax", "none"])
    def test_endpoint_identities(self, normalization):
        rng = np.random.default_rng(23)
        for _ in range(300):
            rule, graph = self._random_tables(rng)
            universe = sorted(set(rule) | set(graph))
            rule_only = sorted(universe, key=lambda e: (-rule.get(e, 0.0), e))
            graph_only = sorted(universe, key=lambda e: (-graph.get(e, 0.0), e))
            at_one = [c.entity for c in fuse(rule, graph, FusionConfig(alpha=1.0, normalization=normalization))]
            at_zero = [c.entity for c in fuse(rule, graph, FusionConfig(alpha=0.0, normalization=normalization))]
            assert at_one == rule_only
            assert at_zero == graph_only

    def test_constant_side_never_perturbs_order(self):
        config = FusionConfig(alpha=0.5, normalization="minmax")
        rule = {1: 3.0, 2: 2.0, 3: 1.0}
        graph = {1: 7.7, 2: 7.7, 3: 7.7}
        ranked = [c.entity for c in fuse(rule, graph, config)]
        assert ranked == [1, 2, 3]

    def test_ties_break_by_ascending_entity(self):
        config = FusionConfig(alpha=0.5, normalization="none")
        ranked = [c.entity for c in fuse({9: 1.0, 2: 1.0}, {}, config)]
        assert ranked == [2, 9]

    def test_empty_inputs(self):
        assert fuse({}, {}, FusionConfig()) == []

    def test_deterministic(self):
        rng = np.random.default_rng(31)
        rule, graph = self._random_tables(rng)
        config = FusionConfig()
        assert fuse(rule, graph, config) == fuse(rule, graph, config)
