import pytest

from chronorules.errors import DataError
from chronorules.evaluation import (
    EvalReport,
    HorizonSpec,
    evaluate,
    filtered_rank,
    horizon_eval,
    known_facts_index,
    queries_from_quads,
    segment_bounds,
    segment_eval,
)
from chronorules.quality import ScoredRule
from chronorules.reasoner import FusionConfig, Query, fuse, rule_score
from chronorules.tkg import Catalog, DatasetSplit, Quadruple, RelationCatalog, build_kg
from chronorules.walks import ExtractedRule


class TestFilteredRank:
    def test_known_true_removed(self):
        # ranking [b, c, d], truth d, c also true -> rank 2
        assert filtered_rank(["b", "c", "d"], "d", {"c"}, 10) == 2

    def test_truth_first_unaffected(self):
        assert filtered_rank(["d", "b", "c"], "d", {"b", "c"}, 10) == 1

    def test_absent_truth_convention(self):
        assert filtered_rank(["a", "b"], "zz", set(), 7) == 8

    def test_filtering_never_worsens(self):
        ranked = list(range(20))
        for truth in ranked:
            raw = filtered_rank(ranked, truth, set(), 30)
            filt = filtered_rank(ranked, truth, {1, 3, 5}, 30)
            assert filt <= raw


class TestEvalReport:
    def test_worked_ranks(self):
        report = EvalReport.from_ranks([1, 2, 4], universe_size=50)
        assert report.mrr == pytest.approx(0.583333, abs=1e-6)
        assert report.hits[1] == pytest.approx(1 / 3)
        assert report.hits[3] == pytest.approx(2 / 3)
        assert report.hits[10] == 1.0
        assert report.missed == 0

    def test_all_first(self):
        report = EvalReport.from_ranks([1, 1, 1], universe_size=5)
        assert report.mrr == 1.0
        assert all(v == 1.0 for v in report.hits.values())

    def test_missed_counted(self):
        report = EvalReport.from_ranks([1, 51], universe_size=50)
        assert report.missed == 1

    def test_empty_flagged_not_zero(self):
        report = EvalReport.from_ranks([], universe_size=50)
        assert report.query_count == 0
        assert report.mrr is None

    def test_invariants_hold_on_random_rank_lists(self):
        import numpy as np

        rng = np.random.default_rng(3)
        for _ in range(50):
            ranks = rng.integers(1, 30, size=int(rng.integers(1, 40))).tolist()
            report = EvalReport.from_ranks(ranks, universe_size=40)
            assert report.hits[1] <= report.hits[3] <= report.hits[10]
            assert report.hits[1] <= report.mrr <= 1.0


class TestSegments:
    def test_equal_span_partition(self):
        assert segment_bounds(10, 19, 2) == [(10, 14), (15, 19)]

    def test_single_segment_equals_evaluate(self):
        pairs = [(Query(0, 0, t), t % 3) for t in range(10, 20)]
        ranker = lambda q: [q.t % 3, 99]
        known = {}
        overall, segments = segment_eval(pairs, 1, ranker, known, universe_size=100)
        direct = evaluate(pairs, ranker, known, universe_size=100)
        assert len(segments) == 1
        assert segments[0].report == direct == overall

    def test_weighted_average_identity(self):
        import numpy as np

        rng = np.random.default_rng(9)
        pairs = [(Query(0, 0, int(rng.integers(0, 30))), int(rng.integers(3))) for _ in range(60)]
        ranker = lambda q: [0, 1, 2]
        overall, segments = segment_eval(pairs, 4, ranker, {}, universe_size=50)
        total = sum(s.report.query_count for s in segments)
        assert total == overall.query_count
        weighted = sum(
            s.report.mrr * s.report.query_count
            for s in segments
            if s.report.query_count
        ) / total
        assert weighted == pytest.approx(overall.mrr, abs=1e-9)


def _horizon_fixture(extra_historical=()):
    """Evidence r1(a,b,40); future queries need r2(a,?,t)."""
    entities = Catalog(["a", "b", "c"])
    relations = RelationCatalog(["r1", "r2"])
    relations.finalize_inverses()
    historical = [Quadruple(0, 0, 1, 10)] + list(extra_historical)
    current = [Quadruple(0, 0, 1, 40)]
    future = [Quadruple(0, 1, 1, 45), Quadruple(0, 1, 2, 50)]
    split = DatasetSplit(historical, current, future)

    rule = ScoredRule(
        rule=ExtractedRule(head=1, body=(0,)), body_support=1, rule_support=1, confidence=1.0
    )
    config = FusionConfig(alpha=1.0)

    def make_ranker(evidence_quads):
        kg = build_kg(list(evidence_quads), entities, relations, add_inverses=True)

        def ranker(query):
            scores = rule_score(query, [rule] if query.relation == 1 else [], kg, config)
            return [c.entity for c in fuse(scores, {}, config)]

        return ranker

    known = known_facts_index([historical, current, future], relations)
    return split, relations, make_ranker, known, len(entities)


class TestHorizon:
    def test_full_span_single_window_matches_evaluate(self):
        split, relations, make_ranker, known, universe = _horizon_fixture()
        spec = HorizonSpec(delta_t=10, k=1)
        reports = horizon_eval(spec, make_ranker, split, relations, known, universe)
        assert len(reports) == 1
        ranker = make_ranker(split.historical + split.current)
        pairs = queries_from_quads(split.future, relations)
        direct = evaluate(pairs, ranker, known, universe)
        assert reports[0].report == direct

    def test_windows_partition_queries(self):
        split, relations, make_ranker, known, universe = _horizon_fixture()
        spec = HorizonSpec(delta_t=5, k=2)
        reports = horizon_eval(spec, make_ranker, split, relations, known, universe)
        assert [r.report.query_count for r in reports] == [2, 2]

    def test_empty_window_flagged(self):
        split, relations, make_ranker, known, universe = _horizon_fixture()
        spec = HorizonSpec(delta_t=2, k=2)  # windows (40,42], (42,44] hold no queries
        reports = horizon_eval(spec, make_ranker, split, relations, known, universe)
        assert all(r.empty for r in reports)
        assert all(r.report.mrr is None for r in reports)

    def test_leakage_canary(self):
        # the injected edge r1(a,c,44) is the only possible evidence for query
        # (a, r2, ?, 50) to surface candidate c
        injected = Quadruple(0, 0, 2, 44)
        split, relations, make_ranker, known, universe = _horizon_fixture(
            extra_historical=[injected]
        )
        spec = HorizonSpec(delta_t=10, k=1)

        seen_evidence = []

        def spying_make_ranker(evidence):
            seen_evidence.append(list(evidence))
            return make_ranker(evidence)

        horizon_eval(spec, spying_make_ranker, split, relations, known, universe)
        # capped evidence excludes the injected future-dated edge
        assert injected not in seen_evidence[0]

        capped_ranker = make_ranker(seen_evidence[0])
        uncapped_ranker = make_ranker(seen_evidence[0] + [injected])
        query = Query(0, 1, 50)
        assert 2 not in capped_ranker(query)
        assert 2 in uncapped_ranker(query)

    def test_requires_evidence(self):
        split, relations, make_ranker, known, universe = _horizon_fixture()
        empty = DatasetSplit([], [], split.future)
        with pytest.raises(DataError):
            horizon_eval(HorizonSpec(1, 1), make_ranker, empty, relations, known, universe)


class TestQueriesFromQuads:
    def test_both_directions(self):
        relations = RelationCatalog(["r"])
        relations.finalize_inverses()
        pairs = queries_from_quads([Quadruple(3, 0, 5, 9)], relations)
        assert (Query(3, 0, 9), 5) in pairs
        assert (Query(5, relations.inverse_of(0), 9), 3) in pairs

    def test_known_index_covers_inverse_direction(self):
        relations = RelationCatalog(["r"])
        relations.finalize_inverses()
        index = known_facts_index([[Quadruple(3, 0, 5, 9)]], relations)
        assert index[(3, 0, 9)] == {5}
        assert index[(5, relations.inverse_of(0), 9)] == {3}
