"""Pipeline stages shared by the CLI.

Each stage reads its inputs from disk, writes its artifacts under the
configured output directory, and records a manifest (config hash, input and
output hashes, wall time). Running `pipeline` is exactly the stage functions
run back to back, so stage-by-stage and end-to-end executions produce the
same artifacts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import PipelineConfig
from .errors import DataError, DependencyError
from .evaluation import (
    EvalReport,
    HorizonReport,
    SegmentReport,
    filtered_rank,
    known_facts_index,
    segment_bounds,
)
from .llm import LiveBackend, ReplayBackend, ScriptedBackend, Transcript, default_scripted_responder
from .orchestrator import OrchestratorConfig, dynamic_adapt, generate_rules
from .quality import ScoredRule, score_rules
from .reasoner import (
    FusionConfig,
    NullGraphScorer,
    Query,
    RecencyFrequencyScorer,
    fuse,
    import_graph_scores,
    rule_score,
    select_high_confidence,
)
from .reporting import build_report_document, render_report_figures, write_report_json, write_report_tsv
from .rules_io import read_rules_jsonl, write_rules_jsonl
from .selector import CachedEmbedder, RelationSelector, SelectorConfig, build_provider
from .tkg import build_kg, load_splits
from .walks import ExtractedRule, WalkConfig, extract_rules

logger = logging.getLogger(__name__)

STAGE_ORDER = (
    "ingest",
    "sample-rules",
    "generate-rules",
    "adapt-rules",
    "reason",
    "evaluate",
)


def stage_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StageResult:
    stage: str
    artifacts: dict[str, str]

    def final_line(self) -> str:
        return json.dumps({"stage": self.stage, "artifacts": self.artifacts}, sort_keys=True)


class Workspace:
    """Stage file layout plus lazily loaded shared inputs."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._dataset = None

    # artifact paths -------------------------------------------------------------

    def path(self, name: str) -> Path:
        return self.out_dir / name

    @property
    def sampled_rules_path(self) -> Path:
        return self.path("rules_sampled.jsonl")

    @property
    def generated_rules_path(self) -> Path:
        return self.path("rules_generated.jsonl")

    @property
    def adapted_rules_path(self) -> Path:
        return self.path("rules_adapted.jsonl")

    @property
    def predictions_path(self) -> Path:
        return self.path("predictions.jsonl")

    def transcript_path(self, stage: str) -> Path:
        base = self.config.backend.transcript
        if base is None:
            return self.path(f"transcript.{stage}.jsonl")
        base_path = Path(base)
        return base_path.with_name(f"{base_path.stem}.{stage}{base_path.suffix or '.jsonl'}")

    # shared inputs ----------------------------------------------------------------

    def dataset(self):
        if self._dataset is None:
            data = self.config.data
            for name in ("historical", "current", "future"):
                if not Path(getattr(data, name)).exists():
                    raise DataError(f"dataset file not found: {getattr(data, name)}")
            split, entities, relations = load_splits(
                data.historical,
                data.current,
                data.future,
                entity2id=data.entity2id,
                relation2id=data.relation2id,
                time_divisor=data.time_divisor,
            )
            # the whole pipeline works on the inverse-augmented relation space
            relations.finalize_inverses()
            self._dataset = (split, entities, relations)
        return self._dataset

    def kg_for(self, which: str):
        split, entities, relations = self.dataset()
        quads = {
            "historical": split.historical,
            "current": split.current,
            "historical+current": split.historical + split.current,
        }[which]
        return build_kg(quads, entities, relations, add_inverses=True)

    def require(self, path: Path, producer: str) -> Path:
        if not path.exists():
            raise DependencyError(
                f"missing input artifact {path}; run the `{producer}` command first"
            )
        return path

    def walk_config(self, stage: str) -> WalkConfig:
        return WalkConfig(
            lam=self.config.lam,
            max_body_len=self.config.max_body_len,
            walks_per_relation=self.config.walks_per_relation,
            seed=stage_seed(self.config.seed, stage),
            strict_within_body=self.config.strict_within_body,
        )

    def selector(self) -> RelationSelector:
        _split, _entities, relations = self.dataset()
        emb = self.config.embedding
        provider = build_provider(
            emb.provider,
            endpoint=emb.endpoint,
            model=emb.model,
            api_key=os.environ.get(emb.api_key_env) if emb.provider == "external" else None,
            cache_path=emb.cache,
        )
        if not isinstance(provider, CachedEmbedder):
            # memoize in-process: ranking embeds every relation once per head
            provider = CachedEmbedder(provider)
        k = min(self.config.top_k, len(relations))
        return RelationSelector(relations, provider, SelectorConfig(k=k))

    def backend(self, stage: str):
        cfg = self.config.backend
        if cfg.kind == "scripted":
            return ScriptedBackend(default_scripted_responder)
        if cfg.kind == "replay":
            path = self.transcript_path(stage)
            if not path.exists():
                raise DependencyError(
                    f"replay transcript {path} not found; record it by running "
                    f"`{stage}` with a scripted or live backend first"
                )
            return ReplayBackend(Transcript.load(path))
        return LiveBackend(
            endpoint=cfg.endpoint,
            model=cfg.model,
            api_key=os.environ.get(cfg.api_key_env),
            timeout=cfg.timeout,
            max_retries=cfg.retries,
        )

    def orchestrator_config(self) -> OrchestratorConfig:
        return OrchestratorConfig(
            model=self.config.backend.model,
            max_rules_per_prompt=self.config.max_rules_per_prompt,
            restrict_to_candidates=self.config.restrict_to_candidates,
        )

    # manifests ----------------------------------------------------------------

    def write_manifest(
        self, stage: str, inputs: list[Path], outputs: list[Path], started: float
    ) -> Path:
        manifest = {
            "stage": stage,
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "stage_seed": stage_seed(self.config.seed, stage),
            "inputs": {str(p): _sha256(p) for p in inputs if p.exists()},
            "outputs": {str(p): _sha256(p) for p in outputs if p.exists()},
            "wall_time_s": round(time.perf_counter() - started, 3),
        }
        path = self.path(f"manifest_{stage.replace('-', '_')}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


# -- stages -------------------------------------------------------------------------


def run_ingest(ws: Workspace) -> StageResult:
    started = time.perf_counter()
    split, entities, relations = ws.dataset()
    kg = ws.kg_for("historical+current")
    stats = kg.stats()
    stats["historical"] = len(split.historical)
    stats["current"] = len(split.current)
    stats["future"] = len(split.future)
    stats_path = ws.path("kg_stats.json")
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ent_path, rel_path = ws.path("entity2id.txt"), ws.path("relation2id.txt")
    entities.write_id_file(ent_path)
    relations.write_id_file(rel_path)
    inputs = [Path(ws.config.data.historical), Path(ws.config.data.current), Path(ws.config.data.future)]
    ws.write_manifest("ingest", inputs, [stats_path, ent_path, rel_path], started)
    return StageResult(
        "ingest",
        {"kg_stats": str(stats_path), "entity2id": str(ent_path), "relation2id": str(rel_path)},
    )


def run_sample_rules(ws: Workspace) -> StageResult:
    started = time.perf_counter()
    kg = ws.kg_for("historical")
    rules = extract_rules(kg, None, ws.walk_config("sample-rules"), jobs=ws.config.jobs)
    write_rules_jsonl(rules, kg.relations, ws.sampled_rules_path)
    inputs = [Path(ws.config.data.historical)]
    ws.write_manifest("sample-rules", inputs, [ws.sampled_rules_path], started)
    return StageResult("sample-rules", {"rules_sampled": str(ws.sampled_rules_path)})


def run_generate_rules(ws: Workspace) -> StageResult:
    started = time.perf_counter()
    kg = ws.kg_for("historical")
    sampled_path = ws.require(ws.sampled_rules_path, "sample-rules")
    sampled = [r for r in read_rules_jsonl(sampled_path, kg.relations) if isinstance(r, ExtractedRule)]
    transcript = Transcript()
    backend = ws.backend("generate-rules")
    s_g, rejected = generate_rules(
        backend,
        heads=list(range(kg.n_relations)),
        sampled=sampled,
        kg=kg,
        selector=ws.selector(),
        config=ws.orchestrator_config(),
        transcript=transcript,
    )
    write_rules_jsonl(s_g, kg.relations, ws.generated_rules_path)
    transcript_path = ws.transcript_path("generate-rules")
    transcript.save(transcript_path)
    rejects_path = ws.path("rejected_generate.jsonl")
    with open(rejects_path, "w", encoding="utf-8") as fh:
        for item in rejected:
            fh.write(json.dumps({"line": item.raw, "reason": item.reason}, sort_keys=True) + "\n")
    ws.write_manifest(
        "generate-rules",
        [sampled_path],
        [ws.generated_rules_path, transcript_path, rejects_path],
        started,
    )
    return StageResult(
        "generate-rules",
        {
            "rules_generated": str(ws.generated_rules_path),
            "transcript": str(transcript_path),
            "rejected": str(rejects_path),
        },
    )


def run_adapt_rules(ws: Workspace) -> StageResult:
    started = time.perf_counter()
    current_kg = ws.kg_for("current")
    generated_path = ws.require(ws.generated_rules_path, "generate-rules")
    s_g = [
        r for r in read_rules_jsonl(generated_path, current_kg.relations) if isinstance(r, ExtractedRule)
    ]
    scoring_kg = current_kg if ws.config.adaptation_data == "current" else ws.kg_for(
        ws.config.adaptation_data
    )
    transcript = Transcript()
    backend = ws.backend("adapt-rules")
    s_d, rounds = dynamic_adapt(
        backend,
        s_g,
        current_kg,
        sampler_config=ws.walk_config("adapt-rules"),
        theta=ws.config.theta,
        iterations=ws.config.iterations,
        selector=ws.selector(),
        config=ws.orchestrator_config(),
        transcript=transcript,
        scoring_kg=scoring_kg,
        grounding_cap=ws.config.grounding_cap,
        jobs=ws.config.jobs,
    )
    write_rules_jsonl(s_d, current_kg.relations, ws.adapted_rules_path)
    transcript_path = ws.transcript_path("adapt-rules")
    transcript.save(transcript_path)
    log_path = ws.path("adaptation_log.json")
    with open(log_path, "w", encoding="utf-8") as fh:
        json.dump(
            [
                {
                    "iteration": r.iteration,
                    "scored": len(r.scored),
                    "low": len(r.low),
                    "replaced_heads": [
                        current_kg.relations.name_of(h) for h in r.replaced_heads
                    ],
                    "working": len(r.working),
                }
                for r in rounds
            ],
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    ws.write_manifest(
        "adapt-rules", [generated_path], [ws.adapted_rules_path, transcript_path, log_path], started
    )
    return StageResult(
        "adapt-rules",
        {
            "rules_adapted": str(ws.adapted_rules_path),
            "transcript": str(transcript_path),
            "adaptation_log": str(log_path),
        },
    )


def _load_scored_rules(ws: Workspace, evidence_kg) -> list[ScoredRule]:
    stage = ws.config.rules_stage
    path, producer = {
        "adapted": (ws.adapted_rules_path, "adapt-rules"),
        "generated": (ws.generated_rules_path, "generate-rules"),
        "sampled": (ws.sampled_rules_path, "sample-rules"),
    }[stage]
    ws.require(path, producer)
    loaded = read_rules_jsonl(path, evidence_kg.relations)
    rescore_on = ws.config.rescore_on
    if rescore_on is None and loaded and isinstance(loaded[0], ScoredRule):
        return list(loaded)
    rules = [r.rule if isinstance(r, ScoredRule) else r for r in loaded]
    scoring_kg = ws.kg_for(rescore_on or "historical")
    return score_rules(rules, scoring_kg, cap=ws.config.grounding_cap, jobs=ws.config.jobs)


def run_reason(ws: Workspace) -> StageResult:
    started = time.perf_counter()
    split, entities, relations = ws.dataset()
    evidence_kg = ws.kg_for("historical+current")
    if split.future and evidence_kg.max_t is not None:
        min_future = min(q.t for q in split.future)
        if evidence_kg.max_t >= min_future:
            raise DataError(
                "evidence KG reaches into the future split; refusing to leak "
                f"(evidence max t {evidence_kg.max_t} >= first query t {min_future})"
            )
    scored = _load_scored_rules(ws, evidence_kg)
    fusion = FusionConfig(
        alpha=ws.config.alpha,
        gamma=ws.config.gamma,
        lam=ws.config.lam,
        normalization=ws.config.normalization,
    )
    high = select_high_confidence(scored, fusion.gamma)
    by_head: dict[int, list[ScoredRule]] = {}
    for item in high:
        by_head.setdefault(item.rule.head, []).append(item)

    if ws.config.scorer.kind == "none":
        graph_scorer = NullGraphScorer()
    elif ws.config.scorer.kind == "import":
        path = Path(ws.config.scorer.path)
        if not path.exists():
            raise DependencyError(
                f"graph-score file {path} not found; export it from your graph model first"
            )
        graph_scorer = import_graph_scores(path)
    else:
        graph_scorer = RecencyFrequencyScorer(evidence_kg, lam=ws.config.lam)

    pairs = []
    for q in split.future:
        pairs.append((Query(q.subject, q.relation, q.t), q.object, "tail"))
        pairs.append((Query(q.object, relations.inverse_of(q.relation), q.t), q.subject, "head"))

    cap = ws.config.grounding_cap
    top_n = ws.config.eval.top_n

    def score_one(item):
        query, truth, direction = item
        rules_for_head = by_head.get(query.relation, [])
        r_scores = rule_score(query, rules_for_head, evidence_kg, fusion, cap=cap)
        g_scores = graph_scorer.score(query)
        ranking = fuse(r_scores, g_scores, fusion)
        return {
            "query": {
                "subject": query.subject,
                "relation": query.relation,
                "t": query.t,
                "direction": direction,
                "truth": truth,
            },
            "ranked": [
                {
                    "entity": c.entity,
                    "rule_score": c.rule_score,
                    "graph_score": c.graph_score,
                    "fused": c.fused,
                }
                for c in ranking[:top_n]
            ],
        }

    if ws.config.jobs > 1:
        with ThreadPoolExecutor(max_workers=ws.config.jobs) as pool:
            records = list(pool.map(score_one, pairs))
    else:
        records = [score_one(p) for p in pairs]

    with open(ws.predictions_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    inputs = [ws.sampled_rules_path, ws.generated_rules_path, ws.adapted_rules_path]
    ws.write_manifest("reason", [p for p in inputs if p.exists()], [ws.predictions_path], started)
    return StageResult("reason", {"predictions": str(ws.predictions_path)})


def run_evaluate(ws: Workspace) -> StageResult:
    started = time.perf_counter()
    split, entities, relations = ws.dataset()
    predictions_path = ws.require(ws.predictions_path, "reason")
    known = known_facts_index([split.historical, split.current, split.future], relations)
    universe = len(entities)

    records = []
    with open(predictions_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))

    def rank_of(record) -> int:
        q = record["query"]
        key = (q["subject"], q["relation"], q["t"])
        truth = q["truth"]
        ranked = [c["entity"] for c in record["ranked"]]
        return filtered_rank(ranked, truth, known.get(key, set()) - {truth}, universe)

    ranks = [rank_of(r) for r in records]
    overall = EvalReport.from_ranks(ranks, universe)

    segments: list[SegmentReport] = []
    if records and ws.config.eval.segments > 1:
        times = [r["query"]["t"] for r in records]
        for t_lo, t_hi in segment_bounds(min(times), max(times), ws.config.eval.segments):
            seg_ranks = [rank_of(r) for r in records if t_lo <= r["query"]["t"] <= t_hi]
            segments.append(SegmentReport(t_lo, t_hi, EvalReport.from_ranks(seg_ranks, universe)))

    horizon: list[HorizonReport] = []
    if ws.config.eval.horizon_delta_t is not None and split.current:
        boundary = max(q.t for q in split.current)
        delta = ws.config.eval.horizon_delta_t
        for k in range(1, ws.config.eval.horizon_k + 1):
            t_lo, t_hi = boundary + (k - 1) * delta + 1, boundary + k * delta
            win_ranks = [rank_of(r) for r in records if t_lo <= r["query"]["t"] <= t_hi]
            horizon.append(HorizonReport(k, t_lo, t_hi, EvalReport.from_ranks(win_ranks, universe)))
            if not win_ranks:
                logger.warning("horizon window k=%d [%d, %d] has no queries", k, t_lo, t_hi)

    doc = build_report_document(
        overall, segments, horizon, config_echo=ws.config.echo_dict()
    )
    report_json = ws.path("report.json")
    report_tsv = ws.path("report.tsv")
    write_report_json(doc, report_json)
    write_report_tsv(doc, report_tsv)
    artifacts = {"report_json": str(report_json), "report_tsv": str(report_tsv)}
    outputs = [report_json, report_tsv]
    if ws.config.eval.figures:
        figures = render_report_figures(doc, ws.path("figures"))
        for fig in figures:
            artifacts[fig.stem] = str(fig)
        outputs.extend(figures)
    ws.write_manifest("evaluate", [predictions_path], outputs, started)
    return StageResult("evaluate", artifacts)


STAGE_RUNNERS = {
    "ingest": run_ingest,
    "sample-rules": run_sample_rules,
    "generate-rules": run_generate_rules,
    "adapt-rules": run_adapt_rules,
    "reason": run_reason,
    "evaluate": run_evaluate,
}


def run_pipeline(ws: Workspace) -> StageResult:
    artifacts: dict[str, str] = {}
    for stage in STAGE_ORDER:
        result = STAGE_RUNNERS[stage](ws)
        print(result.final_line())
        artifacts.update(result.artifacts)
    return StageResult("pipeline", artifacts)
