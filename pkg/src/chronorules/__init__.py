"""chronorules: temporal-KG rule mining, LLM-guided rule adaptation, and
link-prediction evaluation with a deterministic, replayable LLM boundary."""

from .config import PipelineConfig
from .evaluation import (
    EvalReport,
    HorizonSpec,
    evaluate,
    filtered_rank,
    horizon_eval,
    known_facts_index,
    queries_from_quads,
    segment_eval,
)
from .llm import (
    ChatExchange,
    ChatRequest,
    ChatResponse,
    LiveBackend,
    ReplayBackend,
    ScriptedBackend,
    Transcript,
)
from .orchestrator import (
    OrchestratorConfig,
    dynamic_adapt,
    generate_rules,
    render_adaptation_prompt,
    render_generation_prompt,
)
from .quality import (
    Grounding,
    ScoredRule,
    confidence,
    ground_body,
    partition_by_threshold,
    score_rules,
)
from .reasoner import (
    CandidateScore,
    FusionConfig,
    Query,
    RecencyFrequencyScorer,
    apply_rule,
    fuse,
    import_graph_scores,
    rule_score,
    select_high_confidence,
)
from .rule_text import parse_rules, serialize_rule
from .selector import (
    RelationSelector,
    SelectorConfig,
    TrigramHashEmbedder,
    relevance,
    top_k_relations,
)
from .tkg import (
    Catalog,
    DatasetSplit,
    Quadruple,
    RelationCatalog,
    TemporalKG,
    build_kg,
    load_quadruples,
    load_splits,
)
from .walks import (
    ExtractedRule,
    TemporalPath,
    WalkConfig,
    extract_rules,
    lift_to_rule,
    sample_closed_paths,
    transition_distribution,
)

__version__ = "0.1.0"
