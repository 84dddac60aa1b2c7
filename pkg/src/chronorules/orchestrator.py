"""Prompt rendering, LLM-backed rule generation, and the dynamic-adaptation loop.

Prompts are byte-stable given their inputs. Backend calls are issued
sequentially in sorted head order so a recorded transcript replays
identically regardless of worker settings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .errors import BackendError, ReplayDivergenceError
from .llm import ChatRequest, ChatResponse, Transcript
from .quality import ScoredRule, partition_by_threshold, score_rules
from .rule_text import RuleText, parse_rules, serialize_rule
from .selector import RelationSelector
from .tkg import TemporalKG
from .walks import ExtractedRule, WalkConfig, extract_rules

logger = logging.getLogger(__name__)

RULE_DEFINITION = (
    'Temporal Logical Rules "Rl(X, Y, Tl) ← R1(X, Y, T1) & ... & Rl-1(X, Y, Tl-1)" '
    "typically describe how the relation 'Rl' between entities 'X' and 'Y' evolves "
    "from past time steps 'Ti (i = 1, ..., (l-1))' (Rule body) to the next timestamp "
    "'Tl' (Rule head), and please follow the constraint "
    '"T1 ≤ ... ≤ Tl-1 < Tl".'
)

GENERATION_EXAMPLES = """Here are a few examples:

Example 1:

Rule Head:
    Cooperate_economically (X, Y, T)

Extracted Rules:
    Cooperate_economically (X, Y, T2) ← Provide_aid (X, Y, T1)
    Cooperate_economically (X, Y, T3) ← Host_a_visit (X, Z1, T1) & Negotiate (Z1, Y, T2)
    ...

Generated Temporal Logical Rules:
    Cooperate_economically (X, Y, T2) ← Engage_in_negotiation (X, Y, T1)
    Cooperate_economically (X, Y, T3) ← inv_Engage_in_negotiation (X, Z1, T1) & Make_a_visit (Z1, Y, T2)
    ...

Example 2:

Rule Head:
    Appeal_for_economic_aid (X, Y, T)

Extracted Rules:
    Appeal_for_economic_aid (X, Y, T2) ← inv_Reduce_or_stop_military_assistance (X, Y, T1)
    Appeal_for_economic_aid (X, Y, T3) ← inv_Express_intent_to_cooperate (X, Z1, T1) & Make_statement (Z1, Y, T2)
    ...

Generated Temporal Logical Rules:
    Appeal_for_economic_aid (X, Y, T2) ← Make_an_appeal_or_request (X, Y, T1)
    Appeal_for_economic_aid (X, Y, T3) ← inv_Make_an_appeal_or_request (X, Z1, T1) & Make_statement (Z1, Y, T2)
    ..."""

ADAPTATION_EXAMPLES = """Here are a few examples:

Example 1:

Rule Head:
    inv_Provide_humanitarian_aid (X, Y, T)

Low Quality Temporal Logical Rules:
    Make_a_visit (X, Y, T2) ← Provide_military_protection_or_peacekeeping (X, Y, T1)
    Make_a_visit (X, Y, T4) ← Appeal_for_diplomatic_cooperation_(such_as_policy_support) (X, Z1, T1) & inv_Consult (Z1, Z2, T2) & inv_Make_statement (Z2, Y, T3)

Generated High Quality Temporal Logical Rules:
    Make_a_visit (X, Y, T2) ← Express_intent_to_meet_or_negotiate (X, Z1, T1) & Make_a_visit (Z1, Y, T2)
    Make_a_visit (X, Y, T3) ← Consult (X, Z1, T1) & Engage_in_negotiation (Z1, Z2, T2) & Make_a_visit (Z2, Y, T3)
    ...

Example 2:

Rule Head:
    inv_Provide_humanitarian_aid (X, Y, T)

Low Quality Temporal Logical Rules:
    inv_Provide_humanitarian_aid (X, Y, T2) ← inv_Investigate (X, Y, T1)
    inv_Provide_humanitarian_aid (X, Y, T2) ← inv_Engage_in_diplomatic_cooperation (X, Y, T1)

Generated High Quality Temporal Logical Rules:
    inv_Provide_humanitarian_aid (X, Y, T2) ← inv_Provide_aid (X, Y, T1)
    inv_Provide_humanitarian_aid (X, Y, T3) ← Criticize_or_denounce (X, Z1, T1) & Sign_formal_agreement (Z1, Y, T2)
    ..."""

RETURN_INSTRUCTION = "Return the rules only without any explanations."


def _rule_block(lines: Sequence[str]) -> str:
    return "\n".join(f"    {line}" for line in lines)


def render_generation_prompt(
    head: str, sampled_rules: Sequence[str], candidates: Sequence[str]
) -> str:
    """Rule-generation prompt for one head relation; byte-stable per inputs."""
    if not candidates:
        raise ValueError("candidate relation list must be nonempty")
    return (
        f"{RULE_DEFINITION}\n\n"
        "You are an expert in temporal knowledge graph reasoning, and please generate "
        f"as many temporal logical rules as possible related to '{head}' based on "
        "extracted temporal rules.\n\n"
        f"{GENERATION_EXAMPLES}\n\n"
        "Extracted Rules from Historical Data:\n\n"
        f"{_rule_block(sampled_rules)}\n\n"
        "Let's think step-by-step, please generate as many as possible most relevant "
        f'temporal rules that are relative to "{head} (X, Y, T)" based on the above '
        "extracted rules from historical data.\n\n"
        "For the relations in rule body, you are going to choose from the candidate "
        f'relations: "{", ".join(candidates)}".\n\n'
        f"{RETURN_INSTRUCTION}"
    )


def render_adaptation_prompt(
    head: str,
    low_rules: Sequence[str],
    current_rules: Sequence[str],
    candidates: Sequence[str],
) -> str | None:
    """Dynamic-adaptation prompt; returns None when there is nothing to update."""
    if not low_rules:
        return None
    if not candidates:
        raise ValueError("candidate relation list must be nonempty")
    return (
        f"{RULE_DEFINITION}\n\n"
        "You are an expert in temporal knowledge graph reasoning, and please analyze "
        "these LLMs-generated rules and update the low-quality rules based on the "
        "extracted rules from current data.\n\n"
        f"{ADAPTATION_EXAMPLES}\n\n"
        "Low-quality Temporal Logical Rules:\n\n"
        f"{_rule_block(low_rules)}\n\n"
        "Extracted Rules from Current Data:\n\n"
        f"{_rule_block(current_rules)}\n\n"
        "Let's think step-by-step, and please update the low-quality temporal logic "
        f'rules related to "{head} (X, Y, T)" based on the extracted rules from '
        "current data.\n\n"
        "For the relations in rule body, you are going to choose from the candidate "
        f'relations: "{", ".join(candidates)}".\n\n'
        f"{RETURN_INSTRUCTION}"
    )


@dataclass(frozen=True)
class OrchestratorConfig:
    model: str = "gpt-3.5-turbo-0215"
    temperature: float = 0.0
    max_tokens: int | None = None
    max_rules_per_prompt: int = 50
    restrict_to_candidates: bool = True


@dataclass
class AdaptationRound:
    """Bookkeeping for one dynamic-adaptation iteration."""

    iteration: int
    scored: list[ScoredRule]
    low: list[ScoredRule]
    extracted_current: list[ExtractedRule]
    replaced_heads: list[int]
    working: list[ExtractedRule]


def _prompt_support(item: ExtractedRule | ScoredRule) -> int:
    return item.body_support if isinstance(item, ScoredRule) else item.support


def _serialize_for_prompt(
    items: Sequence[ExtractedRule | ScoredRule], kg: TemporalKG, limit: int
) -> list[str]:
    """Render rules for a prompt, dropping lowest-support rules beyond ``limit``."""
    lines = []
    for item in items:
        rule = item.rule if isinstance(item, ScoredRule) else item
        lines.append((-_prompt_support(item), serialize_rule(rule, kg.relations)))
    lines.sort()
    return [text for _neg, text in lines[:limit]]


def _dedup(rules: Sequence[ExtractedRule]) -> list[ExtractedRule]:
    seen = set()
    out = []
    for rule in rules:
        if rule.key() in seen:
            continue
        seen.add(rule.key())
        out.append(rule)
    return out


def _call(
    backend,
    transcript: Transcript,
    config: OrchestratorConfig,
    prompt: str,
) -> ChatResponse | None:
    request = ChatRequest(
        system="",
        user=prompt,
        model=config.model,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
    )
    try:
        response = backend.complete(request)
    except ReplayDivergenceError:
        raise  # a diverging replay invalidates the whole run
    except BackendError as exc:
        logger.warning("backend call failed, keeping existing rules: %s", exc)
        transcript.append(request, ChatResponse(text="", finish_reason="error"))
        return None
    transcript.append(request, response)
    return response


def generate_rules(
    backend,
    heads: Sequence[int],
    sampled: Sequence[ExtractedRule],
    kg: TemporalKG,
    selector: RelationSelector,
    config: OrchestratorConfig,
    transcript: Transcript,
) -> tuple[list[ExtractedRule], list[RuleText]]:
    """Prompt the backend per head and union the parsed rules with the sampled
    set (generation only adds). Returns (S_g, rejected lines)."""
    by_head: dict[int, list[ExtractedRule]] = {}
    for rule in sampled:
        by_head.setdefault(rule.head, []).append(rule)

    generated: list[ExtractedRule] = []
    rejected: list[RuleText] = []
    for head in sorted(heads, key=kg.relations.name_of):
        candidates = selector.candidates_for(head)
        prompt = render_generation_prompt(
            kg.relations.name_of(head),
            _serialize_for_prompt(by_head.get(head, []), kg, config.max_rules_per_prompt),
            candidates,
        )
        response = _call(backend, transcript, config, prompt)
        if response is None:
            continue
        allowed = candidates if config.restrict_to_candidates else None
        accepted, bad = parse_rules(response.text, kg.relations, allowed)
        generated.extend(accepted)
        rejected.extend(bad)
    return _dedup(list(sampled) + generated), rejected


def dynamic_adapt(
    backend,
    s_g: Sequence[ExtractedRule],
    current_kg: TemporalKG,
    sampler_config: WalkConfig,
    theta: float,
    iterations: int,
    selector: RelationSelector,
    config: OrchestratorConfig,
    transcript: Transcript,
    scoring_kg: TemporalKG | None = None,
    grounding_cap: int = 1000,
    jobs: int = 1,
) -> tuple[list[ScoredRule], list[AdaptationRound]]:
    """Iteratively rewrite low-confidence rules with backend guidance.

    Each iteration scores the working set on ``scoring_kg`` (defaults to the
    current-data KG), partitions at ``theta``, prompts per head holding
    low-confidence rules with rules extracted from current data, and merges:
    parsed replacements substitute that head's low rules, high-confidence
    rules pass through unchanged, unusable responses leave the originals in
    place. The final working set is rescored once.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    scoring_kg = scoring_kg if scoring_kg is not None else current_kg
    working = _dedup(s_g)
    rounds: list[AdaptationRound] = []
    # Deterministic per (kg, config, seed); identical every iteration, so
    # extract once up front.
    extracted_current = (
        extract_rules(current_kg, None, sampler_config, jobs=jobs) if iterations > 0 else []
    )
    current_by_head: dict[int, list[ExtractedRule]] = {}
    for rule in extracted_current:
        current_by_head.setdefault(rule.head, []).append(rule)

    for iteration in range(iterations):
        scored = score_rules(working, scoring_kg, cap=grounding_cap, jobs=jobs)
        low, high = partition_by_threshold(scored, theta)
        if not low:
            rounds.append(
                AdaptationRound(iteration, scored, [], extracted_current, [], list(working))
            )
            break
        low_by_head: dict[int, list[ScoredRule]] = {}
        for item in low:
            low_by_head.setdefault(item.rule.head, []).append(item)

        replaced_heads: list[int] = []
        merged: list[ExtractedRule] = [item.rule for item in high]
        for head in sorted(low_by_head, key=current_kg.relations.name_of):
            head_low = low_by_head[head]
            candidates = selector.candidates_for(head)
            prompt = render_adaptation_prompt(
                current_kg.relations.name_of(head),
                _serialize_for_prompt(head_low, current_kg, config.max_rules_per_prompt),
                _serialize_for_prompt(
                    current_by_head.get(head, []), current_kg, config.max_rules_per_prompt
                ),
                candidates,
            )
            assert prompt is not None  # head_low is nonempty
            response = _call(backend, transcript, config, prompt)
            replacements: list[ExtractedRule] = []
            if response is not None:
                allowed = candidates if config.restrict_to_candidates else None
                replacements, _bad = parse_rules(response.text, current_kg.relations, allowed)
            if replacements:
                replaced_heads.append(head)
                merged.extend(replacements)
            else:
                merged.extend(item.rule for item in head_low)
        working = _dedup(merged)
        rounds.append(
            AdaptationRound(iteration, scored, low, extracted_current, replaced_heads, list(working))
        )

    final = score_rules(working, scoring_kg, cap=grounding_cap, jobs=jobs)
    return final, rounds
