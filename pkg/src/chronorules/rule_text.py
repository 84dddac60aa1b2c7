"""Surface grammar for chain rules exchanged with a language model.

A rule line looks like::

    Head (X, Y, T3) <- R1 (X, Z1, T1) & R2 (Z1, Y, T2)

Both "<-" and the arrow character are accepted, whitespace is free, variable
and timestamp subscripts may be written with or without underscores, and an
optional leading list marker ("-", "*", "1.") is tolerated. A line is accepted
only if the body variables form the chain X -> Z1 -> ... -> Y, timestamp
indices run 1..k in order (head index k+1, or a bare "T"), and every relation
name resolves in the catalog (and in the allowed set, when one is given).
Anything else is rejected with a reason; rejections are data, not exceptions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .tkg import RelationCatalog
from .walks import ExtractedRule

ARROW = "←"  # ←
_BULLET_RE = re.compile(r"^\s*(?:[-*•]\s+|\d+[.)]\s+)")
_ATOM_RE = re.compile(
    r"^\s*(?P<name>.*\S)\s*\(\s*(?P<a>[^\s,()]+)\s*,\s*(?P<b>[^\s,()]+)\s*,\s*(?P<t>[^\s,()]+)\s*\)\s*$"
)
_SUBSCRIPT_RE = re.compile(r"^([XYZT])_?(\d+)$")


@dataclass(frozen=True)
class RuleText:
    """Parse outcome for one response line."""

    raw: str
    accepted: bool
    rule: ExtractedRule | None = None
    reason: str | None = None


def _norm_token(token: str) -> str:
    m = _SUBSCRIPT_RE.match(token)
    if m:
        return m.group(1) + m.group(2)
    return token


def _chain_variables(length: int) -> list[str]:
    return ["X"] + [f"Z{i}" for i in range(1, length)] + ["Y"]


def serialize_rule(rule: ExtractedRule, catalog: RelationCatalog, arrow: str = ARROW) -> str:
    """Render a rule in the surface grammar (round-trips through the parser)."""
    variables = _chain_variables(len(rule.body))
    head = f"{catalog.name_of(rule.head)} (X, Y, T{len(rule.body) + 1})"
    atoms = [
        f"{catalog.name_of(rel)} ({variables[i]}, {variables[i + 1]}, T{i + 1})"
        for i, rel in enumerate(rule.body)
    ]
    return f"{head} {arrow} " + " & ".join(atoms)


def _split_arrow(line: str) -> tuple[str, str] | None:
    for arrow in (ARROW, "<-"):
        if arrow in line:
            head, _, body = line.partition(arrow)
            return head, body
    return None


def parse_rule_line(
    line: str,
    catalog: RelationCatalog,
    allowed: set[str] | None = None,
) -> RuleText:
    raw = line
    line = _BULLET_RE.sub("", line.strip())
    split = _split_arrow(line)
    if split is None:
        return RuleText(raw, False, reason="no rule arrow")
    head_str, body_str = split

    head_atom = _ATOM_RE.match(head_str)
    if head_atom is None:
        return RuleText(raw, False, reason="head is not a relation atom")
    body_atoms = []
    for part in body_str.split("&"):
        m = _ATOM_RE.match(part)
        if m is None:
            return RuleText(raw, False, reason="body atom is not a relation atom")
        body_atoms.append(m)
    k = len(body_atoms)

    if _norm_token(head_atom["a"]) != "X" or _norm_token(head_atom["b"]) != "Y":
        return RuleText(raw, False, reason="head variables must be (X, Y)")
    # canonical head index is k+1, but index k also occurs in the wild
    head_t = _norm_token(head_atom["t"])
    if head_t not in ("T", f"T{k}", f"T{k + 1}"):
        return RuleText(raw, False, reason=f"head timestamp must be T, T{k} or T{k + 1}")

    variables = _chain_variables(k)
    body_ids = []
    for i, atom in enumerate(body_atoms):
        if _norm_token(atom["a"]) != variables[i] or _norm_token(atom["b"]) != variables[i + 1]:
            return RuleText(
                raw,
                False,
                reason=f"broken variable chain at position {i + 1}: "
                f"expected ({variables[i]}, {variables[i + 1]})",
            )
        if _norm_token(atom["t"]) != f"T{i + 1}":
            return RuleText(raw, False, reason=f"timestamp out of order at position {i + 1}")
        name = atom["name"].strip()
        if name not in catalog:
            return RuleText(raw, False, reason=f"unknown relation: {name}")
        if allowed is not None and name not in allowed:
            return RuleText(raw, False, reason=f"relation not among candidates: {name}")
        body_ids.append(catalog.id_of(name))

    head_name = head_atom["name"].strip()
    if head_name not in catalog:
        return RuleText(raw, False, reason=f"unknown relation: {head_name}")

    rule = ExtractedRule(head=catalog.id_of(head_name), body=tuple(body_ids), support=0)
    return RuleText(raw, True, rule=rule)


def parse_rules(
    text: str,
    catalog: RelationCatalog,
    allowed: Iterable[str] | None = None,
) -> tuple[list[ExtractedRule], list[RuleText]]:
    """Parse every nonempty line of an LLM response.

    Returns (accepted rules, rejected lines with reasons). ``allowed``
    restricts body relations to the candidate set shown in the prompt.
    """
    allowed_set = set(allowed) if allowed is not None else None
    accepted: list[ExtractedRule] = []
    rejected: list[RuleText] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        result = parse_rule_line(line, catalog, allowed_set)
        if result.accepted and result.rule is not None:
            accepted.append(result.rule)
        else:
            rejected.append(result)
    return accepted, rejected
