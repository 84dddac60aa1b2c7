"""JSON Lines persistence for rule sets.

Plain rules: ``{"head": name, "body": [names], "support": int}``.
Scored rules additionally carry ``confidence``, ``body_support`` and
``rule_support``. Files are written in a stable (head, body) sort so
identical rule sets serialize to identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .errors import ParseError, ResolutionError
from .quality import ScoredRule
from .tkg import RelationCatalog
from .walks import ExtractedRule


def _sort_key(rule: ExtractedRule, catalog: RelationCatalog):
    return (catalog.name_of(rule.head), tuple(catalog.name_of(r) for r in rule.body))


def write_rules_jsonl(
    rules: Sequence[ExtractedRule | ScoredRule],
    catalog: RelationCatalog,
    path: str | Path,
) -> None:
    def base(r):
        return r.rule if isinstance(r, ScoredRule) else r

    ordered = sorted(rules, key=lambda r: _sort_key(base(r), catalog))
    with open(path, "w", encoding="utf-8") as fh:
        for item in ordered:
            rule = base(item)
            record: dict = {
                "head": catalog.name_of(rule.head),
                "body": [catalog.name_of(r) for r in rule.body],
            }
            if isinstance(item, ScoredRule):
                record["confidence"] = item.confidence
                record["body_support"] = item.body_support
                record["rule_support"] = item.rule_support
            else:
                record["support"] = rule.support
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_rules_jsonl(
    path: str | Path, catalog: RelationCatalog
) -> list[ExtractedRule | ScoredRule]:
    """Load a rule file; scored and plain records may not be mixed."""
    out: list[ExtractedRule | ScoredRule] = []
    kinds = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                head = catalog.id_of(record["head"])
                body = tuple(catalog.id_of(name) for name in record["body"])
            except (KeyError, ValueError, ResolutionError) as exc:
                raise ParseError(f"bad rule record: {exc}", str(path), lineno) from exc
            if "confidence" in record:
                kinds.add("scored")
                rule = ExtractedRule(head=head, body=body, support=0)
                out.append(
                    ScoredRule(
                        rule=rule,
                        body_support=int(record["body_support"]),
                        rule_support=int(record["rule_support"]),
                        confidence=float(record["confidence"]),
                    )
                )
            else:
                kinds.add("plain")
                out.append(
                    ExtractedRule(head=head, body=body, support=int(record.get("support", 0)))
                )
    if len(kinds) > 1:
        raise ParseError("mixed scored and plain rule records", str(path))
    return out
