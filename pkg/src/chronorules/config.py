"""Pipeline configuration: a single JSON document plus dotted-key overrides.

Relative paths inside the document resolve against the config file's
directory. The API key for live backends is only ever read from an
environment variable, never from the document itself.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

# JSON key -> dataclass attribute (lambda is a Python keyword)
_KEY_ALIASES = {"lambda": "lam"}
_ALIAS_BACK = {v: k for k, v in _KEY_ALIASES.items()}


@dataclass
class DataConfig:
    historical: str = ""
    current: str = ""
    future: str = ""
    entity2id: str | None = None
    relation2id: str | None = None
    time_divisor: int = 1


@dataclass
class BackendConfig:
    kind: str = "scripted"  # scripted | replay | live
    model: str = "gpt-3.5-turbo-0215"
    endpoint: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    transcript: str | None = None
    timeout: float = 60.0
    retries: int = 3


@dataclass
class ScorerConfig:
    kind: str = "recency"  # recency | import | none
    path: str | None = None


@dataclass
class EmbeddingConfig:
    provider: str = "fallback-trigram"  # fallback-trigram | external
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    cache: str | None = None


@dataclass
class EvalSection:
    segments: int = 1
    horizon_delta_t: int | None = None
    horizon_k: int | None = None
    top_n: int = 100
    figures: bool = True


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    out_dir: str = "runs/run"
    seed: int = 7
    jobs: int = 1

    lam: float = 0.1
    theta: float = 0.01
    gamma: float = 0.01
    alpha: float = 0.9
    top_k: int = 20
    iterations: int = 5

    max_body_len: int = 3
    walks_per_relation: int = 200
    strict_within_body: bool = False

    max_rules_per_prompt: int = 50
    restrict_to_candidates: bool = True
    adaptation_data: str = "current"  # current | historical | historical+current

    rules_stage: str = "adapted"  # adapted | generated | sampled
    rescore_on: str | None = None  # null = use stored confidences when present
    normalization: str = "minmax"
    grounding_cap: int = 1000

    backend: BackendConfig = field(default_factory=BackendConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    # -- construction ------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        return _build_dataclass(cls, raw, path="")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        config = cls.from_dict(raw)
        config._resolve_paths(path.parent)
        return config

    def _resolve_paths(self, base: Path) -> None:
        def resolve(p: str | None) -> str | None:
            if p is None or p == "":
                return p
            candidate = Path(p)
            if not candidate.is_absolute():
                candidate = base / candidate
            return os.path.normpath(candidate)

        self.data.historical = resolve(self.data.historical) or ""
        self.data.current = resolve(self.data.current) or ""
        self.data.future = resolve(self.data.future) or ""
        self.data.entity2id = resolve(self.data.entity2id)
        self.data.relation2id = resolve(self.data.relation2id)
        self.scorer.path = resolve(self.scorer.path)
        self.embedding.cache = resolve(self.embedding.cache)
        self.backend.transcript = resolve(self.backend.transcript)
        self.out_dir = resolve(self.out_dir) or self.out_dir

    def apply_overrides(self, overrides: list[str]) -> None:
        """Apply ``--set section.key=value`` pairs; values parse as JSON with a
        plain-string fallback."""
        for item in overrides:
            key, sep, raw_value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            try:
                value = json.loads(raw_value)
            except json.JSONDecodeError:
                value = raw_value
            target = self
            parts = [_KEY_ALIASES.get(p, p) for p in key.strip().split(".")]
            for part in parts[:-1]:
                if not dataclasses.is_dataclass(getattr(target, part, None)):
                    raise ConfigError(f"unknown config section {part!r} in {key!r}")
                target = getattr(target, part)
            leaf = parts[-1]
            if not hasattr(target, leaf):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(target, leaf, value)

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        def unfold(obj):
            if dataclasses.is_dataclass(obj):
                return {
                    _ALIAS_BACK.get(f.name, f.name): unfold(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)
                }
            return obj

        return unfold(self)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def echo_dict(self) -> dict:
        """Experiment parameters for report echoing.

        Execution details (output paths, worker counts, backend transport,
        transcript locations) are omitted so identical experiments produce
        byte-identical reports regardless of where or how they ran.
        """
        doc = self.to_dict()
        for key in ("out_dir", "jobs"):
            doc.pop(key, None)
        doc["backend"] = {"model": self.backend.model}
        doc["embedding"] = {
            "provider": self.embedding.provider,
            "model": self.embedding.model,
        }
        return doc

    # -- validation --------------------------------------------------------------

    def validate(self) -> None:
        problems = []

        def check(condition: bool, message: str) -> None:
            if not condition:
                problems.append(message)

        check(self.lam > 0, "lambda must be > 0")
        check(0 <= self.theta <= 1, "theta must be in [0, 1]")
        check(0 <= self.gamma <= 1, "gamma must be in [0, 1]")
        check(0 <= self.alpha <= 1, "alpha must be in [0, 1]")
        check(self.top_k >= 1, "top_k must be >= 1")
        check(self.iterations >= 0, "iterations must be >= 0")
        check(self.max_body_len >= 1, "max_body_len must be >= 1")
        check(self.walks_per_relation >= 0, "walks_per_relation must be >= 0")
        check(self.jobs >= 1, "jobs must be >= 1")
        check(self.grounding_cap >= 1, "grounding_cap must be >= 1")
        check(self.max_rules_per_prompt >= 1, "max_rules_per_prompt must be >= 1")
        check(
            self.adaptation_data in ("current", "historical", "historical+current"),
            "adaptation_data must be current | historical | historical+current",
        )
        check(
            self.rules_stage in ("adapted", "generated", "sampled"),
            "rules_stage must be adapted | generated | sampled",
        )
        check(
            self.rescore_on in (None, "current", "historical", "historical+current"),
            "rescore_on must be null | current | historical | historical+current",
        )
        check(self.normalization in ("minmax", "none"), "normalization must be minmax | none")
        check(
            self.backend.kind in ("scripted", "replay", "live"),
            "backend.kind must be scripted | replay | live",
        )
        check(self.backend.retries >= 0, "backend.retries must be >= 0")
        check(
            self.scorer.kind in ("recency", "import", "none"),
            "scorer.kind must be recency | import | none",
        )
        check(
            self.scorer.kind != "import" or bool(self.scorer.path),
            "scorer.kind=import requires scorer.path",
        )
        check(
            self.embedding.provider in ("fallback-trigram", "external"),
            "embedding.provider must be fallback-trigram | external",
        )
        check(self.eval.segments >= 1, "eval.segments must be >= 1")
        check(self.eval.top_n >= 1, "eval.top_n must be >= 1")
        if self.eval.horizon_delta_t is not None:
            check(self.eval.horizon_delta_t >= 1, "eval.horizon_delta_t must be >= 1")
            check(
                self.eval.horizon_k is not None and self.eval.horizon_k >= 1,
                "eval.horizon_k must be >= 1 when eval.horizon_delta_t is set",
            )
        for name in ("historical", "current", "future"):
            check(bool(getattr(self.data, name)), f"data.{name} path is required")
        if problems:
            raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))


_SUBSECTIONS = {
    "data": DataConfig,
    "backend": BackendConfig,
    "scorer": ScorerConfig,
    "embedding": EmbeddingConfig,
    "eval": EvalSection,
}


def _build_dataclass(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        name = _KEY_ALIASES.get(key, key)
        if name not in fields:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key {where!r}")
        if cls is PipelineConfig and name in _SUBSECTIONS:
            kwargs[name] = _build_dataclass(_SUBSECTIONS[name], value, key)
        else:
            kwargs[name] = value
    return cls(**kwargs)
