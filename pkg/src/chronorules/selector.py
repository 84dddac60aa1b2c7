"""Top-k relation selection by embedding cosine similarity.

Embeddings come from a pluggable provider. The built-in fallback hashes
character trigrams into a fixed 512-dim vector, which is deterministic and
dependency-free; an OpenAI-style HTTP provider covers real sentence encoders.
Provider calls can be cached on disk, keyed by (provider id, text).
"""

from __future__ import annotations

import json
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import BackendError, DegenerateInputError
from .tkg import INVERSE_PREFIX, RelationCatalog


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class TrigramHashEmbedder:
    """Hashed character-trigram counts, L2-normalized.

    Text is padded with '#' sentinels so any nonempty string yields at least
    one trigram; the empty string maps to the zero vector (degenerate).
    """

    provider_id = "fallback-trigram"
    dimension = 512

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        padded = f"#{text}#"
        for i in range(len(padded) - 2):
            tri = padded[i : i + 3]
            vec[zlib.crc32(tri.encode("utf-8")) % self.dimension] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class HttpEmbedder:
    """OpenAI-compatible ``/embeddings`` endpoint provider."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.provider_id = f"external:{model}"
        self.dimension = -1  # learned from the first response

    def embed(self, text: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.endpoint}/embeddings",
                json={"model": self.model, "input": [text]},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        except Exception as exc:  # noqa: BLE001 - surface as backend failure
            raise BackendError(f"embedding request failed: {exc}") from exc
        if self.dimension < 0:
            self.dimension = vec.size
        return vec


class CachedEmbedder:
    """Wraps a provider with an in-memory map and optional JSONL persistence."""

    def __init__(self, provider: EmbeddingProvider, cache_path: str | Path | None = None):
        self._provider = provider
        self._path = Path(cache_path) if cache_path else None
        self._memory: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.provider_id = provider.provider_id
        if self._path is not None and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    if rec.get("provider") == self.provider_id:
                        self._memory[rec["text"]] = np.asarray(rec["vector"], dtype=np.float64)

    @property
    def dimension(self) -> int:
        return self._provider.dimension

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            hit = self._memory.get(text)
        if hit is not None:
            return hit
        vec = self._provider.embed(text)
        with self._lock:
            self._memory[text] = vec
            if self._path is not None:
                rec = {"provider": self.provider_id, "text": text, "vector": vec.tolist()}
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec) + "\n")
        return vec


def build_provider(
    name: str,
    endpoint: str | None = None,
    model: str | None = None,
    api_key: str | None = None,
    cache_path: str | Path | None = None,
) -> EmbeddingProvider:
    if name == "fallback-trigram":
        provider: EmbeddingProvider = TrigramHashEmbedder()
    elif name == "external":
        if not endpoint or not model:
            raise ValueError("external embedding provider needs an endpoint and a model name")
        provider = HttpEmbedder(endpoint, model, api_key=api_key)
    else:
        raise ValueError(f"unknown embedding provider {name!r}")
    if cache_path is not None:
        return CachedEmbedder(provider, cache_path)
    return provider


def relevance(head_vec: np.ndarray, cand_vec: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; rejects zero-norm vectors."""
    a = np.asarray(head_vec, dtype=np.float64)
    b = np.asarray(cand_vec, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector is undefined")
    return float(np.clip(a.dot(b) / (na * nb), -1.0, 1.0))


def relation_surface_form(name: str) -> str:
    """Render a relation name for embedding: inv_ prefix spelled out,
    underscores as spaces."""
    if name.startswith(INVERSE_PREFIX):
        return "inverse of " + name[len(INVERSE_PREFIX) :].replace("_", " ")
    return name.replace("_", " ")


@dataclass(frozen=True)
class SelectorConfig:
    k: int = 20
    normalize_names: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


def top_k_relations(
    head: int,
    catalog: RelationCatalog,
    provider: EmbeddingProvider,
    config: SelectorConfig,
) -> list[int]:
    """The k catalog relations most similar to ``head``, ties broken by
    ascending name. The head itself may appear in its own top-k."""
    if config.k > len(catalog):
        raise ValueError(f"k={config.k} exceeds catalog size {len(catalog)}")
    render = relation_surface_form if config.normalize_names else (lambda s: s)
    head_vec = provider.embed(render(catalog.name_of(head)))
    scored = []
    for rid in range(len(catalog)):
        name = catalog.name_of(rid)
        scored.append((-relevance(head_vec, provider.embed(render(name))), name, rid))
    scored.sort()
    return [rid for _neg, _name, rid in scored[: config.k]]


class RelationSelector:
    """Memoizing façade: head relation id -> its top-k candidate names."""

    def __init__(self, catalog: RelationCatalog, provider: EmbeddingProvider, config: SelectorConfig):
        self.catalog = catalog
        self.provider = provider
        self.config = config
        self._cache: dict[int, list[str]] = {}

    def candidates_for(self, head: int) -> list[str]:
        if head not in self._cache:
            ids = top_k_relations(head, self.catalog, self.provider, self.config)
            self._cache[head] = [self.catalog.name_of(i) for i in ids]
        return self._cache[head]
