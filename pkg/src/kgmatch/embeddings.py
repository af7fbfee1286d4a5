"""Label-embedding providers and path-level label embeddings.

Three provider kinds:

* ``mock`` / ``count-oracle`` — a seeded hash of the label expanded to a
  unit-norm pseudo-random vector. Pure function of (label, F, seed), so
  the whole pipeline runs offline and reproducibly.
* ``remote`` — an HTTP embedding service speaking the common
  ``{"input": [...]} -> {"data": [{"embedding": [...]}]}`` wire shape.

Entity normalization at desk scale is an exact cosine scan over the data
graph's labels rather than an approximate index; the contract (top-1 by
cosine, ties to the smaller vertex id) is unchanged.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError, ProviderError, StateMismatchError
from .graph import Graph, UNKNOWN_LABEL
from .graph import Path as GraphPath

DEFAULT_DIM = 16


@dataclass
class ProviderConfig:
    kind: str = "count-oracle"  # mock | count-oracle | remote
    dim: int = DEFAULT_DIM
    seed: int = 0
    endpoint: str = ""
    auth_token_env: str = "KGMATCH_API_TOKEN"
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "count-oracle", "remote"):
            raise InputError(f"unknown provider kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise InputError("remote provider requires an endpoint")
        if self.dim < 1:
            raise InputError("embedding dimension must be positive")


def _label_seed(label: str, seed: int) -> int:
    digest = hashlib.blake2b(
        label.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little", signed=True)
    ).digest()
    return int.from_bytes(digest, "little")


class LabelProvider:
    """Base: deterministic label -> vector with an in-memory cache."""

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def embed(self, label: str) -> np.ndarray:
        if not label:
            raise InputError("cannot embed an empty label")
        if label == UNKNOWN_LABEL:
            raise InputError("the reserved unknown label is never embedded directly")
        hit = self._cache.get(label)
        if hit is None:
            hit = self._compute(label)
            if hit.shape != (self.cfg.dim,):
                raise StateMismatchError(
                    f"provider returned dimension {hit.shape}, configured F={self.cfg.dim}"
                )
            self._cache[label] = hit
        return hit

    def embed_many(self, labels: Iterable[str]) -> dict[str, np.ndarray]:
        return {lab: self.embed(lab) for lab in labels}

    def _compute(self, label: str) -> np.ndarray:
        raise NotImplementedError


class MockLabelProvider(LabelProvider):
    """Seeded hash -> F pseudo-random normal values, unit-normalized."""

    def _compute(self, label: str) -> np.ndarray:
        rng = np.random.default_rng(_label_seed(label, self.cfg.seed))
        vec = rng.standard_normal(self.cfg.dim)
        return vec / np.linalg.norm(vec)


class RemoteLabelProvider(LabelProvider):
    """HTTP JSON embedding service with retries and exponential backoff."""

    def _compute(self, label: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.cfg.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last: Exception | None = None
        for attempt in range(self.cfg.retries):
            try:
                resp = requests.post(
                    self.cfg.endpoint,
                    json={"input": [label]},
                    headers=headers,
                    timeout=self.cfg.timeout,
                )
                resp.raise_for_status()
                payload = resp.json()
                vec = np.asarray(payload["data"][0]["embedding"], dtype=float)
                if vec.shape != (self.cfg.dim,):
                    raise StateMismatchError(
                        f"service returned dimension {vec.shape[0]}, configured F={self.cfg.dim}"
                    )
                return vec
            except StateMismatchError:
                raise
            except Exception as exc:  # transport / HTTP / schema
                last = exc
                if attempt + 1 < self.cfg.retries:
                    time.sleep(self.cfg.backoff * (2**attempt))
        raise ProviderError(
            f"embedding endpoint failed after {self.cfg.retries} attempts: {last}"
        )


def make_label_provider(cfg: ProviderConfig) -> LabelProvider:
    if cfg.kind == "remote":
        return RemoteLabelProvider(cfg)
    return MockLabelProvider(cfg)


def embed_label(label: str, cfg: ProviderConfig) -> np.ndarray:
    return make_label_provider(cfg).embed(label)


class PersistentLabelCache:
    """JSON-lines sidecar cache: one ``{"label":…, "vector":…}`` per line.

    Keyed by (provider kind, F, label); kind and F are baked into the
    file name by the caller. Appends are single-writer; reads snapshot.
    """

    def __init__(self, path: str | FsPath):
        self.path = FsPath(path)
        self._mem: dict[str, np.ndarray] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self._mem[obj["label"]] = np.asarray(obj["vector"], dtype=float)

    def __len__(self) -> int:
        return len(self._mem)

    def get(self, label: str) -> np.ndarray | None:
        return self._mem.get(label)

    def put(self, label: str, vector: np.ndarray) -> None:
        if label in self._mem:
            return
        self._mem[label] = np.asarray(vector, dtype=float)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"label": label, "vector": list(map(float, vector))}) + "\n")


class CachingLabelProvider(LabelProvider):
    """Wraps any provider with a persistent JSON-lines cache."""

    def __init__(self, inner: LabelProvider, cache: PersistentLabelCache):
        super().__init__(inner.cfg)
        self.inner = inner
        self.store = cache

    def _compute(self, label: str) -> np.ndarray:
        hit = self.store.get(label)
        if hit is not None:
            return hit
        vec = self.inner.embed(label)
        self.store.put(label, vec)
        return vec


def cache_path_for(artifact_path: str | FsPath, cfg: ProviderConfig) -> FsPath:
    p = FsPath(artifact_path)
    return p.with_name(f"{p.name}.labels-{cfg.kind}-F{cfg.dim}.jsonl")


def path_label_embedding(
    path: GraphPath, vectors: Mapping[str, np.ndarray]
) -> np.ndarray:
    """Position-ordered concatenation of the path vertices' label embeddings."""
    parts = []
    for vid in path.vertices:
        if vid not in vectors:
            raise InputError(f"no label embedding for path vertex {vid!r}")
        parts.append(np.asarray(vectors[vid], dtype=float))
    return np.concatenate(parts)


def concat_label_embedding(labels: Iterable[str], provider: LabelProvider) -> np.ndarray:
    return np.concatenate([provider.embed(lab) for lab in labels])


def nearest_label(
    probe: np.ndarray, g: Graph, vectors: Mapping[str, np.ndarray]
) -> tuple[str, float]:
    """Exact top-1 cosine scan over data-vertex embeddings.

    Ties break to the lexicographically smaller vertex id.
    """
    if len(g.vertices) == 0:
        raise InputError("cannot search an empty graph")
    probe = np.asarray(probe, dtype=float)
    norm = np.linalg.norm(probe)
    if norm == 0.0:
        raise InputError("zero-norm probe vector")
    best_id: str | None = None
    best_sim = -np.inf
    for vid in sorted(g.vertices):
        vec = vectors.get(vid)
        if vec is None:
            raise InputError(f"no precomputed embedding for data vertex {vid!r}")
        denom = norm * np.linalg.norm(vec)
        sim = float(np.dot(probe, vec) / denom) if denom > 0 else -np.inf
        if sim > best_sim + 1e-15:
            best_sim = sim
            best_id = vid
    assert best_id is not None
    return best_id, best_sim


def graph_label_embeddings(g: Graph, provider: LabelProvider) -> dict[str, np.ndarray]:
    """Per-vertex label embeddings for a whole graph."""
    return {vid: provider.embed(v.label) for vid, v in g.vertices.items()}
