"""End-to-end orchestration: build retrieval artifacts, answer queries.

Offline, the engine embeds every vertex label, computes per-vertex
dominance embeddings, enumerates fixed-length paths, and packs them
into the R*-tree. Online, a question flows through extraction,
normalization, decomposition, wildcard completion, exact matching, and
prompt-based answer generation; when nothing matches exactly, the
1-hop fallback neighborhood feeds the prompt instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dominance import CountOracle, GatEmbedder, NodeEmbedder, graph_dominance_embeddings
from .embeddings import (
    LabelProvider,
    ProviderConfig,
    graph_label_embeddings,
    make_label_provider,
    path_label_embedding,
)
from .errors import CapExceededError, InputError
from .generation import (
    UNABLE,
    AnswerProvider,
    AnswerRecord,
    ExactBindingAnswerer,
    generate_answer,
    render_subgraph_prompt,
)
from .graph import Graph, QueryGraph, enumerate_paths, graph_diameter
from .matcher import MatchResult, match_query
from .querypipe import (
    CompletedPlan,
    ExtractionProvider,
    complete_unknown_labels,
    decompose_into_paths,
    enumerate_completions,
    extract_query_graph,
    normalize_entities,
    structured_bypass,
)
from .rstar import IndexEntry, RStarIndex


@dataclass
class EngineCaps:
    completion_cap: int = 10_000
    assembly_cap: int = 100_000
    fallback_cap: int = 50
    substructure_cap: int = 32
    token_budget: int = 1200


@dataclass
class QueryOutcome:
    record: AnswerRecord
    match: MatchResult | None
    plan_json: dict | None
    label_candidates: dict | None
    normalization: dict
    error: str | None = None

    def to_json(self) -> dict:
        out = {
            "answer": self.record.answer,
            "mode": self.record.mode,
            "raw": self.record.raw,
            "bindings": [m.to_json() for m in self.match.exact] if self.match else [],
            "stats": self.match.stats.to_json() if self.match else None,
            "plan": self.plan_json,
            "label_candidates": self.label_candidates,
            "normalization": self.normalization,
        }
        if self.error:
            out["error"] = self.error
        return out


def build_index_entries(
    g: Graph,
    l: int,
    label_vectors: dict[str, np.ndarray],
    dom_vectors: dict[str, np.ndarray],
) -> list[IndexEntry]:
    entries = []
    for p in enumerate_paths(g, l):
        entries.append(
            IndexEntry(
                path=p,
                labels=tuple(g.label(v) for v in p.vertices),
                o0=path_label_embedding(p, label_vectors),
                o=np.concatenate([dom_vectors[v] for v in p.vertices]),
            )
        )
    return entries


class RetrievalEngine:
    """Holds a data graph plus its built artifacts and answers queries."""

    def __init__(
        self,
        g: Graph,
        label_provider: LabelProvider,
        embedder: NodeEmbedder,
        caps: EngineCaps | None = None,
        extraction: ExtractionProvider = structured_bypass,
    ):
        self.g = g
        self.label_provider = label_provider
        self.embedder = embedder
        self.caps = caps or EngineCaps()
        self.extraction = extraction
        self.label_vectors = graph_label_embeddings(g, label_provider)
        self.dom_vectors = graph_dominance_embeddings(g, embedder)
        self._indexes: dict[int, RStarIndex] = {}

    @staticmethod
    def with_count_oracle(
        g: Graph, provider_cfg: ProviderConfig | None = None, dom_dim: int = 8, **kw
    ) -> "RetrievalEngine":
        cfg = provider_cfg or ProviderConfig(kind="count-oracle")
        return RetrievalEngine(g, make_label_provider(cfg), CountOracle(dom_dim), **kw)

    def index_for(self, l: int) -> RStarIndex:
        idx = self._indexes.get(l)
        if idx is None:
            entries = build_index_entries(self.g, l, self.label_vectors, self.dom_vectors)
            idx = RStarIndex.build(
                entries,
                path_length=l,
                label_dim=self.label_provider.dim,
                dom_dim=self.embedder.out_dim,
                meta={"graph_fingerprint": self.g.fingerprint()},
            )
            self._indexes[l] = idx
        return idx

    def adopt_index(self, idx: RStarIndex) -> None:
        fp = idx.meta.get("graph_fingerprint")
        if fp and fp != self.g.fingerprint():
            from .errors import StateMismatchError

            raise StateMismatchError("index was built over a different graph")
        self._indexes[idx.path_length] = idx

    # -- online path ------------------------------------------------------------

    def prepare_query(self, text: str) -> tuple[QueryGraph, dict]:
        q_raw = extract_query_graph(text, self.extraction)
        q, provenance = normalize_entities(
            q_raw, self.g, self.label_provider, self.label_vectors
        )
        prov_json = {
            vid: {
                "original": rec.original_label,
                "mapped": rec.mapped_label,
                "vertex": rec.mapped_vertex,
                "similarity": round(rec.similarity, 6),
            }
            for vid, rec in provenance.items()
        }
        return q, prov_json

    def match(self, q: QueryGraph, l: int | None = None) -> tuple[MatchResult, dict, dict]:
        """Decompose, complete, and match; returns (result, plan, candidates)."""
        use_l = l if l is not None else graph_diameter(q)
        plan = decompose_into_paths(q, use_l)
        idx = self.index_for(use_l)
        label_map_json: dict = {}
        if q.unknown_ids:
            label_map = complete_unknown_labels(plan, q, idx, self.label_provider)
            label_map_json = label_map.to_json()
            if label_map.empty_vertices:
                completions: list[CompletedPlan] = []
            else:
                completions = enumerate_completions(
                    plan, q, label_map, cap=self.caps.completion_cap
                )
        else:
            completions = [CompletedPlan(assignment={})]
        result = match_query(
            q,
            plan,
            completions,
            idx,
            self.g,
            self.label_provider,
            self.embedder,
            assembly_cap=self.caps.assembly_cap,
            fallback_cap=self.caps.fallback_cap,
        )
        return result, plan.to_json(), label_map_json

    def answer(
        self,
        text: str,
        l: int | None = None,
        provider: AnswerProvider | None = None,
    ) -> QueryOutcome:
        q, prov_json = self.prepare_query(text)
        result, plan_json, label_map_json = self.match(q, l)
        if result.exact or (result.fallback and not result.fallback.empty):
            prompt = render_subgraph_prompt(
                result, self.g, text, token_budget=self.caps.token_budget
            )
            answerer = provider or ExactBindingAnswerer(result, q, self.g)
            record = generate_answer(prompt, answerer, result.mode)
        else:
            record = AnswerRecord(answer=UNABLE, raw="", mode="fallback", prompt=None)
        return QueryOutcome(
            record=record,
            match=result,
            plan_json=plan_json,
            label_candidates=label_map_json,
            normalization=prov_json,
        )


@dataclass
class BuildReport:
    vertex_count: int
    edge_count: int
    path_count: int
    l: int
    node_count: int
    height: int
    seconds: float

    def to_json(self) -> dict:
        return {
            "vertices": self.vertex_count,
            "edges": self.edge_count,
            "indexed_paths": self.path_count,
            "l": self.l,
            "index_nodes": self.node_count,
            "index_height": self.height,
            "seconds": round(self.seconds, 4),
        }


def build_with_report(engine: RetrievalEngine, l: int) -> tuple[RStarIndex, BuildReport]:
    start = time.perf_counter()
    idx = engine.index_for(l)
    elapsed = time.perf_counter() - start
    report = BuildReport(
        vertex_count=len(engine.g.vertices),
        edge_count=len(engine.g.edges),
        path_count=len(idx.entries),
        l=l,
        node_count=idx.node_count(),
        height=idx.height(),
        seconds=elapsed,
    )
    return idx, report
