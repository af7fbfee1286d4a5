"""Query-side pipeline: extraction, normalization, decomposition, completion.

A natural-language question becomes a query graph whose target vertex
carries the reserved ``UNK`` label. Known entities are normalized onto
data-graph labels by exact cosine search, the graph is decomposed into
a cost-selected covering set of length-``l`` paths, and unknown labels
are completed from the path index into fully labeled plan instances.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .embeddings import LabelProvider, nearest_label
from .errors import CapExceededError, InputError
from .graph import (
    Graph,
    Path,
    QueryGraph,
    TERMINATOR,
    UNKNOWN_LABEL,
    graph_diameter,
    parse_graph_document,
    parse_graph_json,
)
from .rstar import RStarIndex, WildcardProbe

DEFAULT_COMPLETION_CAP = 10_000

ExtractionProvider = Callable[[str], str]


def structured_bypass(text: str) -> str:
    """Extraction provider that accepts the record grammar directly."""
    return text


def looks_structured(text: str) -> bool:
    return TERMINATOR in text or text.lstrip().startswith("{")


def extract_query_graph(
    text: str, provider: ExtractionProvider = structured_bypass
) -> QueryGraph:
    """Turn a question into a QueryGraph via the configured provider.

    The provider returns record-grammar (or JSON) text which is parsed
    here; an empty or unparseable response raises with the raw payload
    attached so the failure is debuggable.
    """
    if not text.strip():
        raise InputError("empty query text")
    raw = provider(text)
    if not raw or not raw.strip():
        raise InputError("extraction provider returned empty output")
    try:
        if raw.lstrip().startswith("{"):
            q = parse_graph_json(raw, query=True)
        else:
            q, _ = parse_graph_document(raw, query=True)
    except InputError as exc:
        raise InputError(
            f"could not parse extraction output ({exc}); raw response: {raw[:500]!r}"
        ) from exc
    if len(q.vertices) == 0:
        raise InputError(f"extraction produced no vertices; raw response: {raw[:500]!r}")
    return q


@dataclass
class NormalizationRecord:
    original_label: str
    mapped_vertex: str
    mapped_label: str
    similarity: float
    low_confidence: bool = False


def normalize_entities(
    q: QueryGraph,
    g: Graph,
    provider: LabelProvider,
    data_vectors: Mapping[str, np.ndarray],
    min_similarity: float | None = None,
) -> tuple[QueryGraph, dict[str, NormalizationRecord]]:
    """Replace each known query label with its nearest data-graph label.

    Unknown vertices are untouched. Original labels are kept in the
    returned provenance map; mappings below ``min_similarity`` (when
    set) are flagged, never dropped.
    """
    if len(g.vertices) == 0:
        raise InputError("cannot normalize against an empty data graph")
    from .graph import Vertex

    provenance: dict[str, NormalizationRecord] = {}
    new_vertices = []
    for vid in sorted(q.vertices):
        v = q.vertices[vid]
        if v.is_unknown:
            new_vertices.append(v)
            continue
        probe = provider.embed(v.label)
        target, sim = nearest_label(probe, g, data_vectors)
        mapped = g.label(target)
        rec = NormalizationRecord(
            original_label=v.label,
            mapped_vertex=target,
            mapped_label=mapped,
            similarity=sim,
            low_confidence=(min_similarity is not None and sim < min_similarity),
        )
        provenance[vid] = rec
        new_vertices.append(Vertex(v.id, mapped, v.description))
    normalized = QueryGraph(new_vertices, list(q.edges))
    return normalized, provenance


# -- cost-model decomposition -----------------------------------------------------


@dataclass
class QueryPlan:
    paths: list[Path]
    l: int
    cost: float

    def covered_edges(self, q: QueryGraph) -> set[tuple[str, str]]:
        pairs = set()
        for p in self.paths:
            for a, b in zip(p.vertices, p.vertices[1:]):
                pairs.add((a, b) if a <= b else (b, a))
        return pairs

    def to_json(self) -> dict:
        return {
            "l": self.l,
            "cost": self.cost,
            "paths": [list(p.vertices) for p in self.paths],
        }


def valid_length_range(q: QueryGraph) -> tuple[int, int]:
    d_q = graph_diameter(q)
    return (max(1, -(-d_q // 2)), d_q)


def _paths_through(q: QueryGraph, vid: str, l: int) -> list[Path]:
    """All simple length-l paths containing ``vid``, canonical orientation."""
    out: dict[tuple[str, ...], Path] = {}

    def extend(chain: list[str], visited: set[str]) -> None:
        if len(chain) == l + 1:
            if vid in chain:
                verts = tuple(chain)
                if verts[0] > verts[-1]:
                    verts = tuple(reversed(verts))
                if verts not in out:
                    eids = tuple(q.edge_between(a, b).id for a, b in zip(verts, verts[1:]))
                    out[verts] = Path(verts, eids)
            return
        for nxt in sorted(q.adjacency[chain[-1]]):
            if nxt not in visited:
                visited.add(nxt)
                chain.append(nxt)
                extend(chain, visited)
                chain.pop()
                visited.remove(nxt)

    for start in sorted(q.vertices):
        extend([start], {start})
    return [out[k] for k in sorted(out)]


def _all_paths(q: QueryGraph, l: int) -> list[Path]:
    from .graph import enumerate_paths

    return enumerate_paths(q, l)


def path_weight(q: QueryGraph, p: Path) -> float:
    """Degree-based preference: denser paths first (weights are negated sums)."""
    return -float(sum(q.degree(v) for v in p.vertices))


def decompose_into_paths(q: QueryGraph, l: int) -> QueryPlan:
    """Cost-model decomposition into a covering set of length-l paths.

    Every candidate initial path anchored at the highest-degree vertex
    seeds a greedy cover that repeatedly picks the extension with
    (fewest already-covered edges, smallest weight, lexicographically
    smallest signature); the cheapest complete cover wins. Feasibility
    requires every query edge to lie on at least one simple length-l
    path; the recommended range for ``l`` is half the query diameter
    (rounded up) through the diameter itself.
    """
    if len(q.edges) == 0:
        raise InputError("query graph has no edges to decompose")
    lo, hi = valid_length_range(q)
    range_note = f"valid path lengths for this query are [{lo}, {hi}]"
    if l < 1:
        raise InputError(f"path length must be >= 1; {range_note}")

    all_paths = _all_paths(q, l)
    edge_pairs = {e.pair() for e in q.edges}
    coverable = set()
    for p in all_paths:
        for a, b in zip(p.vertices, p.vertices[1:]):
            coverable.add((a, b) if a <= b else (b, a))
    if coverable != edge_pairs:
        missing = sorted(edge_pairs - coverable)
        raise InputError(
            f"no simple path of length {l} covers edge(s) {missing[:3]}; {range_note}"
        )

    start = min(q.vertices, key=lambda vid: (-q.degree(vid), vid))
    seeds = _paths_through(q, start, l)
    if not seeds:
        raise InputError(f"no length-{l} path touches the start vertex; {range_note}")

    def path_edges(p: Path) -> set[tuple[str, str]]:
        return {(a, b) if a <= b else (b, a) for a, b in zip(p.vertices, p.vertices[1:])}

    best_plan: list[Path] | None = None
    best_cost = float("inf")
    best_sig: tuple | None = None
    for seed in seeds:
        local = [seed]
        covered = path_edges(seed)
        vertices_touched = set(seed.vertices)
        cost = path_weight(q, seed)
        stuck = False
        while covered != edge_pairs:
            candidates = []
            for p in all_paths:
                pe = path_edges(p)
                if not pe - covered:
                    continue
                connects = bool(set(p.vertices) & vertices_touched)
                overlap = len(pe & covered)
                candidates.append((not connects, overlap, path_weight(q, p), p.vertices, p))
            if not candidates:
                stuck = True
                break
            candidates.sort(key=lambda c: c[:4])
            chosen = candidates[0][4]
            local.append(chosen)
            covered |= path_edges(chosen)
            vertices_touched |= set(chosen.vertices)
            cost += path_weight(q, chosen)
        if stuck:
            continue
        sig = tuple(sorted(p.vertices for p in local))
        if cost < best_cost or (cost == best_cost and (best_sig is None or sig < best_sig)):
            best_cost = cost
            best_plan = local
            best_sig = sig
    if best_plan is None:
        raise InputError(f"could not cover all query edges with length-{l} paths; {range_note}")
    ordered = sorted(best_plan, key=lambda p: p.vertices)
    return QueryPlan(paths=ordered, l=l, cost=best_cost)


# -- label completion ---------------------------------------------------------------


@dataclass
class LabelCandidateMap:
    candidates: dict[str, list[str]]
    empty_vertices: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"candidates": self.candidates, "empty": self.empty_vertices}


def wildcard_probes_for(
    plan: QueryPlan, q: QueryGraph, provider: LabelProvider
) -> list[WildcardProbe]:
    """Both orientations of every plan path that crosses an unknown vertex."""
    unknown = set(q.unknown_ids)
    f = provider.dim
    probes: list[WildcardProbe] = []
    for p in plan.paths:
        if not unknown & set(p.vertices):
            continue
        for verts in (p.vertices, tuple(reversed(p.vertices))):
            labels: list[str | None] = []
            unknown_at: dict[int, str] = {}
            blocks = []
            for pos, vid in enumerate(verts):
                lab = q.label(vid)
                if lab == UNKNOWN_LABEL:
                    labels.append(None)
                    unknown_at[pos] = vid
                    blocks.append(np.zeros(f))
                else:
                    labels.append(lab)
                    blocks.append(provider.embed(lab))
            if not unknown_at:
                continue
            if len(unknown_at) == len(verts):
                raise InputError(
                    f"plan path {verts} has every position unknown and cannot be completed"
                )
            probes.append(WildcardProbe(tuple(labels), np.concatenate(blocks), unknown_at))
    return probes


def complete_unknown_labels(
    plan: QueryPlan, q: QueryGraph, idx: RStarIndex, provider: LabelProvider
) -> LabelCandidateMap:
    """Candidate labels for every unknown vertex, unioned across plan paths."""
    unknown = q.unknown_ids
    if not unknown:
        return LabelCandidateMap(candidates={})
    on_paths = set()
    for p in plan.paths:
        on_paths.update(p.vertices)
    off_plan = [u for u in unknown if u not in on_paths]
    if off_plan:
        raise InputError(f"unknown vertices {off_plan} are on no plan path")
    probes = wildcard_probes_for(plan, q, provider)
    found, _stats = idx.retrieve_label_candidates(probes)
    candidates = {vid: found.get(vid, []) for vid in unknown}
    empty = [vid for vid, labs in candidates.items() if not labs]
    return LabelCandidateMap(candidates=candidates, empty_vertices=empty)


@dataclass
class CompletedPlan:
    """One fully labeled instantiation of the plan."""

    assignment: dict[str, str]  # unknown vertex id -> label

    def label_of(self, q: QueryGraph, vid: str) -> str:
        lab = q.label(vid)
        if lab == UNKNOWN_LABEL:
            return self.assignment[vid]
        return lab


def enumerate_completions(
    plan: QueryPlan,
    q: QueryGraph,
    label_map: LabelCandidateMap,
    cap: int = DEFAULT_COMPLETION_CAP,
) -> list[CompletedPlan]:
    """Cartesian product of candidate labels, lexicographic order, capped."""
    unknown = q.unknown_ids
    if not unknown:
        return [CompletedPlan(assignment={})]
    options = []
    for vid in unknown:
        labs = label_map.candidates.get(vid, [])
        if not labs:
            raise InputError(f"unknown vertex {vid!r} has no candidate labels")
        options.append(sorted(labs))
    total = 1
    for labs in options:
        total *= len(labs)
    if total > cap:
        raise CapExceededError(
            f"{total} label combinations exceed the cap of {cap}; raise the cap "
            "or refine the query"
        )
    return [
        CompletedPlan(assignment=dict(zip(unknown, combo)))
        for combo in itertools.product(*options)
    ]
