"""Exact subgraph matching: per-completion retrieval, conflict-free assembly,
the 1-hop fallback, and a brute-force oracle used by the test suite.

Assembled subgraphs are full isomorphic images of the query: bindings
are injective, every query edge maps onto a data adjacency (re-verified
here, independent of path bookkeeping), and vertex labels agree
position-wise. Candidate paths are probed in both orientations because
the index stores one canonical orientation per undirected path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dominance import NodeEmbedder
from .embeddings import LabelProvider
from .errors import CapExceededError, InputError, StateMismatchError
from .graph import Graph, Path, QueryGraph, UNKNOWN_LABEL
from .querypipe import CompletedPlan, QueryPlan
from .rstar import ExactProbe, RStarIndex, TraversalStats

DEFAULT_ASSEMBLY_CAP = 100_000
DEFAULT_FALLBACK_CAP = 50

Binding = dict[str, str]  # query vertex id -> data vertex id


@dataclass
class MatchedSubgraph:
    binding: Binding
    edge_ids: tuple[str, ...]

    def signature(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(self.binding.items()))

    def to_json(self) -> dict:
        return {"binding": dict(sorted(self.binding.items())), "edges": list(self.edge_ids)}


@dataclass
class FallbackSubgraph:
    vertex_ids: list[str]
    edge_ids: list[str]
    empty: bool = False

    def to_json(self) -> dict:
        return {"vertices": self.vertex_ids, "edges": self.edge_ids, "empty": self.empty}


@dataclass
class MatchStats:
    candidates_per_path: dict[str, int] = field(default_factory=dict)
    combinations_tried: int = 0
    conflicts: int = 0
    completions_matched: int = 0
    traversal: TraversalStats | None = None

    def to_json(self) -> dict:
        return {
            "candidates_per_path": self.candidates_per_path,
            "combinations_tried": self.combinations_tried,
            "conflicts": self.conflicts,
            "completions_matched": self.completions_matched,
            "traversal": self.traversal.to_json() if self.traversal else None,
        }


@dataclass
class MatchResult:
    exact: list[MatchedSubgraph]
    fallback: FallbackSubgraph | None
    stats: MatchStats

    @property
    def mode(self) -> str:
        return "exact" if self.exact else "fallback"

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "exact": [m.to_json() for m in self.exact],
            "fallback": self.fallback.to_json() if self.fallback else None,
            "stats": self.stats.to_json(),
        }


class StarEmbeddingCache:
    """Memoizes star embeddings by (center label, sorted leaf labels)."""

    def __init__(self, embedder: NodeEmbedder):
        self.embedder = embedder
        self._mem: dict[tuple, np.ndarray] = {}

    def embed(self, center_label: str, leaf_labels: Sequence[str]) -> np.ndarray:
        key = (center_label, tuple(sorted(leaf_labels)))
        hit = self._mem.get(key)
        if hit is None:
            hit = self.embedder.embed_star(center_label, sorted(leaf_labels))
            self._mem[key] = hit
        return hit


def completion_probes(
    plan: QueryPlan,
    q: QueryGraph,
    completion: CompletedPlan,
    label_provider: LabelProvider,
    stars: StarEmbeddingCache,
) -> list[tuple[ExactProbe, tuple[str, ...]]]:
    """Exact probes for every plan path under one label assignment.

    Each probe is paired with the query-vertex ids at its positions so
    candidate data paths convert directly into bindings. Both
    orientations are emitted.
    """

    def lab(vid: str) -> str:
        return completion.label_of(q, vid)

    node_dom: dict[str, np.ndarray] = {}
    for vid in q.vertices:
        leaf_labels = [lab(n) for n in q.adjacency[vid]]
        node_dom[vid] = stars.embed(lab(vid), leaf_labels)

    probes: list[tuple[ExactProbe, tuple[str, ...]]] = []
    for p in plan.paths:
        for verts in (p.vertices, tuple(reversed(p.vertices))):
            labels = tuple(lab(v) for v in verts)
            o0 = np.concatenate([label_provider.embed(x) for x in labels])
            o = np.concatenate([node_dom[v] for v in verts])
            probes.append((ExactProbe(labels, o0, o), verts))
    return probes


def candidate_bindings(
    plan: QueryPlan,
    q: QueryGraph,
    completion: CompletedPlan,
    idx: RStarIndex,
    label_provider: LabelProvider,
    stars: StarEmbeddingCache,
) -> tuple[list[list[Binding]], TraversalStats]:
    """Per plan path, all candidate bindings retrieved from the index."""
    probe_pairs = completion_probes(plan, q, completion, label_provider, stars)
    cand_lists, stats, _ = idx.retrieve_exact_candidates([pp[0] for pp in probe_pairs])
    per_path: list[list[Binding]] = []
    for path_i in range(len(plan.paths)):
        seen: set[tuple[tuple[str, str], ...]] = set()
        merged: list[Binding] = []
        # two probes per path: forward then reversed
        for k in (2 * path_i, 2 * path_i + 1):
            _, qvids = probe_pairs[k]
            for entry in cand_lists[k]:
                binding = dict(zip(qvids, entry.path.vertices))
                key = tuple(sorted(binding.items()))
                if key not in seen:
                    seen.add(key)
                    merged.append(binding)
        merged.sort(key=lambda b: tuple(sorted(b.items())))
        per_path.append(merged)
    return per_path, stats


def assemble_subgraphs(
    plan: QueryPlan,
    q: QueryGraph,
    g: Graph,
    per_path_bindings: Sequence[Sequence[Binding]],
    cap: int = DEFAULT_ASSEMBLY_CAP,
    stats: MatchStats | None = None,
) -> list[MatchedSubgraph]:
    """Join candidate paths into conflict-free, injective full bindings.

    Candidates are joined incrementally path by path; a partial binding
    dies as soon as one query vertex needs two data vertices or two
    query vertices claim the same data vertex. The combination cap
    guards the worst-case product before any work is done.
    """
    if len(per_path_bindings) != len(plan.paths):
        raise InputError("need one candidate list per plan path")
    total = 1
    for cands in per_path_bindings:
        total *= len(cands)
    if total > cap:
        raise CapExceededError(
            f"{total} assembly combinations exceed the cap of {cap}"
        )
    if total == 0:
        return []

    partials: list[tuple[Binding, frozenset[str]]] = [({}, frozenset())]
    for cands in per_path_bindings:
        nxt: list[tuple[Binding, frozenset[str]]] = []
        for binding, used in partials:
            for cand in cands:
                if stats is not None:
                    stats.combinations_tried += 1
                ok = True
                for qv, dv in cand.items():
                    bound = binding.get(qv)
                    if bound is not None:
                        if bound != dv:
                            ok = False
                            break
                    elif dv in used:
                        ok = False  # two query vertices on one data vertex
                        break
                if not ok:
                    if stats is not None:
                        stats.conflicts += 1
                    continue
                merged = dict(binding)
                merged.update(cand)
                nxt.append((merged, frozenset(merged.values())))
        partials = nxt
        if not partials:
            return []

    out: list[MatchedSubgraph] = []
    seen: set[tuple[tuple[str, str], ...]] = set()
    for binding, _ in partials:
        if not _edges_exist(q, g, binding):
            if stats is not None:
                stats.conflicts += 1
            continue
        edge_ids = _data_edges(q, g, binding)
        ms = MatchedSubgraph(binding, edge_ids)
        key = ms.signature()
        if key not in seen:
            seen.add(key)
            out.append(ms)
    out.sort(key=lambda m: m.signature())
    return out


def _edges_exist(q: QueryGraph, g: Graph, binding: Binding) -> bool:
    return all(
        g.has_adjacency(binding[e.src], binding[e.dst]) for e in q.edges
    )


def _data_edges(q: QueryGraph, g: Graph, binding: Binding) -> tuple[str, ...]:
    ids = []
    for e in q.edges:
        de = g.edge_between(binding[e.src], binding[e.dst])
        assert de is not None
        ids.append(de.id)
    return tuple(sorted(set(ids)))


def match_query(
    q: QueryGraph,
    plan: QueryPlan,
    completions: Sequence[CompletedPlan],
    idx: RStarIndex,
    g: Graph,
    label_provider: LabelProvider,
    embedder: NodeEmbedder,
    assembly_cap: int = DEFAULT_ASSEMBLY_CAP,
    fallback_cap: int = DEFAULT_FALLBACK_CAP,
) -> MatchResult:
    """Retrieve and assemble exact matches across all completions.

    Results are deduplicated by binding signature; when no completion
    assembles, the 1-hop fallback around the query's known entities is
    returned instead.
    """
    if plan.l != idx.path_length:
        raise StateMismatchError(
            f"plan decomposed at l={plan.l} but index holds l={idx.path_length}"
        )
    fp = idx.meta.get("graph_fingerprint")
    if fp and fp != g.fingerprint():
        raise StateMismatchError("index was built over a different graph")

    stats = MatchStats()
    agg = TraversalStats()
    stars = StarEmbeddingCache(embedder)
    results: list[MatchedSubgraph] = []
    seen: set[tuple[tuple[str, str], ...]] = set()
    for completion in completions:
        per_path, tstats = candidate_bindings(
            plan, q, completion, idx, label_provider, stars
        )
        _merge_traversal(agg, tstats)
        for p, cands in zip(plan.paths, per_path):
            key = "-".join(p.vertices)
            stats.candidates_per_path[key] = stats.candidates_per_path.get(key, 0) + len(cands)
        assembled = assemble_subgraphs(plan, q, g, per_path, assembly_cap, stats)
        if assembled:
            stats.completions_matched += 1
        for ms in assembled:
            key = ms.signature()
            if key not in seen:
                seen.add(key)
                results.append(ms)
    results.sort(key=lambda m: m.signature())
    stats.traversal = agg
    if results:
        return MatchResult(exact=results, fallback=None, stats=stats)
    return MatchResult(
        exact=[], fallback=fallback_subgraph(q, g, fallback_cap), stats=stats
    )


def _merge_traversal(agg: TraversalStats, new: TraversalStats) -> None:
    agg.nodes_visited += new.nodes_visited
    agg.leaf_nodes_visited += new.leaf_nodes_visited
    agg.entries_checked += new.entries_checked
    agg.nodes_pruned_semantic += new.nodes_pruned_semantic
    agg.nodes_pruned_structural += new.nodes_pruned_structural
    agg.early_exit = agg.early_exit or new.early_exit
    for level, count in new.per_level_counts.items():
        agg.per_level_counts[level] = agg.per_level_counts.get(level, 0) + count


def fallback_subgraph(
    q: QueryGraph, g: Graph, cap: int = DEFAULT_FALLBACK_CAP
) -> FallbackSubgraph:
    """Union of 1-hop stars around the query's known entities.

    Seeds resolve by label to the smallest-id data vertex; the vertex
    budget keeps seeds first, then neighbors by (degree desc, id).
    """
    by_label: dict[str, str] = {}
    for vid in sorted(g.vertices, reverse=True):
        by_label[g.label(vid)] = vid  # descending scan: last write is the smallest id
    seeds = []
    for vid in sorted(q.vertices):
        v = q.vertices[vid]
        if v.is_unknown:
            continue
        hit = by_label.get(v.label)
        if hit is not None and hit not in seeds:
            seeds.append(hit)
    if not seeds:
        return FallbackSubgraph(vertex_ids=[], edge_ids=[], empty=True)

    selected: list[str] = []
    for s in seeds:
        if len(selected) >= cap:
            break
        if s not in selected:
            selected.append(s)
    neighbors = set()
    for s in seeds:
        neighbors.update(g.adjacency[s])
    neighbors -= set(selected)
    for nb in sorted(neighbors, key=lambda v: (-g.degree(v), v)):
        if len(selected) >= cap:
            break
        selected.append(nb)
    chosen = set(selected)
    edge_ids = sorted(
        e.id for e in g.edges if e.src in chosen and e.dst in chosen
    )
    return FallbackSubgraph(vertex_ids=sorted(selected), edge_ids=edge_ids)


def brute_force_match(
    q: QueryGraph, g: Graph, max_vertices: int = 50
) -> list[MatchedSubgraph]:
    """Exhaustive backtracking oracle for the exact-match semantics.

    Finds every injective, label-consistent mapping of query vertices
    onto data vertices where each query edge lands on a data adjacency
    (undirected view); ``UNK`` labels match anything. Guarded by a
    vertex budget because the search is exponential.
    """
    if len(g.vertices) > max_vertices:
        raise InputError(
            f"brute force guard: graph has {len(g.vertices)} vertices (> {max_vertices})"
        )
    qids = sorted(q.vertices, key=lambda v: (-q.degree(v), v))
    data_ids = sorted(g.vertices)
    results: list[MatchedSubgraph] = []

    def backtrack(i: int, binding: Binding, used: set[str]) -> None:
        if i == len(qids):
            results.append(MatchedSubgraph(dict(binding), _data_edges(q, g, binding)))
            return
        qv = qids[i]
        want = q.label(qv)
        bound_neighbors = [
            (nb, binding[nb]) for nb in q.adjacency[qv] if nb in binding
        ]
        for dv in data_ids:
            if dv in used:
                continue
            if want != UNKNOWN_LABEL and g.label(dv) != want:
                continue
            if any(not g.has_adjacency(dv, dnb) for _, dnb in bound_neighbors):
                continue
            binding[qv] = dv
            used.add(dv)
            backtrack(i + 1, binding, used)
            del binding[qv]
            used.remove(dv)

    backtrack(0, {}, set())
    results.sort(key=lambda m: m.signature())
    return results


def verify_isomorphism(q: QueryGraph, g: Graph, ms: MatchedSubgraph) -> bool:
    """Independent re-check of the MatchedSubgraph invariants."""
    binding = ms.binding
    if set(binding) != set(q.vertices):
        return False
    if len(set(binding.values())) != len(binding):
        return False
    for vid, dv in binding.items():
        lab = q.label(vid)
        if lab != UNKNOWN_LABEL and g.label(dv) != lab:
            return False
    return _edges_exist(q, g, binding)
