"""Knowledge-graph data model: vertices, directed edges, paths, star subgraphs.

Edges are stored directed, but everything that matters for retrieval
(adjacency, path enumeration, star construction, diameter) uses the
undirected view: relations are treated symmetrically throughout.

The text format is a flat record stream:

    (<id><|><label><|><description>)        node, 3 fields
    (<id><|><src><|><dst><|><description>)  edge, 4 fields

records separated by ``#`` and terminated by ``<|COMPLETE|>``.
Query documents use the same grammar with the reserved label ``UNK``
marking the vertex whose binding is being asked for.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import GraphParseError, InputError

UNKNOWN_LABEL = "UNK"

FIELD_SEP = "<|>"
RECORD_SEP = "#"
TERMINATOR = "<|COMPLETE|>"


@dataclass(frozen=True)
class Vertex:
    id: str
    label: str
    description: str = ""

    @property
    def is_unknown(self) -> bool:
        return self.label == UNKNOWN_LABEL


@dataclass(frozen=True)
class Edge:
    id: str
    src: str
    dst: str
    description: str = ""

    def pair(self) -> tuple[str, str]:
        """Unordered endpoint pair, used for the undirected view."""
        return (self.src, self.dst) if self.src <= self.dst else (self.dst, self.src)


@dataclass(frozen=True)
class Path:
    """A simple path: ``l+1`` vertex ids joined by ``l`` edge ids."""

    vertices: tuple[str, ...]
    edges: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) != len(self.edges) + 1:
            raise ValueError("path needs exactly one more vertex than edges")
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError(f"path repeats a vertex: {self.vertices}")

    @property
    def length(self) -> int:
        return len(self.edges)

    def reversed(self) -> "Path":
        return Path(tuple(reversed(self.vertices)), tuple(reversed(self.edges)))

    def signature(self) -> tuple[str, ...]:
        """Orientation-independent key: the lexicographically smaller reading."""
        rev = tuple(reversed(self.vertices))
        return min(self.vertices, rev)


class Graph:
    """Immutable vertex/edge store with an undirected adjacency view.

    Duplicate edge records for the same ordered (src, dst) pair are
    collapsed to the first occurrence; self-loops are rejected because
    the star/substructure machinery has no meaning for them.
    """

    allow_unknown = False

    def __init__(self, vertices: Iterable[Vertex], edges: Iterable[Edge]):
        self.vertices: dict[str, Vertex] = {}
        for v in vertices:
            if v.id in self.vertices:
                raise InputError(f"duplicate vertex id {v.id!r}")
            if not v.label:
                raise InputError(f"vertex {v.id!r} has an empty label")
            if v.is_unknown and not self.allow_unknown:
                raise InputError(f"reserved label {UNKNOWN_LABEL!r} on data vertex {v.id!r}")
            self.vertices[v.id] = v

        self.edges: list[Edge] = []
        self._edge_by_id: dict[str, Edge] = {}
        seen_pairs: set[tuple[str, str]] = set()
        for e in edges:
            if e.src == e.dst:
                raise InputError(f"self-loop edge {e.id!r} on {e.src!r}")
            if e.src not in self.vertices or e.dst not in self.vertices:
                raise InputError(f"edge {e.id!r} references a missing vertex")
            if e.id in self._edge_by_id:
                raise InputError(f"duplicate edge id {e.id!r}")
            if (e.src, e.dst) in seen_pairs:
                continue
            seen_pairs.add((e.src, e.dst))
            self.edges.append(e)
            self._edge_by_id[e.id] = e

        self.adjacency: dict[str, set[str]] = {vid: set() for vid in self.vertices}
        self._pair_edges: dict[tuple[str, str], list[str]] = {}
        for e in self.edges:
            self.adjacency[e.src].add(e.dst)
            self.adjacency[e.dst].add(e.src)
            self._pair_edges.setdefault(e.pair(), []).append(e.id)
        for ids in self._pair_edges.values():
            ids.sort()

    # -- lookups ---------------------------------------------------------

    def vertex(self, vid: str) -> Vertex:
        try:
            return self.vertices[vid]
        except KeyError:
            raise InputError(f"unknown vertex id {vid!r}") from None

    def edge(self, eid: str) -> Edge:
        try:
            return self._edge_by_id[eid]
        except KeyError:
            raise InputError(f"unknown edge id {eid!r}") from None

    def label(self, vid: str) -> str:
        return self.vertex(vid).label

    def edge_between(self, a: str, b: str) -> Edge | None:
        """Deterministic representative edge for an unordered vertex pair."""
        key = (a, b) if a <= b else (b, a)
        ids = self._pair_edges.get(key)
        return self._edge_by_id[ids[0]] if ids else None

    def has_adjacency(self, a: str, b: str) -> bool:
        return b in self.adjacency.get(a, ())

    def degree(self, vid: str) -> int:
        return len(self.adjacency[vid])

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, vid: str) -> bool:
        return vid in self.vertices

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        parts = []
        for vid in sorted(self.vertices):
            v = self.vertices[vid]
            parts.append(f"({v.id}{FIELD_SEP}{v.label}{FIELD_SEP}{v.description})")
        for e in sorted(self.edges, key=lambda e: e.id):
            parts.append(f"({e.id}{FIELD_SEP}{e.src}{FIELD_SEP}{e.dst}{FIELD_SEP}{e.description})")
        parts.append(TERMINATOR)
        return RECORD_SEP.join(parts)

    def to_json(self) -> dict:
        return {
            "vertices": [
                {"id": v.id, "label": v.label, "description": v.description}
                for v in (self.vertices[k] for k in sorted(self.vertices))
            ],
            "edges": [
                {"id": e.id, "src": e.src, "dst": e.dst, "description": e.description}
                for e in sorted(self.edges, key=lambda e: e.id)
            ],
        }

    def fingerprint(self) -> str:
        import hashlib

        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


class QueryGraph(Graph):
    """Graph whose vertices may carry the reserved ``UNK`` label."""

    allow_unknown = True

    @property
    def unknown_ids(self) -> list[str]:
        return sorted(v.id for v in self.vertices.values() if v.is_unknown)


@dataclass(frozen=True)
class StarSubgraph:
    """A center vertex with a subset of its 1-hop neighbors."""

    center: str
    leaves: frozenset[str]
    edges: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.center in self.leaves:
            raise ValueError("star center cannot be its own leaf")


@dataclass
class ParseReport:
    vertex_count: int = 0
    edge_count: int = 0
    skipped_records: int = 0
    diagnostics: list[str] = field(default_factory=list)


def _split_records(text: str) -> list[str]:
    stripped = text.strip()
    if TERMINATOR not in stripped:
        raise GraphParseError(f"document is missing the {TERMINATOR!r} terminator")
    body = stripped.split(TERMINATOR, 1)[0]
    return [r.strip() for r in body.split(RECORD_SEP) if r.strip()]


def parse_graph_document(
    text: str, *, query: bool = False
) -> tuple[Graph, ParseReport]:
    """Parse the delimiter format into a Graph (or QueryGraph with ``query=True``).

    Well-formed records are kept; malformed ones (wrong field count,
    empty required fields, dangling endpoints, duplicates, self-loops)
    are skipped and counted in the report with a diagnostic each.
    """
    report = ParseReport()
    vertices: dict[str, Vertex] = {}
    node_records: list[Vertex] = []
    edge_records: list[tuple[str, str, str, str]] = []

    for rec in _split_records(text):
        inner = rec
        if inner.startswith("(") and inner.endswith(")"):
            inner = inner[1:-1]
        fields = inner.split(FIELD_SEP)
        if len(fields) == 3:
            vid, label, desc = (f.strip() for f in fields)
            if not vid or not label:
                report.skipped_records += 1
                report.diagnostics.append(f"node record missing id or label: {rec!r}")
                continue
            if label == UNKNOWN_LABEL and not query:
                report.skipped_records += 1
                report.diagnostics.append(f"reserved label in data graph: {rec!r}")
                continue
            if vid in vertices:
                report.skipped_records += 1
                report.diagnostics.append(f"duplicate vertex id {vid!r}")
                continue
            v = Vertex(vid, label, desc)
            vertices[vid] = v
            node_records.append(v)
        elif len(fields) == 4:
            eid, src, dst, desc = (f.strip() for f in fields)
            if not eid or not src or not dst:
                report.skipped_records += 1
                report.diagnostics.append(f"edge record missing a field: {rec!r}")
                continue
            edge_records.append((eid, src, dst, desc))
        else:
            report.skipped_records += 1
            report.diagnostics.append(f"unrecognized record shape: {rec!r}")

    edges: list[Edge] = []
    seen_eids: set[str] = set()
    seen_pairs: set[tuple[str, str]] = set()
    for eid, src, dst, desc in edge_records:
        if src not in vertices or dst not in vertices:
            report.skipped_records += 1
            report.diagnostics.append(f"edge {eid!r} references unknown vertex {src if src not in vertices else dst!r}")
            continue
        if src == dst:
            report.skipped_records += 1
            report.diagnostics.append(f"self-loop edge {eid!r} rejected")
            continue
        if eid in seen_eids or (src, dst) in seen_pairs:
            report.skipped_records += 1
            report.diagnostics.append(f"duplicate edge record {eid!r} ({src!r}->{dst!r})")
            continue
        seen_eids.add(eid)
        seen_pairs.add((src, dst))
        edges.append(Edge(eid, src, dst, desc))

    cls = QueryGraph if query else Graph
    g = cls(node_records, edges)
    report.vertex_count = len(g.vertices)
    report.edge_count = len(g.edges)
    return g, report


def parse_graph_json(payload: str | Mapping, *, query: bool = False) -> Graph:
    """JSON mirror of the text format: {"vertices": [...], "edges": [...]}."""
    obj = json.loads(payload) if isinstance(payload, str) else payload
    try:
        vertices = [
            Vertex(str(v["id"]), str(v["label"]), str(v.get("description", "")))
            for v in obj["vertices"]
        ]
        edges = [
            Edge(str(e["id"]), str(e["src"]), str(e["dst"]), str(e.get("description", "")))
            for e in obj.get("edges", [])
        ]
    except (KeyError, TypeError) as exc:
        raise GraphParseError(f"bad JSON graph payload: {exc}") from exc
    cls = QueryGraph if query else Graph
    return cls(vertices, edges)


def enumerate_paths(g: Graph, l: int) -> list[Path]:
    """All simple paths with exactly ``l`` edges, one canonical orientation each.

    Canonical orientation puts the lexicographically smaller endpoint id
    first, so each undirected path is emitted exactly once. Consecutive
    vertices are joined by the smallest-id edge connecting the pair.
    """
    if l < 1:
        raise InputError(f"path length must be >= 1, got {l}")
    out: list[Path] = []

    def extend(chain: list[str], visited: set[str]) -> None:
        if len(chain) == l + 1:
            if chain[0] < chain[-1]:
                eids = tuple(
                    g.edge_between(a, b).id for a, b in zip(chain, chain[1:])
                )
                out.append(Path(tuple(chain), eids))
            return
        for nxt in sorted(g.adjacency[chain[-1]]):
            if nxt not in visited:
                visited.add(nxt)
                chain.append(nxt)
                extend(chain, visited)
                chain.pop()
                visited.remove(nxt)

    for start in sorted(g.vertices):
        extend([start], {start})
    return out


def star_subgraph(g: Graph, vid: str) -> StarSubgraph:
    """The 1-hop star around ``vid``: all neighbors plus incident edges."""
    g.vertex(vid)
    leaves = frozenset(g.adjacency[vid])
    eids = tuple(
        sorted(e.id for e in g.edges if vid in (e.src, e.dst))
    )
    return StarSubgraph(vid, leaves, eids)


def enumerate_substructures(
    star: StarSubgraph, cap: int = 32, seed: int = 0
) -> list[StarSubgraph]:
    """Proper substructures of a star: same center, strict leaf subsets.

    The full subset lattice (2^n - 1 proper subsets, including the bare
    center) is returned when it fits under ``cap``. Otherwise a
    deterministic seeded sample of size ``cap`` is drawn that always
    contains the bare center and, space permitting, every
    single-leaf-removed star; the remainder is sampled uniformly from
    the other proper subsets.
    """
    if not star.leaves:
        raise InputError(f"star at {star.center!r} has no leaves to drop")
    leaves = sorted(star.leaves)
    n = len(leaves)
    total = (1 << n) - 1  # proper subsets only

    def mk(subset: tuple[str, ...]) -> StarSubgraph:
        return StarSubgraph(star.center, frozenset(subset))

    if total <= cap:
        subs = []
        for mask in range(total):  # skips the full set (mask == total)
            subset = tuple(leaves[i] for i in range(n) if mask >> i & 1)
            subs.append(mk(subset))
        subs.sort(key=lambda s: (len(s.leaves), tuple(sorted(s.leaves))))
        return subs

    rng = random.Random(seed)
    chosen: list[tuple[str, ...]] = [()]
    singles = [tuple(x for x in leaves if x != drop) for drop in leaves]
    if 1 + len(singles) <= cap:
        chosen.extend(singles)
    else:
        chosen.extend(singles[i] for i in sorted(rng.sample(range(len(singles)), cap - 1)))
    seen = {frozenset(c) for c in chosen}
    while len(chosen) < cap:
        mask = rng.randrange(1, total)  # excludes empty (already in) and full set
        subset = frozenset(leaves[i] for i in range(n) if mask >> i & 1)
        if subset not in seen:
            seen.add(subset)
            chosen.append(tuple(sorted(subset)))
    subs = [mk(c) for c in chosen]
    subs.sort(key=lambda s: (len(s.leaves), tuple(sorted(s.leaves))))
    return subs


def connected_components(g: Graph) -> list[list[str]]:
    seen: set[str] = set()
    comps: list[list[str]] = []
    for start in sorted(g.vertices):
        if start in seen:
            continue
        comp = []
        dq = deque([start])
        seen.add(start)
        while dq:
            cur = dq.popleft()
            comp.append(cur)
            for nb in g.adjacency[cur]:
                if nb not in seen:
                    seen.add(nb)
                    dq.append(nb)
        comps.append(sorted(comp))
    return comps


def bfs_distances(g: Graph, start: str) -> dict[str, int]:
    dist = {start: 0}
    dq = deque([start])
    while dq:
        cur = dq.popleft()
        for nb in g.adjacency[cur]:
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                dq.append(nb)
    return dist


def graph_diameter(g: Graph) -> int:
    """Longest shortest-path length over the undirected view.

    Raises for disconnected graphs, naming the components.
    """
    comps = connected_components(g)
    if len(comps) != 1:
        heads = ", ".join("{" + ",".join(c[:4]) + ("…}" if len(c) > 4 else "}") for c in comps)
        raise InputError(f"graph is disconnected ({len(comps)} components: {heads})")
    best = 0
    for vid in g.vertices:
        dist = bfs_distances(g, vid)
        best = max(best, max(dist.values(), default=0))
    return best
