"""R*-tree over per-path embedding pairs with dual bounding rectangles.

Each indexed path carries two vectors: a label embedding ``o0``
(semantic identity, per-position concatenation) and a dominance
embedding ``o`` (structural containment). Every tree node keeps one MBR
per space, so traversal can prune on either test:

* semantic — the probe's ``o0`` must fall inside ``MBR_0`` (within eps);
* structural — the probe's upward dominance cone ``{z : o <= z}`` must
  intersect ``MBR``, i.e. ``o <= MBR.high`` element-wise.

Traversal is best-first on a max-heap keyed by the L1 norm of a node's
absolute upper MBR corner. That key upper-bounds the L1 norm of any
contained entry, so once the top key drops below the smallest probe
norm no probe can match anything and the walk stops early.

At leaves, label identity is compared on the label strings carried by
each entry, not on float equality of ``o0``: the embedding is only a
pruning proxy for the labels it encodes.

Bulk builds use sort-tile-recursive packing (equal-count binary tiling
cycling through dimensions, dominance coordinates first); single
inserts follow the R* discipline with forced reinsertion at the leaf
level (30% of fan-out) and margin/overlap-driven splits computed on the
dominance geometry.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, StateMismatchError
from .graph import Path as GraphPath

EPS_SEMANTIC = 1e-6
EPS_STRUCT = 1e-12
DEFAULT_MIN_FANOUT = 4
DEFAULT_MAX_FANOUT = 16
REINSERT_FRACTION = 0.3


@dataclass(eq=False)
class IndexEntry:
    path: GraphPath
    labels: tuple[str, ...]
    o0: np.ndarray
    o: np.ndarray
    uid: int = -1


@dataclass
class Mbr:
    low: np.ndarray
    high: np.ndarray

    @staticmethod
    def of_points(points: Sequence[np.ndarray]) -> "Mbr":
        stack = np.stack(points)
        return Mbr(stack.min(axis=0), stack.max(axis=0))

    @staticmethod
    def union(boxes: Sequence["Mbr"]) -> "Mbr":
        return Mbr(
            np.stack([b.low for b in boxes]).min(axis=0),
            np.stack([b.high for b in boxes]).max(axis=0),
        )

    def contains_point(self, v: np.ndarray, eps: float = 0.0) -> bool:
        return bool(np.all(v >= self.low - eps) and np.all(v <= self.high + eps))

    def contains_masked(self, v: np.ndarray, mask: np.ndarray, eps: float) -> bool:
        """Containment restricted to the dimensions selected by ``mask``."""
        return bool(
            np.all(v[mask] >= self.low[mask] - eps)
            and np.all(v[mask] <= self.high[mask] + eps)
        )

    def meets_dominance_cone(self, origin: np.ndarray, eps: float = EPS_STRUCT) -> bool:
        """Does {z : origin <= z} intersect this box?"""
        return bool(np.all(origin <= self.high + eps))

    def abs_corner_l1(self) -> float:
        return float(np.maximum(np.abs(self.low), np.abs(self.high)).sum())

    def margin(self) -> float:
        return float((self.high - self.low).sum())

    def area(self) -> float:
        return float(np.prod(self.high - self.low))

    def overlap(self, other: "Mbr") -> float:
        lo = np.maximum(self.low, other.low)
        hi = np.minimum(self.high, other.high)
        gaps = hi - lo
        if np.any(gaps < 0):
            return 0.0
        return float(np.prod(gaps))

    def center(self) -> np.ndarray:
        return (self.low + self.high) / 2.0


class _Node:
    __slots__ = ("is_leaf", "entries", "children", "mbr0", "mbr", "uid")

    def __init__(self, is_leaf: bool, uid: int):
        self.is_leaf = is_leaf
        self.entries: list[IndexEntry] = []
        self.children: list[_Node] = []
        self.mbr0: Mbr | None = None
        self.mbr: Mbr | None = None
        self.uid = uid

    def refit(self) -> None:
        if self.is_leaf:
            if self.entries:
                self.mbr0 = Mbr.of_points([e.o0 for e in self.entries])
                self.mbr = Mbr.of_points([e.o for e in self.entries])
        else:
            if self.children:
                self.mbr0 = Mbr.union([c.mbr0 for c in self.children])
                self.mbr = Mbr.union([c.mbr for c in self.children])

    def size(self) -> int:
        return len(self.entries) if self.is_leaf else len(self.children)


@dataclass
class TraversalStats:
    """Counters emitted by one traversal over the index."""

    nodes_visited: int = 0
    leaf_nodes_visited: int = 0
    entries_checked: int = 0
    nodes_pruned_semantic: int = 0
    nodes_pruned_structural: int = 0
    early_exit: bool = False
    per_level_counts: dict[int, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "nodes_visited": self.nodes_visited,
            "leaf_nodes_visited": self.leaf_nodes_visited,
            "entries_checked": self.entries_checked,
            "nodes_pruned_semantic": self.nodes_pruned_semantic,
            "nodes_pruned_structural": self.nodes_pruned_structural,
            "early_exit": self.early_exit,
            "per_level_counts": {str(k): v for k, v in sorted(self.per_level_counts.items())},
        }


@dataclass
class ExactProbe:
    """A fully labeled query path prepared for exact retrieval."""

    labels: tuple[str, ...]
    o0: np.ndarray
    o: np.ndarray


@dataclass
class WildcardProbe:
    """A query path with unknown positions (``None`` labels, zeroed o0 blocks)."""

    labels: tuple[str | None, ...]
    o0: np.ndarray
    unknown_at: dict[int, str]  # position -> query vertex id


def exact_leaf_match(entry: IndexEntry, probe: ExactProbe) -> bool:
    """The leaf predicate: label identity plus element-wise dominance."""
    return entry.labels == probe.labels and bool(
        np.all(probe.o <= entry.o + EPS_STRUCT)
    )


def wildcard_leaf_match(entry: IndexEntry, probe: WildcardProbe) -> bool:
    return all(
        want is None or want == got for want, got in zip(probe.labels, entry.labels)
    )


def linear_scan_reference(
    entries: Iterable[IndexEntry], probes: Sequence[ExactProbe]
) -> list[list[IndexEntry]]:
    """Definitional oracle: apply the leaf predicate to every entry."""
    out: list[list[IndexEntry]] = [[] for _ in probes]
    for entry in entries:
        for i, probe in enumerate(probes):
            if exact_leaf_match(entry, probe):
                out[i].append(entry)
    return out


def wildcard_scan_reference(
    entries: Iterable[IndexEntry], probes: Sequence[WildcardProbe]
) -> dict[str, list[str]]:
    found: dict[str, set[str]] = {}
    for probe in probes:
        for vid in probe.unknown_at.values():
            found.setdefault(vid, set())
    for entry in entries:
        for probe in probes:
            if wildcard_leaf_match(entry, probe):
                for pos, vid in probe.unknown_at.items():
                    found[vid].add(entry.labels[pos])
    return {vid: sorted(labs) for vid, labs in found.items()}


class RStarIndex:
    """Immutable-after-build index over fixed-length path embedding pairs."""

    def __init__(
        self,
        path_length: int,
        label_dim: int,
        dom_dim: int,
        min_fanout: int = DEFAULT_MIN_FANOUT,
        max_fanout: int = DEFAULT_MAX_FANOUT,
        meta: dict | None = None,
    ):
        if not (2 <= min_fanout <= max_fanout // 2):
            raise InputError("need 2 <= m <= M/2 for valid splits")
        self.path_length = path_length
        self.label_dim = label_dim
        self.dom_dim = dom_dim
        self.min_fanout = min_fanout
        self.max_fanout = max_fanout
        self.meta = dict(meta or {})
        self.entries: list[IndexEntry] = []
        self._next_uid = 0
        self.root = _Node(is_leaf=True, uid=self._take_uid())

    def _take_uid(self) -> int:
        uid = self._next_uid
        self._next_uid += 1
        return uid

    # -- dimensions ---------------------------------------------------------

    @property
    def o0_dim(self) -> int:
        return (self.path_length + 1) * self.label_dim

    @property
    def o_dim(self) -> int:
        return (self.path_length + 1) * self.dom_dim

    def _check_entry(self, e: IndexEntry) -> None:
        if e.path.length != self.path_length:
            raise InputError(
                f"entry path length {e.path.length} != index length {self.path_length}"
            )
        if e.o0.shape != (self.o0_dim,) or e.o.shape != (self.o_dim,):
            raise StateMismatchError(
                f"entry dims {e.o0.shape}/{e.o.shape} do not match index "
                f"({self.o0_dim},)/({self.o_dim},)"
            )
        if len(e.labels) != self.path_length + 1:
            raise InputError("entry must carry one label per path position")

    def _check_probe_dims(self, o0: np.ndarray, o: np.ndarray | None) -> None:
        if o0.shape != (self.o0_dim,):
            raise StateMismatchError(
                f"probe o0 dimension {o0.shape} != index ({self.o0_dim},)"
            )
        if o is not None and o.shape != (self.o_dim,):
            raise StateMismatchError(
                f"probe o dimension {o.shape} != index ({self.o_dim},)"
            )

    # -- bulk load ------------------------------------------------------------

    @staticmethod
    def build(
        entries: Sequence[IndexEntry],
        path_length: int,
        label_dim: int,
        dom_dim: int,
        min_fanout: int = DEFAULT_MIN_FANOUT,
        max_fanout: int = DEFAULT_MAX_FANOUT,
        meta: dict | None = None,
    ) -> "RStarIndex":
        idx = RStarIndex(path_length, label_dim, dom_dim, min_fanout, max_fanout, meta)
        for e in entries:
            idx._check_entry(e)
            e.uid = idx._take_uid()
            idx.entries.append(e)
        if idx.entries:
            idx.root = idx._bulk_load(list(idx.entries))
        return idx

    def _bulk_load(self, entries: list[IndexEntry]) -> _Node:
        # Tiling coordinates: dominance embedding first, label embedding after.
        points = np.stack([np.concatenate([e.o, e.o0]) for e in entries])
        ndims = points.shape[1]
        order = np.arange(len(entries))

        leaf_groups: list[np.ndarray] = []

        def tile(idxs: np.ndarray, depth: int) -> None:
            if len(idxs) <= self.max_fanout:
                leaf_groups.append(idxs)
                return
            coord = points[idxs, depth % ndims]
            ranked = idxs[np.argsort(coord, kind="stable")]
            mid = len(ranked) // 2
            tile(ranked[:mid], depth + 1)
            tile(ranked[mid:], depth + 1)

        tile(order, 0)

        level: list[_Node] = []
        for group in leaf_groups:
            node = _Node(is_leaf=True, uid=self._take_uid())
            node.entries = [entries[i] for i in group]
            node.refit()
            level.append(node)

        def chunk(nodes: list[_Node]) -> list[list[_Node]]:
            if len(nodes) <= self.max_fanout:
                return [nodes]
            mid = len(nodes) // 2
            return chunk(nodes[:mid]) + chunk(nodes[mid:])

        while len(level) > 1:
            parents = []
            for group_nodes in chunk(level):
                parent = _Node(is_leaf=False, uid=self._take_uid())
                parent.children = group_nodes
                parent.refit()
                parents.append(parent)
            level = parents
        return level[0]

    # -- structure helpers ------------------------------------------------------

    def height(self) -> int:
        h, node = 1, self.root
        while not node.is_leaf:
            node = node.children[0]
            h += 1
        return h

    def iter_nodes(self) -> Iterable[tuple[_Node, int]]:
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if not node.is_leaf:
                stack.extend((c, depth + 1) for c in node.children)

    def node_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())

    def internal_node_count(self) -> int:
        return sum(1 for n, _ in self.iter_nodes() if not n.is_leaf)

    def leaf_node_count(self) -> int:
        return sum(1 for n, _ in self.iter_nodes() if n.is_leaf)

    def all_entries(self) -> list[IndexEntry]:
        out = []
        for node, _ in self.iter_nodes():
            if node.is_leaf:
                out.extend(node.entries)
        return out

    def validate(self) -> None:
        """Structural invariants: tight MBRs, fan-out bounds, uniform depth."""
        depths = set()
        for node, depth in self.iter_nodes():
            if node is not self.root and not (
                self.min_fanout <= node.size() <= self.max_fanout
            ):
                raise AssertionError(f"node {node.uid} fan-out {node.size()} out of bounds")
            if node.size() == 0:
                if node is not self.root:
                    raise AssertionError("empty non-root node")
                continue
            if node.is_leaf:
                depths.add(depth)
                want0 = Mbr.of_points([e.o0 for e in node.entries])
                want = Mbr.of_points([e.o for e in node.entries])
            else:
                want0 = Mbr.union([c.mbr0 for c in node.children])
                want = Mbr.union([c.mbr for c in node.children])
            if not (
                np.array_equal(want0.low, node.mbr0.low)
                and np.array_equal(want0.high, node.mbr0.high)
                and np.array_equal(want.low, node.mbr.low)
                and np.array_equal(want.high, node.mbr.high)
            ):
                raise AssertionError(f"node {node.uid} MBRs are not tight")
        if len(depths) > 1:
            raise AssertionError(f"leaves at mixed depths {depths}")

    # -- best-first traversal -----------------------------------------------------

    def retrieve_exact_candidates(
        self,
        probes: Sequence[ExactProbe],
        record_pruned: bool = False,
    ) -> tuple[list[list[IndexEntry]], TraversalStats, list]:
        """Candidates per probe: label-identical entries dominating the probe.

        One walk serves the whole probe batch: probes attach to a node
        only while both pruning tests pass, and a node is expanded once
        with its surviving probe list. Returns (candidate lists, stats,
        pruned (node, probe-index) pairs when ``record_pruned``).
        """
        import heapq

        for p in probes:
            self._check_probe_dims(p.o0, p.o)
        results: list[list[IndexEntry]] = [[] for _ in probes]
        stats = TraversalStats()
        pruned_pairs: list = []
        if not self.entries or not probes:
            return results, stats, pruned_pairs

        min_norm = min(float(np.abs(p.o).sum()) for p in probes)
        slack = self.o_dim * EPS_STRUCT + 1e-9
        counter = 0
        heap: list[tuple[float, int, _Node, int, list[int]]] = []
        heapq.heappush(
            heap, (-self.root.mbr.abs_corner_l1(), counter, self.root, 0, list(range(len(probes))))
        )
        while heap:
            neg_key, _, node, depth, plist = heapq.heappop(heap)
            if -neg_key < min_norm - slack:
                stats.early_exit = True
                break
            stats.nodes_visited += 1
            stats.per_level_counts[depth] = stats.per_level_counts.get(depth, 0) + 1
            if node.is_leaf:
                stats.leaf_nodes_visited += 1
                for entry in node.entries:
                    stats.entries_checked += 1
                    for pi in plist:
                        if exact_leaf_match(entry, probes[pi]):
                            results[pi].append(entry)
                continue
            for child in node.children:
                surviving: list[int] = []
                any_sem_pass = False
                for pi in plist:
                    probe = probes[pi]
                    if not child.mbr0.contains_point(probe.o0, EPS_SEMANTIC):
                        continue
                    any_sem_pass = True
                    if not child.mbr.meets_dominance_cone(probe.o):
                        continue
                    surviving.append(pi)
                if surviving:
                    counter += 1
                    heapq.heappush(
                        heap,
                        (-child.mbr.abs_corner_l1(), counter, child, depth + 1, surviving),
                    )
                else:
                    if any_sem_pass:
                        stats.nodes_pruned_structural += 1
                    else:
                        stats.nodes_pruned_semantic += 1
                    if record_pruned:
                        pruned_pairs.extend((child, pi) for pi in plist)
        return results, stats, pruned_pairs

    def retrieve_label_candidates(
        self, probes: Sequence[WildcardProbe]
    ) -> tuple[dict[str, list[str]], TraversalStats]:
        """Candidate labels for unknown positions, read off matching entries.

        Pruning and the leaf test consider known positions only; the
        heap key switches to the label-embedding MBR, and the early
        exit compares against the smallest probe ``o0`` norm (sound
        because a matching entry replicates the probe's known blocks
        and can only add mass at unknown positions).
        """
        import heapq

        found: dict[str, set[str]] = {}
        for probe in probes:
            self._check_probe_dims(probe.o0, None)
            if not probe.unknown_at:
                raise InputError("wildcard probe has no unknown positions")
            if all(lab is None for lab in probe.labels):
                raise InputError("wildcard probe with every position unknown is unmatchable")
            for vid in probe.unknown_at.values():
                found.setdefault(vid, set())
        stats = TraversalStats()
        if not self.entries or not probes:
            return {vid: sorted(v) for vid, v in found.items()}, stats

        masks = []
        for probe in probes:
            mask = np.zeros(self.o0_dim, dtype=bool)
            for pos, lab in enumerate(probe.labels):
                if lab is not None:
                    mask[pos * self.label_dim : (pos + 1) * self.label_dim] = True
            masks.append(mask)
        min_norm = min(float(np.abs(p.o0).sum()) for p in probes)
        counter = 0
        heap: list[tuple[float, int, _Node, int, list[int]]] = []
        heapq.heappush(
            heap,
            (-self.root.mbr0.abs_corner_l1(), counter, self.root, 0, list(range(len(probes)))),
        )
        while heap:
            neg_key, _, node, depth, plist = heapq.heappop(heap)
            if -neg_key < min_norm - 1e-9:
                stats.early_exit = True
                break
            stats.nodes_visited += 1
            stats.per_level_counts[depth] = stats.per_level_counts.get(depth, 0) + 1
            if node.is_leaf:
                stats.leaf_nodes_visited += 1
                for entry in node.entries:
                    stats.entries_checked += 1
                    for pi in plist:
                        if wildcard_leaf_match(entry, probes[pi]):
                            for pos, vid in probes[pi].unknown_at.items():
                                found[vid].add(entry.labels[pos])
                continue
            for child in node.children:
                surviving = [
                    pi
                    for pi in plist
                    if child.mbr0.contains_masked(probes[pi].o0, masks[pi], EPS_SEMANTIC)
                ]
                if surviving:
                    counter += 1
                    heapq.heappush(
                        heap,
                        (-child.mbr0.abs_corner_l1(), counter, child, depth + 1, surviving),
                    )
                else:
                    stats.nodes_pruned_semantic += 1
        return {vid: sorted(v) for vid, v in found.items()}, stats

    def entries_under(self, node: _Node) -> list[IndexEntry]:
        if node.is_leaf:
            return list(node.entries)
        out = []
        for child in node.children:
            out.extend(self.entries_under(child))
        return out

    # -- single insert (R* discipline) ----------------------------------------------

    def insert(self, entry: IndexEntry) -> None:
        self._check_entry(entry)
        entry.uid = self._take_uid()
        self.entries.append(entry)
        self._insert_entry(entry, allow_reinsert=True)

    def _choose_leaf(self, entry: IndexEntry) -> list[_Node]:
        path = [self.root]
        node = self.root
        while not node.is_leaf:
            children_are_leaves = node.children[0].is_leaf
            best = None
            for child in node.children:
                enlarged = Mbr(
                    np.minimum(child.mbr.low, entry.o), np.maximum(child.mbr.high, entry.o)
                )
                if children_are_leaves:
                    # leaf level: minimize overlap enlargement against siblings
                    before = sum(child.mbr.overlap(s.mbr) for s in node.children if s is not child)
                    after = sum(enlarged.overlap(s.mbr) for s in node.children if s is not child)
                    cost = (after - before, enlarged.area() - child.mbr.area(), child.mbr.area(), child.uid)
                else:
                    cost = (enlarged.area() - child.mbr.area(), child.mbr.area(), child.uid, 0)
                if best is None or cost < best[0]:
                    best = (cost, child)
            node = best[1]
            path.append(node)
        return path

    def _insert_entry(self, entry: IndexEntry, allow_reinsert: bool) -> None:
        path = self._choose_leaf(entry)
        leaf = path[-1]
        leaf.entries.append(entry)
        if len(leaf.entries) > self.max_fanout:
            if allow_reinsert and leaf is not self.root:
                spill = self._pick_reinsert(leaf)
                for node in reversed(path):
                    node.refit()
                for sp in spill:
                    self._insert_entry(sp, allow_reinsert=False)
                return
            self._split_upward(path)
            return
        for node in reversed(path):
            node.refit()

    def _pick_reinsert(self, leaf: _Node) -> list[IndexEntry]:
        count = max(1, round(REINSERT_FRACTION * self.max_fanout))
        center = Mbr.of_points([e.o for e in leaf.entries]).center()
        ranked = sorted(
            leaf.entries,
            key=lambda e: (-float(np.abs(e.o - center).sum()), e.uid),
        )
        spill = ranked[:count]
        spill_ids = {id(e) for e in spill}
        leaf.entries = [e for e in leaf.entries if id(e) not in spill_ids]
        leaf.refit()
        return spill

    def _split_upward(self, path: list[_Node]) -> None:
        node = path.pop()
        sibling = self._split_node(node)
        while path:
            parent = path.pop()
            parent.children.append(sibling)
            parent.refit()
            if len(parent.children) <= self.max_fanout:
                for up in reversed(path):
                    up.refit()
                return
            node = parent
            sibling = self._split_node(node)
        new_root = _Node(is_leaf=False, uid=self._take_uid())
        new_root.children = [node, sibling]
        new_root.refit()
        self.root = new_root

    def _split_node(self, node: _Node) -> _Node:
        """R* split: axis by minimum margin sum, distribution by minimum
        overlap (ties: combined area), computed on the dominance MBRs."""
        items = node.entries if node.is_leaf else node.children
        boxes = [
            Mbr(e.o, e.o) if node.is_leaf else e.mbr  # type: ignore[union-attr]
            for e in items
        ]
        m, count = self.min_fanout, len(items)
        best_axis, best_axis_margin = 0, None
        ndims = len(boxes[0].low)
        orders_by_axis: dict[int, list[int]] = {}
        for axis in range(ndims):
            order = sorted(range(count), key=lambda i: (boxes[i].low[axis], boxes[i].high[axis], i))
            orders_by_axis[axis] = order
            margin_sum = 0.0
            for k in range(m, count - m + 1):
                g1 = Mbr.union([boxes[i] for i in order[:k]])
                g2 = Mbr.union([boxes[i] for i in order[k:]])
                margin_sum += g1.margin() + g2.margin()
            if best_axis_margin is None or margin_sum < best_axis_margin:
                best_axis_margin = margin_sum
                best_axis = axis
        order = orders_by_axis[best_axis]
        best_split, best_cost = m, None
        for k in range(m, count - m + 1):
            g1 = Mbr.union([boxes[i] for i in order[:k]])
            g2 = Mbr.union([boxes[i] for i in order[k:]])
            cost = (g1.overlap(g2), g1.area() + g2.area(), k)
            if best_cost is None or cost < best_cost:
                best_cost = cost
                best_split = k
        keep_idx, move_idx = order[:best_split], order[best_split:]
        sibling = _Node(is_leaf=node.is_leaf, uid=self._take_uid())
        if node.is_leaf:
            moved = [node.entries[i] for i in move_idx]
            node.entries = [node.entries[i] for i in keep_idx]
            sibling.entries = moved
        else:
            moved_c = [node.children[i] for i in move_idx]
            node.children = [node.children[i] for i in keep_idx]
            sibling.children = moved_c
        node.refit()
        sibling.refit()
        return sibling

    # -- persistence -----------------------------------------------------------------

    def save(self, path: str | FsPath) -> None:
        """Zip container: JSON header + entry paths + embedding matrices.

        Timestamps are pinned so identical content yields identical bytes;
        the tree itself is not stored because the bulk load is
        deterministic and rebuilds it on load.
        """
        header = {
            "version": 1,
            "l": self.path_length,
            "F": self.label_dim,
            "d": self.dom_dim,
            "m": self.min_fanout,
            "M": self.max_fanout,
            "entry_count": len(self.entries),
            "meta": self.meta,
        }
        paths_payload = [
            {"vertices": list(e.path.vertices), "edges": list(e.path.edges), "labels": list(e.labels)}
            for e in self.entries
        ]
        o0_mat = (
            np.stack([e.o0 for e in self.entries])
            if self.entries
            else np.zeros((0, self.o0_dim))
        )
        o_mat = (
            np.stack([e.o for e in self.entries])
            if self.entries
            else np.zeros((0, self.o_dim))
        )

        def _write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, data)

        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
            _write(zf, "header.json", json.dumps(header, sort_keys=True).encode("utf-8"))
            _write(zf, "paths.json", json.dumps(paths_payload, sort_keys=True).encode("utf-8"))
            for name, mat in (("o0.npy", o0_mat), ("o.npy", o_mat)):
                arr_buf = io.BytesIO()
                np.save(arr_buf, mat)
                _write(zf, name, arr_buf.getvalue())
        FsPath(path).write_bytes(buf.getvalue())

    @staticmethod
    def load(path: str | FsPath) -> "RStarIndex":
        with zipfile.ZipFile(path, "r") as zf:
            header = json.loads(zf.read("header.json"))
            paths_payload = json.loads(zf.read("paths.json"))
            o0_mat = np.load(io.BytesIO(zf.read("o0.npy")))
            o_mat = np.load(io.BytesIO(zf.read("o.npy")))
        entries = [
            IndexEntry(
                GraphPath(tuple(p["vertices"]), tuple(p["edges"])),
                tuple(p["labels"]),
                o0_mat[i],
                o_mat[i],
            )
            for i, p in enumerate(paths_payload)
        ]
        return RStarIndex.build(
            entries,
            header["l"],
            header["F"],
            header["d"],
            header["m"],
            header["M"],
            header.get("meta"),
        )
