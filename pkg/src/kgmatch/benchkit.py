"""Bridge-star QA generation, objective metrics, and the evaluation harness.

A QA record is carved out of a bridge-star subgraph: two well-connected
centers sharing at least one bridge neighbor, each keeping at least one
unique neighbor. One center is hidden and becomes the gold answer; the
question constrains the hidden center by its unique neighbors plus the
bridges, so the visible center survives as a plausible distractor that
fails the unique constraints.

Generated records are answerable by construction; the generator also
rejects records whose constraint set matches more than one data vertex,
keeping gold the unique exact answer.
"""

from __future__ import annotations

import csv
import io
import json
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .engine import QueryOutcome, RetrievalEngine
from .errors import InputError
from .generation import UNABLE
from .graph import Edge, Graph, QueryGraph, UNKNOWN_LABEL, Vertex


@dataclass
class BridgeStar:
    center_a: str
    center_b: str
    bridges: list[str]
    unique_a: list[str]
    unique_b: list[str]

    def to_json(self) -> dict:
        return {
            "center_a": self.center_a,
            "center_b": self.center_b,
            "bridges": self.bridges,
            "unique_a": self.unique_a,
            "unique_b": self.unique_b,
        }


@dataclass
class QaRecord:
    question: str
    constraints: list[str]  # constraint entity labels
    gold: str
    provenance: dict
    constraint_count: int

    def to_json(self) -> dict:
        return {
            "question": self.question,
            "constraints": self.constraints,
            "gold": self.gold,
            "provenance": self.provenance,
            "constraint_count": self.constraint_count,
        }

    @staticmethod
    def from_json(obj: dict) -> "QaRecord":
        return QaRecord(
            question=obj["question"],
            constraints=list(obj["constraints"]),
            gold=obj["gold"],
            provenance=dict(obj.get("provenance", {})),
            constraint_count=int(obj["constraint_count"]),
        )


def qualifying_pairs(g: Graph, min_degree: int = 3) -> list[tuple[str, str]]:
    """Center pairs: degree >= threshold, >=1 shared bridge, >=1 unique each."""
    hubs = [vid for vid in sorted(g.vertices) if g.degree(vid) >= min_degree]
    pairs = []
    for i, a in enumerate(hubs):
        for b in hubs[i + 1 :]:
            na = g.adjacency[a] - {b}
            nb = g.adjacency[b] - {a}
            bridges = na & nb
            if bridges and (na - bridges) and (nb - bridges):
                pairs.append((a, b))
    return pairs


def sample_bridge_star(g: Graph, seed: int = 0, min_degree: int = 3) -> BridgeStar:
    pairs = qualifying_pairs(g, min_degree)
    if not pairs:
        raise InputError(
            f"no center pair with degree >= {min_degree}, a shared neighbor, "
            "and a unique neighbor each"
        )
    a, b = pairs[random.Random(seed).randrange(len(pairs))]
    na = g.adjacency[a] - {b}
    nb = g.adjacency[b] - {a}
    bridges = sorted(na & nb)
    return BridgeStar(
        center_a=a,
        center_b=b,
        bridges=bridges,
        unique_a=sorted(na - set(bridges)),
        unique_b=sorted(nb - set(bridges)),
    )


def _join_clause(labels: Sequence[str]) -> str:
    if len(labels) == 1:
        return labels[0]
    return ", ".join(labels[:-1]) + (", and " if len(labels) > 2 else " and ") + labels[-1]


QuestionProvider = Callable[[str], str]


def make_qa(
    bridge: BridgeStar,
    g: Graph,
    hidden: str = "a",
    question_provider: QuestionProvider | None = None,
) -> QaRecord:
    """Hide one center; constrain it by its unique neighbors plus the bridges.

    The structured constraint list is always emitted; the English
    question comes from the provider when configured, otherwise from a
    deterministic template over the hidden center's entity type.
    """
    if hidden not in ("a", "b"):
        raise InputError("hidden center must be 'a' or 'b'")
    center = bridge.center_a if hidden == "a" else bridge.center_b
    uniques = bridge.unique_a if hidden == "a" else bridge.unique_b
    constraint_ids = list(uniques) + list(bridge.bridges)
    constraints = []
    for vid in constraint_ids:
        lab = g.label(vid)
        if lab not in constraints:
            constraints.append(lab)
    core_type = g.vertex(center).description.strip() or "entity"
    template = (
        f"Which {core_type} is associated with "
        f"{_join_clause([c.lower() for c in constraints])}?"
    )
    question = question_provider(template) if question_provider else template
    return QaRecord(
        question=question,
        constraints=constraints,
        gold=g.label(center),
        provenance={
            "hidden_center": center,
            "visible_center": bridge.center_b if hidden == "a" else bridge.center_a,
            "bridges": bridge.bridges,
            "unique": list(uniques),
        },
        constraint_count=len(constraints),
    )


def constraint_query_graph(record: QaRecord) -> QueryGraph:
    """Star query: UNK center joined to every constraint entity."""
    vertices = [Vertex("q0", UNKNOWN_LABEL, "")]
    edges = []
    for i, label in enumerate(record.constraints, start=1):
        vertices.append(Vertex(f"q{i}", label, ""))
        edges.append(Edge(f"eq{i}", "q0", f"q{i}", ""))
    return QueryGraph(vertices, edges)


def constraint_query_text(record: QaRecord) -> str:
    """The same star query in the structured record grammar."""
    return constraint_query_graph(record).to_text()


def satisfying_centers(g: Graph, constraints: Sequence[str]) -> list[str]:
    """Data vertices adjacent to at least one neighbor per constraint label.

    Constraint labels are distinct, so distinct labels always land on
    distinct neighbors; this is exactly the set of exact-match centers
    for the star query.
    """
    want = set(constraints)
    out = []
    for vid in sorted(g.vertices):
        have = {g.label(n) for n in g.adjacency[vid]}
        if want <= have:
            out.append(vid)
    return out


def generate_dataset(
    g: Graph,
    n: int,
    seed: int = 0,
    min_degree: int = 3,
    require_unique_answer: bool = True,
    max_attempts_factor: int = 50,
) -> list[QaRecord]:
    """n deterministic QA records; ambiguous constraint sets are re-sampled."""
    records: list[QaRecord] = []
    seen_keys: set[tuple] = set()
    attempts = 0
    limit = max(1, n) * max_attempts_factor
    while len(records) < n and attempts < limit:
        sample_seed = seed * 1_000_003 + attempts
        attempts += 1
        try:
            bridge = sample_bridge_star(g, seed=sample_seed, min_degree=min_degree)
        except InputError:
            break
        for hidden in ("a", "b"):
            if len(records) >= n:
                break
            record = make_qa(bridge, g, hidden=hidden)
            key = (record.gold, tuple(record.constraints))
            if key in seen_keys:
                continue
            if require_unique_answer:
                centers = satisfying_centers(g, record.constraints)
                if len(centers) != 1:
                    continue
            seen_keys.add(key)
            records.append(record)
    if len(records) < n:
        raise InputError(
            f"could only generate {len(records)} of {n} records "
            f"(graph too small or too ambiguous)"
        )
    return records


# -- metrics --------------------------------------------------------------------


def _norm(text: str) -> str:
    return text.strip().casefold()


@dataclass
class EvalReport:
    hit1: float
    precision: float
    recall: float
    f1: float
    per_record: list[dict] = field(default_factory=list)
    runtime: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "hit1": self.hit1,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_record": self.per_record,
            "runtime": self.runtime,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["metric", "value"])
        for name in ("hit1", "precision", "recall", "f1"):
            writer.writerow([name, getattr(self, name)])
        return buf.getvalue()


def evaluate(records: Sequence[QaRecord], answers: Sequence[str]) -> EvalReport:
    """Hit@1 plus entity-set precision/recall/F1, macro-averaged.

    Each record's prediction set is the single extracted answer (empty
    for the "unable" escape); gold is a singleton, so a record scores
    1 on every component when correct and 0 otherwise.
    """
    if len(records) != len(answers):
        raise InputError(f"{len(records)} records vs {len(answers)} answers")
    per_record = []
    hits = p_sum = r_sum = f_sum = 0.0
    for record, answer in zip(records, answers):
        pred: set[str] = set()
        if answer and _norm(answer) != _norm(UNABLE):
            pred = {_norm(answer)}
        gold = {_norm(record.gold)}
        inter = len(pred & gold)
        precision = inter / len(pred) if pred else 0.0
        recall = inter / len(gold)
        f1 = (
            2 * precision * recall / (precision + recall)
            if (precision + recall) > 0
            else 0.0
        )
        hit = 1.0 if pred == gold else 0.0
        hits += hit
        p_sum += precision
        r_sum += recall
        f_sum += f1
        per_record.append(
            {
                "gold": record.gold,
                "answer": answer,
                "hit": bool(hit),
                "precision": precision,
                "recall": recall,
                "f1": f1,
            }
        )
    n = len(records)
    if n == 0:
        return EvalReport(0.0, 0.0, 0.0, 0.0, [], {})
    return EvalReport(
        hit1=hits / n,
        precision=p_sum / n,
        recall=r_sum / n,
        f1=f_sum / n,
        per_record=per_record,
    )


# -- end-to-end harness ------------------------------------------------------------


def answer_records(
    engine: RetrievalEngine,
    records: Sequence[QaRecord],
    l: int = 2,
) -> tuple[list[str], list[QueryOutcome | None], list[str]]:
    """Run the full pipeline per record; stage errors never abort the run."""
    answers: list[str] = []
    outcomes: list[QueryOutcome | None] = []
    errors: list[str] = []
    for record in records:
        try:
            outcome = engine.answer(constraint_query_text(record), l=l)
            answers.append(outcome.record.answer)
            outcomes.append(outcome)
            errors.append("")
        except Exception as exc:  # recorded per query, run continues
            answers.append(UNABLE)
            outcomes.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    return answers, outcomes, errors


def run_end_to_end(
    g: Graph,
    n: int,
    seed: int = 0,
    l: int = 2,
    min_degree: int = 3,
    engine: RetrievalEngine | None = None,
) -> tuple[EvalReport, list[QaRecord]]:
    """Generate records, answer them, and score the run."""
    if n == 0:
        return EvalReport(0.0, 0.0, 0.0, 0.0, [], {"records": 0}), []
    records = generate_dataset(g, n, seed=seed, min_degree=min_degree)
    eng = engine or RetrievalEngine.with_count_oracle(g)
    start = time.perf_counter()
    answers, outcomes, errors = answer_records(eng, records, l=l)
    elapsed = time.perf_counter() - start
    report = evaluate(records, answers)
    visited = [
        o.match.stats.traversal.nodes_visited
        for o in outcomes
        if o is not None and o.match and o.match.stats.traversal
    ]
    report.runtime = {
        "records": n,
        "seconds": round(elapsed, 4),
        "errors": sum(1 for e in errors if e),
        "mean_nodes_visited": (sum(visited) / len(visited)) if visited else 0.0,
    }
    for row, err in zip(report.per_record, errors):
        if err:
            row["error"] = err
    return report, records


# -- robustness: constraint-level perturbation ------------------------------------------


def perturb_record(
    record: QaRecord,
    g: Graph,
    x: int,
    rng: random.Random,
    delete_weight: float = 1.0,
    add_weight: float = 0.0,
) -> QaRecord:
    """Apply x constraint edits: deletions and/or spurious additions.

    Deletion drops a constraint entity from the question; addition
    injects a random graph label as an extra (usually unsatisfiable)
    constraint. At least one constraint always survives.
    """
    constraints = list(record.constraints)
    all_labels = sorted({v.label for v in g.vertices.values()})
    for _ in range(x):
        roll = rng.random() * (delete_weight + add_weight)
        if roll < delete_weight and len(constraints) > 1:
            constraints.pop(rng.randrange(len(constraints)))
        else:
            candidates = [lab for lab in all_labels if lab not in constraints]
            if candidates:
                constraints.append(candidates[rng.randrange(len(candidates))])
    return QaRecord(
        question=record.question,
        constraints=constraints,
        gold=record.gold,
        provenance={**record.provenance, "perturbation_x": x},
        constraint_count=len(constraints),
    )


def robustness_curve(
    g: Graph,
    records: Sequence[QaRecord],
    xs: Sequence[int] = (1, 2, 3),
    seed: int = 0,
    l: int = 2,
    delete_weight: float = 1.0,
    add_weight: float = 0.0,
    engine: RetrievalEngine | None = None,
) -> dict[int, EvalReport]:
    """Hit@1 degradation under increasing constraint edit distance."""
    eng = engine or RetrievalEngine.with_count_oracle(g)
    out: dict[int, EvalReport] = {}
    for x in xs:
        rng = random.Random(seed * 7919 + x)
        perturbed = [
            perturb_record(r, g, x, rng, delete_weight, add_weight) for r in records
        ]
        answers, _, errors = answer_records(eng, perturbed, l=l)
        report = evaluate(perturbed, answers)
        report.runtime = {"x": x, "errors": sum(1 for e in errors if e)}
        out[x] = report
    return out


def write_jsonl(records: Sequence[QaRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_jsonl(path) -> list[QaRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(QaRecord.from_json(json.loads(line)))
    return out


# -- synthetic graphs --------------------------------------------------------------


def synthetic_bridge_graph(
    n_vertices: int = 200,
    seed: int = 0,
    hub_fraction: float = 0.2,
    hub_degree: tuple[int, int] = (4, 8),
) -> Graph:
    """Random hub/attribute graph guaranteed to contain bridge-star pairs.

    Hubs connect to several attribute vertices; attributes shared by two
    hubs act as bridges. Labels are unique per vertex, so constraint
    sets translate directly into label sets.
    """
    rng = random.Random(seed)
    n_hubs = max(2, int(n_vertices * hub_fraction))
    n_attrs = n_vertices - n_hubs
    if n_attrs < hub_degree[1]:
        raise InputError("too few attribute vertices for the requested hub degree")
    vertices = [
        Vertex(f"h{i:03d}", f"Hub {i:03d}", "entity") for i in range(n_hubs)
    ] + [
        Vertex(f"a{i:03d}", f"Attribute {i:03d}", "property") for i in range(n_attrs)
    ]
    edges = []
    eid = 0
    seen_pairs = set()
    for i in range(n_hubs):
        degree = rng.randint(*hub_degree)
        picks = rng.sample(range(n_attrs), degree)
        for a in picks:
            pair = (f"h{i:03d}", f"a{a:03d}")
            if pair in seen_pairs:
                continue
            seen_pairs.add(pair)
            edges.append(Edge(f"e{eid:05d}", pair[0], pair[1], "has property"))
            eid += 1
    # a few attribute-attribute edges as noise
    for _ in range(n_attrs // 10):
        a, b = rng.sample(range(n_attrs), 2)
        pair = (f"a{min(a, b):03d}", f"a{max(a, b):03d}")
        if pair in seen_pairs or pair[0] == pair[1]:
            continue
        seen_pairs.add(pair)
        edges.append(Edge(f"e{eid:05d}", pair[0], pair[1], "related"))
        eid += 1
    return Graph(vertices, edges)
