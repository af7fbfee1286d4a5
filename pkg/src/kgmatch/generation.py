"""Prompt rendering and answer production.

Matched (or fallback) subgraphs become a relation paragraph, one
sentence per edge, wrapped in a fixed instruction that restricts the
answer to an entity label mentioned in the paragraph. The provider is
pluggable; answers are extracted from its free text by deterministic
longest-entity matching against the prompt's label set, so an answer is
either an in-prompt entity or the explicit "Unable to determine"
escape.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import InputError, ProviderError
from .graph import Graph, QueryGraph
from .matcher import MatchResult

UNABLE = "Unable to determine"
DEFAULT_TOKEN_BUDGET = 1200
TRUNCATION_MARKER = "[additional relations truncated]"

INSTRUCTION = (
    "Below is a paragraph describing the relationships among entities in a "
    "structured graph.\n"
    "This paragraph contains the answer to a user question. Read and reason "
    "carefully.\n"
    "Note: The final answer must be one of the entity labels mentioned in the "
    "paragraph."
)
ANSWER_CONSTRAINT = f'Answer: [Entity] or "{UNABLE}"'


@dataclass
class PromptDocument:
    instruction: str
    relation_sentences: list[str]
    question: str
    answer_constraint: str
    entity_labels: list[str]
    rendered: str
    truncated: bool = False

    def to_json(self) -> dict:
        return {
            "rendered": self.rendered,
            "entities": self.entity_labels,
            "truncated": self.truncated,
        }


@dataclass
class AnswerRecord:
    answer: str
    raw: str
    mode: str  # exact | fallback
    prompt: PromptDocument | None

    def to_json(self) -> dict:
        return {
            "answer": self.answer,
            "raw": self.raw,
            "mode": self.mode,
            "prompt": self.prompt.to_json() if self.prompt else None,
        }


def _token_count(text: str) -> int:
    return len(text.split())


def _relation_sentence(g: Graph, edge_id: str) -> tuple[str, str, str]:
    e = g.edge(edge_id)
    rel = e.description.strip() or "related to"
    a, b = g.label(e.src), g.label(e.dst)
    return f"{a} is related to {b} via: {rel}.", a, b


def render_subgraph_prompt(
    result: MatchResult,
    g: Graph,
    question: str,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> PromptDocument:
    """Deterministic prompt from a match result.

    Edges are deduplicated and sorted by (src id, dst id). Under the
    token budget, lowest-priority sentences go first: fallback edges,
    then exact-subgraph edges from the end of the sorted order; a
    truncation marker records the cut.
    """
    exact_edge_ids: set[str] = set()
    for ms in result.exact:
        exact_edge_ids.update(ms.edge_ids)
    fallback_edge_ids: set[str] = set()
    if result.fallback is not None:
        fallback_edge_ids.update(result.fallback.edge_ids)
    fallback_edge_ids -= exact_edge_ids
    if not exact_edge_ids and not fallback_edge_ids:
        raise InputError("nothing to render: empty subgraph set and empty fallback")

    def sort_key(eid: str) -> tuple[str, str]:
        e = g.edge(eid)
        return (e.src, e.dst)

    # priority order for dropping: fallback first, then exact from the tail
    exact_sorted = sorted(exact_edge_ids, key=sort_key)
    fallback_sorted = sorted(fallback_edge_ids, key=sort_key)
    drop_order = list(reversed(fallback_sorted)) + list(reversed(exact_sorted))
    kept = exact_sorted + fallback_sorted

    def render(keep_ids: list[str], truncated: bool) -> tuple[str, list[str], list[str]]:
        sentences = []
        labels: list[str] = []
        for eid in sorted(keep_ids, key=sort_key):
            sent, a, b = _relation_sentence(g, eid)
            sentences.append(sent)
            for lab in (a, b):
                if lab not in labels:
                    labels.append(lab)
        body = "\n".join(sentences)
        if truncated:
            body = body + ("\n" if body else "") + TRUNCATION_MARKER
        text = (
            f"{INSTRUCTION}\n---\nKnown Relations:\n{body}\n---\n"
            f"User Question: {question}\n{ANSWER_CONSTRAINT}"
        )
        return text, sentences, labels

    truncated = False
    while True:
        text, sentences, labels = render(kept, truncated)
        if _token_count(text) <= token_budget or not kept:
            break
        dropped = drop_order.pop(0)
        kept = [eid for eid in kept if eid != dropped]
        truncated = True
    if not kept:
        raise InputError(
            f"token budget {token_budget} cannot fit a single relation sentence"
        )
    return PromptDocument(
        instruction=INSTRUCTION,
        relation_sentences=sentences,
        question=question,
        answer_constraint=ANSWER_CONSTRAINT,
        entity_labels=labels,
        rendered=text,
        truncated=truncated,
    )


# -- answer providers -------------------------------------------------------------

AnswerProvider = Callable[[str], str]


class ExactBindingAnswerer:
    """Mock provider: reads the unknown vertex's binding off the match result.

    Exact mode answers with the bound entity's label (smallest binding
    signature when several subgraphs matched); fallback mode declines.
    """

    def __init__(self, result: MatchResult, q: QueryGraph, g: Graph):
        self.result = result
        self.q = q
        self.g = g

    def __call__(self, prompt: str) -> str:
        if not self.result.exact:
            return UNABLE
        unknowns = self.q.unknown_ids
        first = self.result.exact[0]
        if unknowns:
            target = self.g.label(first.binding[unknowns[0]])
        else:
            # no unknown vertex: answer with the first bound entity
            target = self.g.label(first.binding[sorted(first.binding)[0]])
        return f"Answer: {target}. Reasoning: the retrieved relations satisfy every stated condition."


class StaticAnswerer:
    def __init__(self, text: str):
        self.text = text

    def __call__(self, prompt: str) -> str:
        return self.text


class RemoteAnswerer:
    """HTTP JSON generation service: {"prompt": …} -> {"text": …}."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
        auth_token_env: str = "KGMATCH_API_TOKEN",
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.auth_token_env = auth_token_env

    def __call__(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    self.endpoint,
                    json={"prompt": prompt},
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                return str(resp.json()["text"])
            except Exception as exc:
                last = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        raise ProviderError(
            f"generation endpoint failed after {self.retries} attempts: {last}"
        )


def extract_answer(provider_text: str, entity_labels: Sequence[str]) -> str:
    """Longest in-prompt entity mentioned by the provider, else the escape.

    Matching is case-folded; ties between equally long labels break
    lexicographically so extraction is deterministic.
    """
    hay = provider_text.casefold()
    hits = [lab for lab in entity_labels if lab.casefold() in hay]
    if not hits:
        return UNABLE
    hits.sort(key=lambda lab: (-len(lab), lab))
    return hits[0]


def generate_answer(
    prompt: PromptDocument, provider: AnswerProvider, mode: str
) -> AnswerRecord:
    raw = provider(prompt.rendered)
    answer = extract_answer(raw, prompt.entity_labels)
    return AnswerRecord(answer=answer, raw=raw, mode=mode, prompt=prompt)


# -- reasoning-quality prompt (render only) ------------------------------------------


def render_empowerment_prompt(
    question: str, gold: str, answers: Sequence[str]
) -> PromptDocument:
    """Reviewer prompt scoring candidate answers for coherence and insight."""
    if not answers:
        raise InputError("need at least one candidate answer to score")
    letters = [chr(ord("A") + i) for i in range(len(answers))]
    answer_lines = "\n".join(
        f"[Method_{letter}] {ans}" for letter, ans in zip(letters, answers)
    )
    schema_lines = ",\n".join(
        f'  "Method_{letter}": {{"logic": L{i+1}, "insight": I{i+1}, "total": T{i+1}}}'
        for i, letter in enumerate(letters)
    )
    rendered = (
        "Automatically evaluate answers from multiple methods to the same question. "
        "The reviewer scores each answer independently according to the criteria "
        "below.\n"
        f"Question: {question}\n"
        f"Gold Answer: {gold}\n"
        "Answer List:\n"
        f"{answer_lines}\n"
        "You are a senior evaluator. Please carefully read the question, the "
        "gold-standard answer, and the list of candidate answers. For each answer, "
        "assign scores based on the criteria below. Return the evaluation as a "
        "structured JSON.\n"
        "Scoring Criteria:\n"
        "- Logical Coherence (0-2): Is the reasoning clear, complete, and "
        "well-sequenced?\n"
        "- Insight (0-1): Does the answer offer new insight or helpful "
        "suggestions?\n"
        "Output Format:\n"
        "{\n"
        f"{schema_lines}\n"
        "}"
    )
    return PromptDocument(
        instruction="reasoning-quality review",
        relation_sentences=[],
        question=question,
        answer_constraint="structured JSON scores",
        entity_labels=[],
        rendered=rendered,
    )
