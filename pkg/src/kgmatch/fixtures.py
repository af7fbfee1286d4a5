"""Bundled micro-fixtures: two case-study graphs and a nutrient bridge-star."""

from __future__ import annotations

from importlib import resources

from .graph import Graph, QueryGraph, parse_graph_document

DISEASE_QUESTION = (
    "Which disease is likely to simultaneously cause deep vein thrombosis, "
    "acute closed Achilles tendon rupture, infection, and fracture as "
    "complications?"
)
DISEASE_GOLD = "Neurovascular injury"

DIABETES_QUESTION = (
    "Which disease commonly uses massage as adjuvant therapy, is prone to "
    "cause hypertension and adrenal incidentaloma, and requires differential "
    "diagnosis from subclinical Cushing's syndrome?"
)
DIABETES_GOLD = "Type 2 diabetes"


def _read(name: str) -> str:
    return resources.files("kgmatch").joinpath("data", name).read_text(encoding="utf-8")


def fixture_text(name: str) -> str:
    return _read(name)


def load_nutrient_graph() -> Graph:
    g, _ = parse_graph_document(_read("nutrient_graph.txt"))
    return g


def load_disease_graph() -> Graph:
    g, _ = parse_graph_document(_read("disease_graph.txt"))
    return g


def load_diabetes_graph() -> Graph:
    g, _ = parse_graph_document(_read("diabetes_graph.txt"))
    return g


def disease_query_text() -> str:
    return _read("disease_query.txt")


def diabetes_query_text() -> str:
    return _read("diabetes_query.txt")


def load_disease_query() -> QueryGraph:
    q, _ = parse_graph_document(disease_query_text(), query=True)
    return q


def load_diabetes_query() -> QueryGraph:
    q, _ = parse_graph_document(diabetes_query_text(), query=True)
    return q
