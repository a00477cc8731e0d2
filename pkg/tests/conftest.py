import json
from pathlib import Path

import pytest

from amdep.graph import BlobHeuristics, SemanticGraph

GOLDENS = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def heuristics():
    return BlobHeuristics.default_table()


@pytest.fixture(scope="session")
def tiny_fairy():
    # "The tiny fairy glows": glow -ARG0-> fairy -mod-> tiny
    return SemanticGraph({"g": "glow", "f": "fairy", "t": "tiny"},
                         [("g", "f", "ARG0"), ("f", "t", "mod")], "g")


@pytest.fixture(scope="session")
def sparkle_glow():
    # "The fairy sparkles and glows": coordination with a shared argument
    return SemanticGraph({"a": "and", "s": "sparkle", "g": "glow", "f": "fairy"},
                         [("a", "s", "op1"), ("a", "g", "op2"),
                          ("s", "f", "ARG0"), ("g", "f", "ARG0")], "a")


@pytest.fixture(scope="session")
def relative_clause():
    # "the fairy that begins to glow": control verb under a relative clause
    return SemanticGraph({"f": "fairy", "b": "begin", "g": "glow"},
                         [("b", "f", "ARG0"), ("b", "g", "ARG1"), ("g", "f", "ARG0")], "f")


@pytest.fixture(scope="session")
def figure_goldens():
    trees = json.loads((GOLDENS / "figures-trees.json").read_text())
    return {item["id"]: item["tree"] for item in trees}


def tree_shape(tree_json):
    """Structural digest of a tree JSON object: edge operations plus the
    constants' types, independent of JSON formatting."""
    edges = sorted((e["parent"], e["op"], e["source"], e["child"])
                   for e in tree_json["edges"])
    types = {n: json.dumps(c["type"], sort_keys=True)
             for n, c in tree_json["nodes"].items()}
    consts = {n: (sorted((e["src"], e["label"], e["tgt"]) for e in c["edges"]),
                  sorted((nd["id"], nd.get("label")) for nd in c["nodes"]))
              for n, c in tree_json["nodes"].items()}
    return edges, types, consts
