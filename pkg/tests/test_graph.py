import json
import random

import pytest

from amdep.errors import CorpusError
from amdep.graph import (
    BlobHeuristics,
    Edge,
    SemanticGraph,
    is_isomorphic,
    is_isomorphic_mod_of,
    normalize_edges,
    partition_blobs,
    read_corpus,
    write_corpus,
)


def write_json(tmp_path, obj, name="corpus.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


class TestCorpusIO:
    def test_single_graph(self, tmp_path):
        p = write_json(tmp_path, [{
            "id": "fairy-glows",
            "nodes": [{"id": "g", "label": "glow"}, {"id": "f", "label": "fairy"}],
            "edges": [{"src": "g", "tgt": "f", "label": "ARG0"}],
            "root": "g",
        }])
        [(gid, g)] = read_corpus(p)
        assert gid == "fairy-glows"
        assert len(g.nodes) == 2 and len(g.edges) == 1
        assert g.label("g") == "glow"

    def test_empty_corpus(self, tmp_path):
        p = write_json(tmp_path, [])
        assert read_corpus(p) == []

    def test_dangling_edge_names_offender(self, tmp_path):
        p = write_json(tmp_path, [{
            "id": "bad",
            "nodes": [{"id": "a", "label": "A"}],
            "edges": [{"src": "a", "tgt": "x", "label": "ARG0"}],
            "root": "a",
        }])
        with pytest.raises(CorpusError, match="'x'"):
            read_corpus(p)

    def test_missing_root(self, tmp_path):
        p = write_json(tmp_path, [{
            "id": "bad", "nodes": [{"id": "a", "label": "A"}], "edges": [], "root": "zz",
        }])
        with pytest.raises(CorpusError):
            read_corpus(p)

    def test_disconnected(self, tmp_path):
        p = write_json(tmp_path, [{
            "id": "bad",
            "nodes": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
            "edges": [], "root": "a",
        }])
        with pytest.raises(CorpusError, match="connected"):
            read_corpus(p)

    def test_duplicate_parallel_edge_rejected(self, tmp_path):
        p = write_json(tmp_path, [{
            "id": "bad",
            "nodes": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
            "edges": [{"src": "a", "tgt": "b", "label": "x"},
                      {"src": "a", "tgt": "b", "label": "x"}],
            "root": "a",
        }])
        with pytest.raises(CorpusError):
            read_corpus(p)

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(CorpusError):
            read_corpus(p)

    def test_round_trip(self, tmp_path, sparkle_glow):
        out = tmp_path / "out.json"
        write_corpus([("s", sparkle_glow)], out)
        [(gid, g)] = read_corpus(out)
        assert gid == "s" and g == sparkle_glow
        assert is_isomorphic(g, sparkle_glow)

    def test_write_empty(self, tmp_path):
        out = tmp_path / "empty.json"
        write_corpus([], out)
        assert json.loads(out.read_text()) == []


class TestBlobs:
    def test_default_assignments(self, tiny_fairy, heuristics):
        p = partition_blobs(tiny_fairy, heuristics)
        arg0 = Edge("g", "f", "ARG0")
        mod = Edge("f", "t", "mod")
        assert p.owner[arg0] == "g"  # argument edges stay with the head
        assert p.owner[mod] == "t"  # the modifier owns its mod edge

    def test_single_node(self, heuristics):
        g = SemanticGraph({"a": "A"}, [], "a")
        assert partition_blobs(g, heuristics).owner == {}

    def test_prefix_and_default(self, heuristics):
        assert heuristics.side("ARG3") == "src"
        assert heuristics.side("op12") == "src"
        assert heuristics.side("snt2") == "src"
        assert heuristics.side("mod") == "tgt"
        assert heuristics.side("whatever") == "src"

    def test_tsv_parsing(self, tmp_path):
        p = tmp_path / "blobs.tsv"
        p.write_text("# comment\nfoo\ttgt\nfo*\tsrc\n*\ttgt\n")
        h = BlobHeuristics.from_tsv(p)
        assert h.side("foo") == "tgt"  # exact beats prefix
        assert h.side("fox") == "src"
        assert h.side("bar") == "tgt"

    def test_longest_prefix_wins(self):
        h = BlobHeuristics([("AR*", "tgt"), ("ARG*", "src"), ("*", "tgt")])
        assert h.side("ARG1") == "src"
        assert h.side("ARX") == "tgt"

    def test_default_row_required(self):
        with pytest.raises(ValueError):
            BlobHeuristics([("ARG*", "src")])


class TestNormalize:
    def test_mod_edge_reversed(self, tiny_fairy, heuristics):
        n = normalize_edges(tiny_fairy, partition_blobs(tiny_fairy, heuristics))
        assert Edge("t", "f", "mod-of") in n.graph.edges
        assert Edge("g", "f", "ARG0") in n.graph.edges
        assert Edge("f", "t", "mod") not in n.graph.edges

    def test_of_suffix_stripped_not_doubled(self, heuristics):
        g = SemanticGraph({"t": "tiny", "f": "fairy"}, [("t", "f", "mod-of")], "f")
        h = BlobHeuristics([("mod-of", "tgt"), ("*", "src")])
        n = normalize_edges(g, partition_blobs(g, h))
        assert n.graph.edges == (Edge("f", "t", "mod"),)

    def test_edges_point_away_from_owner(self, heuristics):
        rng = random.Random(0)
        for _ in range(25):
            k = rng.randint(2, 7)
            nodes = {f"n{i}": f"L{rng.randint(0, 3)}" for i in range(k)}
            edges = set()
            for i in range(1, k):
                j = rng.randrange(i)
                edges.add((f"n{i}", f"n{j}", rng.choice(["ARG0", "ARG1", "mod", "x"]))
                          if rng.random() < 0.5 else
                          (f"n{j}", f"n{i}", rng.choice(["ARG0", "ARG1", "mod", "x"])))
            g = SemanticGraph(nodes, edges, "n0")
            p = partition_blobs(g, heuristics)
            n = normalize_edges(g, p)
            for e in n.graph.edges:
                assert n.partition.owner[e] == e.src

    def test_double_normalize_is_identity(self, tiny_fairy, heuristics):
        n1 = normalize_edges(tiny_fairy, partition_blobs(tiny_fairy, heuristics))
        n2 = normalize_edges(n1.graph, partition_blobs(n1.graph, heuristics))
        assert n2.graph == n1.graph

    def test_partition_must_cover(self, tiny_fairy, heuristics):
        p = partition_blobs(tiny_fairy, heuristics)
        del p.owner[Edge("g", "f", "ARG0")]
        with pytest.raises(ValueError):
            normalize_edges(tiny_fairy, p)


class TestIsomorphism:
    def test_renaming_invariance(self, sparkle_glow):
        renamed = sparkle_glow.renamed({"a": "x1", "s": "x2", "g": "x3", "f": "x4"})
        assert is_isomorphic(sparkle_glow, renamed)

    def test_edge_label_mismatch(self):
        g1 = SemanticGraph({"g": "glow", "f": "fairy"}, [("g", "f", "ARG0")], "g")
        g2 = SemanticGraph({"g": "glow", "f": "fairy"}, [("g", "f", "ARG1")], "g")
        assert not is_isomorphic(g1, g2)

    def test_root_must_match(self):
        g1 = SemanticGraph({"a": "X", "b": "X"}, [("a", "b", "e")], "a")
        g2 = SemanticGraph({"a": "X", "b": "X"}, [("a", "b", "e")], "b")
        assert not is_isomorphic(g1, g2)

    def test_node_label_mismatch(self):
        g1 = SemanticGraph({"a": "A", "b": "B"}, [("a", "b", "e")], "a")
        g2 = SemanticGraph({"a": "A", "b": "C"}, [("a", "b", "e")], "a")
        assert not is_isomorphic(g1, g2)

    def test_symmetric_candidates_need_backtracking(self):
        # two same-labeled children, only one carries a grandchild
        g1 = SemanticGraph({"r": "R", "a": "X", "b": "X", "c": "C"},
                           [("r", "a", "e"), ("r", "b", "e"), ("a", "c", "f")], "r")
        g2 = SemanticGraph({"r": "R", "a": "X", "b": "X", "c": "C"},
                           [("r", "a", "e"), ("r", "b", "e"), ("b", "c", "f")], "r")
        assert is_isomorphic(g1, g2)

    def test_reentrancy_shape_distinguished(self):
        shared = SemanticGraph({"a": "A", "b": "B", "c": "B", "d": "D"},
                               [("a", "b", "x"), ("a", "c", "y"),
                                ("b", "d", "z"), ("c", "d", "z")], "a")
        split = SemanticGraph({"a": "A", "b": "B", "c": "B", "d": "D", "e": "D"},
                              [("a", "b", "x"), ("a", "c", "y"),
                               ("b", "d", "z"), ("c", "e", "z")], "a")
        assert not is_isomorphic(shared, split)

    def test_equivalence_relation_spot_checks(self, heuristics):
        rng = random.Random(1)
        graphs = []
        for _ in range(6):
            k = rng.randint(2, 6)
            nodes = {f"n{i}": f"L{rng.randint(0, 2)}" for i in range(k)}
            edges = {(f"n{rng.randrange(i) if i else 0}", f"n{i}", "e") for i in range(1, k)}
            graphs.append(SemanticGraph(nodes, edges, "n0"))
        for g in graphs:
            assert is_isomorphic(g, g)  # reflexive
            renamed = g.renamed({n: f"r_{n}" for n in g.nodes})
            assert is_isomorphic(g, renamed) and is_isomorphic(renamed, g)  # symmetric
        for g1 in graphs:
            for g2 in graphs:
                for g3 in graphs:
                    if is_isomorphic(g1, g2) and is_isomorphic(g2, g3):
                        assert is_isomorphic(g1, g3)  # transitive

    def test_mod_of_orientation_equivalence(self):
        amr = SemanticGraph({"f": "fairy", "t": "tiny"}, [("f", "t", "mod")], "f")
        normalized = SemanticGraph({"f": "fairy", "t": "tiny"}, [("t", "f", "mod-of")], "f")
        assert not is_isomorphic(amr, normalized)
        assert is_isomorphic_mod_of(amr, normalized)
