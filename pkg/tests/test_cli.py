import json
from pathlib import Path

import pytest

from amdep.cli import main

GOLDENS = Path(__file__).parent / "goldens"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated corpus plus a full pipeline run."""
    root = tmp_path_factory.mktemp("cli")
    assert run("gen", "--n", 12, "--seed", 3, "--max-nodes", 8,
               "--graphs", root / "graphs.json", "--trees", root / "gold.json") == 0
    assert run("pipeline", "--graphs", root / "graphs.json", "--sources", 3,
               "--iters", 5, "--seed", 1, "--out", root / "run") == 0
    return root


class TestGen:
    def test_deterministic(self, tmp_path):
        for d in ("a", "b"):
            (tmp_path / d).mkdir()
            assert run("gen", "--n", 5, "--seed", 9,
                       "--graphs", tmp_path / d / "g.json",
                       "--trees", tmp_path / d / "t.json") == 0
        assert (tmp_path / "a/g.json").read_bytes() == (tmp_path / "b/g.json").read_bytes()
        assert (tmp_path / "a/t.json").read_bytes() == (tmp_path / "b/t.json").read_bytes()

    def test_empty(self, tmp_path):
        assert run("gen", "--n", 0, "--graphs", tmp_path / "g.json",
                   "--trees", tmp_path / "t.json") == 0
        assert json.loads((tmp_path / "g.json").read_text()) == []


class TestDecompose:
    def test_figures(self, tmp_path):
        out = tmp_path / "trees.json"
        report = tmp_path / "skipped.json"
        assert run("decompose", "--graphs", GOLDENS / "figures-graphs.json",
                   "--out", out, "--report", report) == 0
        trees = json.loads(out.read_text())
        assert len(trees) == 3
        assert json.loads(report.read_text()) == []

    def test_nondecomposable_partial_exit(self, tmp_path):
        corpus = json.loads((GOLDENS / "figures-graphs.json").read_text())
        corpus.append({
            "id": "bad-cycle",
            "nodes": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
            "edges": [{"src": "a", "tgt": "b", "label": "ARG0"},
                      {"src": "b", "tgt": "a", "label": "ARG1"}],
            "root": "a"})
        src = tmp_path / "corpus.json"
        src.write_text(json.dumps(corpus))
        code = run("decompose", "--graphs", src, "--out", tmp_path / "t.json",
                   "--report", tmp_path / "skip.json")
        assert code == 2
        skipped = json.loads((tmp_path / "skip.json").read_text())
        assert [s["id"] for s in skipped] == ["bad-cycle"]

    def test_enumerate_unrollings_variants(self, tmp_path):
        assert run("decompose", "--graphs", GOLDENS / "figures-graphs.json",
                   "--enumerate-unrollings",
                   "--out", tmp_path / "t.json", "--report", tmp_path / "s.json") == 0
        ids = [item["id"] for item in json.loads((tmp_path / "t.json").read_text())]
        assert "fairy-that-begins-to-glow#0" in ids
        assert "fairy-that-begins-to-glow#1" in ids

    def test_jobs_parallel_identical(self, workspace, tmp_path):
        assert run("decompose", "--graphs", workspace / "graphs.json",
                   "--out", tmp_path / "t2.json", "--report", tmp_path / "s2.json",
                   "--jobs", 2) == 0
        assert (tmp_path / "t2.json").read_bytes() == \
            (workspace / "run/trees.json").read_bytes()

    def test_custom_blob_table(self, tmp_path):
        blobs = tmp_path / "blobs.tsv"
        blobs.write_text("ARG*\tsrc\n*\tsrc\n")
        assert run("decompose", "--graphs", GOLDENS / "figures-graphs.json",
                   "--blobs", blobs, "--out", tmp_path / "t.json",
                   "--report", tmp_path / "s.json") in (0, 2)


class TestAutomataCommands:
    def test_build_and_count(self, workspace, capsys):
        idx = json.loads((workspace / "run/automata/index.json").read_text())
        assert idx["sources"] == ["s1", "s2", "s3"]
        assert all(not item["empty"] for item in idx["automata"])
        assert run("count", "--automata", workspace / "run/automata") == 0
        out = capsys.readouterr().out
        lines = dict(line.split("\t") for line in out.strip().splitlines())
        for item in idx["automata"]:
            assert lines[item["id"]] == item["trees"]

    def test_two_sources_skips_wide_constants(self, tmp_path):
        # corpus with a three-slot constant: with two sources the instance is
        # reported empty exactly as slot counting predicts
        corpus = [{
            "id": "wide",
            "nodes": [{"id": "a", "label": "give"}, {"id": "b", "label": "cat"},
                      {"id": "c", "label": "dog"}, {"id": "d", "label": "bone"}],
            "edges": [{"src": "a", "tgt": "b", "label": "ARG0"},
                      {"src": "a", "tgt": "c", "label": "ARG1"},
                      {"src": "a", "tgt": "d", "label": "ARG2"}],
            "root": "a"}]
        src = tmp_path / "c.json"
        src.write_text(json.dumps(corpus))
        assert run("decompose", "--graphs", src, "--out", tmp_path / "t.json",
                   "--report", tmp_path / "s.json") == 0
        code = run("build-automata", "--trees", tmp_path / "t.json",
                   "--sources", 2, "--out", tmp_path / "auto2")
        assert code == 2
        idx = json.loads((tmp_path / "auto2/index.json").read_text())
        assert idx["automata"][0]["empty"] is True
        assert run("build-automata", "--trees", tmp_path / "t.json",
                   "--sources", 3, "--out", tmp_path / "auto3") == 0


class TestTrainAndViterbi:
    def test_theta_written(self, workspace):
        theta = json.loads((workspace / "run/theta.json").read_text())
        assert theta["theta"] and theta["meta"]["iterations"] == 5
        ll = theta["meta"]["log_likelihood"]
        assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:]))

    def test_random_weights_baseline_iters_zero(self, workspace, tmp_path):
        assert run("train-em", "--automata", workspace / "run/automata",
                   "--iters", 0, "--seed", 7, "--out", tmp_path / "rw.json") == 0
        table = json.loads((tmp_path / "rw.json").read_text())
        assert all(0.1 <= v <= 1.0 for v in table["theta"].values())

    def test_train_joint(self, workspace, tmp_path):
        assert run("train-joint", "--automata", workspace / "run/automata",
                   "--epochs", 3, "--lr", 0.2, "--seed", 0,
                   "--out", tmp_path / "scorer.json") == 0
        scorer = json.loads((tmp_path / "scorer.json").read_text())
        assert scorer["params"]
        assert run("viterbi", "--automata", workspace / "run/automata",
                   "--weights", tmp_path / "scorer.json",
                   "--out", tmp_path / "best.json") == 0

    def test_viterbi_sampling_mode(self, workspace, tmp_path):
        assert run("viterbi", "--automata", workspace / "run/automata",
                   "--sample-seed", 5, "--out", tmp_path / "sampled.json") == 0
        assert run("verify", "--graphs", workspace / "graphs.json",
                   "--trees", tmp_path / "sampled.json") == 0


class TestVerify:
    def test_gold_trees_pass(self, workspace):
        assert run("verify", "--graphs", workspace / "graphs.json",
                   "--trees", workspace / "gold.json") == 0

    def test_corrupted_tree_fails(self, workspace, tmp_path):
        trees = json.loads((workspace / "run/best-trees.json").read_text())
        # delete one request annotation: the tree stops type-checking
        def strip_request(obj):
            for c in obj["tree"]["nodes"].values():
                for name, req in c["type"].items():
                    if req:
                        c["type"][name] = {}
                        return True
            return False
        assert any(strip_request(item) for item in trees)
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(trees))
        assert run("verify", "--graphs", workspace / "graphs.json",
                   "--trees", bad, "--out", tmp_path / "report.json") == 1
        report = json.loads((tmp_path / "report.json").read_text())
        assert any("error" in item for item in report)

    def test_empty_inputs_pass(self, tmp_path):
        (tmp_path / "g.json").write_text("[]")
        (tmp_path / "t.json").write_text("[]")
        assert run("verify", "--graphs", tmp_path / "g.json",
                   "--trees", tmp_path / "t.json") == 0


class TestStatsAndPipeline:
    def test_stats_output(self, workspace, capsys):
        assert run("stats", "--trees", workspace / "run/best-trees.json") == 0
        out = capsys.readouterr().out
        assert "constant entropy:" in out
        assert "edge operations:" in out

    def test_figure_demo_pipeline(self, tmp_path):
        assert run("pipeline", "--graphs", GOLDENS / "figures-graphs.json",
                   "--sources", 3, "--iters", 3, "--out", tmp_path / "demo") == 0
        manifest = json.loads((tmp_path / "demo/manifest.json").read_text())
        assert manifest["counts"]["graphs"] == 3
        assert manifest["counts"]["decomposed"] == 3
        assert manifest["counts"]["skipped_nondecomposable"] == 0

    def test_pipeline_deterministic(self, workspace, tmp_path):
        assert run("pipeline", "--graphs", workspace / "graphs.json", "--sources", 3,
                   "--iters", 5, "--seed", 1, "--out", tmp_path / "again") == 0
        for name in ("trees.json", "theta.json", "best-trees.json", "manifest.json"):
            assert (tmp_path / "again" / name).read_bytes() == \
                (workspace / "run" / name).read_bytes(), name

    def test_manifest_digests_cover_outputs(self, workspace):
        manifest = json.loads((workspace / "run/manifest.json").read_text())
        assert set(manifest["outputs"]) == {"trees.json", "theta.json", "best-trees.json"}
        assert manifest["command"] == "pipeline"
