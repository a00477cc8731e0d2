"""Command-line front end: gen, decompose, build-automata, count, train-em,
train-joint, viterbi, verify, stats, pipeline.

Every command with outputs writes a manifest (config snapshot, seeds, and
input/output digests) so runs are reproducible; identical seeds and inputs
give bit-identical outputs. Set AMD_LOG=DEBUG|INFO|WARNING for verbosity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .algebra import AMDepTree, check_well_typed, evaluate, read_trees, write_trees
from .automata import build_automaton, count_trees, read_automaton, write_automaton
from .decompose import Decomposition, decompose, enumerate_unrollings, canonical_tree, \
    default_plan, check_resolvable, resolve
from .errors import AmdepError, EmptyAutomaton, NotWellTyped
from .generate import GeneratorConfig, gen_corpus
from .graph import BlobHeuristics, SemanticGraph, is_isomorphic_mod_of, read_corpus, \
    write_corpus, partition_blobs, normalize_edges
from .training import (JointConfig, constant_entropy, event_histogram, em_fit,
                       joint_fit, random_tree_baseline, reconstruct_best)

log = logging.getLogger("amdep.cli")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARTIAL = 2


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")


def write_manifest(path, command, config, inputs, outputs, counts):
    """Deterministic run manifest. Wall time is deliberately logged instead
    of stored so reruns with equal seeds and inputs are bit-identical."""
    manifest = {
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {Path(p).name: _sha256(p) for p in inputs},
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
        "counts": counts,
    }
    _write_json(manifest, path)
    return manifest


def _load_blobs(path):
    return BlobHeuristics.from_tsv(path) if path else BlobHeuristics.default_table()


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args):
    cfg = GeneratorConfig(max_nodes=args.max_nodes,
                          sources=tuple(f"s{i + 1}" for i in range(args.sources)),
                          max_sources_per_constant=min(3, args.sources))
    t0 = time.time()
    corpus = gen_corpus(args.n, args.seed, cfg)
    write_corpus([(gid, g) for gid, g, _t in corpus], args.graphs)
    write_trees([(gid, t) for gid, _g, t in corpus], args.trees)
    log.info("generated %d instances in %.2fs", args.n, time.time() - t0)
    write_manifest(args.manifest or args.graphs + ".manifest.json", "gen",
                   {"n": args.n, "seed": args.seed, "max_nodes": args.max_nodes,
                    "sources": args.sources},
                   [], [args.graphs, args.trees], {"instances": args.n})
    return EXIT_OK


def _decompose_one(payload):
    gid, gobj, blobs_rules, tie_break, enumerate_all = payload
    g = SemanticGraph.from_json(gobj, graph_id=gid)
    heuristics = BlobHeuristics(blobs_rules)
    if not enumerate_all:
        d = decompose(g, heuristics, tie_break)
        if isinstance(d, Decomposition):
            return gid, [d.tree.to_json()], None
        return gid, [], d.to_json()
    p = partition_blobs(g, heuristics)
    n = normalize_edges(g, p)
    trees = []
    seen = set()
    if n.graph.is_acyclic():
        from amdep.graph import is_isomorphic

        for u in enumerate_unrollings(n, tie_break):
            c = canonical_tree(u, n)
            plan = default_plan(c)
            if not check_resolvable(c, plan, n).decomposable:
                continue
            try:
                t = resolve(c, plan)
                if not check_well_typed(t).is_empty:
                    continue
                if not is_isomorphic(evaluate(t), n.graph):
                    continue
            except AmdepError:
                continue
            obj = t.to_json()
            key = json.dumps(obj, sort_keys=True)
            if key not in seen:
                seen.add(key)
                trees.append(obj)
    if trees:
        return gid, trees, None
    return gid, [], {"reason": "no resolvable unrolling", "report": None}


def cmd_decompose(args):
    corpus = read_corpus(args.graphs)
    heuristics = _load_blobs(args.blobs)
    rules = ([(k, v) for k, v in heuristics.exact.items()]
             + [(p + "*", s) for p, s in heuristics.prefixes]
             + [("*", heuristics.default)])
    payloads = [(gid, g.to_json(), rules, args.tie_break, args.enumerate_unrollings)
                for gid, g in corpus]
    t0 = time.time()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_decompose_one, payloads))
    else:
        results = [_decompose_one(p) for p in payloads]
    trees = []
    skipped = []
    for gid, tree_objs, failure in results:
        if failure is not None:
            skipped.append({"id": gid, **failure})
        for k, tobj in enumerate(tree_objs):
            tid = gid if len(tree_objs) == 1 else f"{gid}#{k}"
            trees.append((tid, AMDepTree.from_json(tobj)))
    write_trees(trees, args.out)
    _write_json(skipped, args.report)
    log.info("decomposed %d/%d graphs in %.2fs", len(corpus) - len(skipped),
             len(corpus), time.time() - t0)
    write_manifest(args.manifest or args.out + ".manifest.json", "decompose",
                   {"tie_break": args.tie_break, "jobs": args.jobs,
                    "enumerate_unrollings": args.enumerate_unrollings},
                   [args.graphs] + ([args.blobs] if args.blobs else []),
                   [args.out, args.report],
                   {"graphs": len(corpus), "decomposed": len(corpus) - len(skipped),
                    "skipped": len(skipped), "trees": len(trees)})
    if skipped:
        return EXIT_PARTIAL
    return EXIT_OK


def _build_one(payload):
    tid, tobj, sources = payload
    tree = AMDepTree.from_json(tobj)
    a = build_automaton(tree, sources)
    a.graph_id = tid
    return tid, a


def cmd_build_automata(args):
    trees = read_trees(args.trees)
    sources = tuple(f"s{i + 1}" for i in range(args.sources))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    payloads = [(tid, t.to_json(), sources) for tid, t in trees]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_build_one, payloads))
    else:
        results = [_build_one(p) for p in payloads]
    index = []
    outputs = []
    empty = 0
    for tid, a in results:
        fname = f"{tid.replace('#', '_')}.auto"
        write_automaton(a, outdir / fname)
        outputs.append(outdir / fname)
        empty += 1 if a.empty else 0
        index.append({"id": tid, "file": fname, "rules": len(a.rules),
                      "states": len(a.states()), "empty": a.empty,
                      "trees": str(count_trees(a))})
    _write_json({"sources": list(sources), "automata": index}, outdir / "index.json")
    write_manifest(outdir / "manifest.json", "build-automata",
                   {"sources": args.sources, "jobs": args.jobs},
                   [args.trees], [str(p) for p in outputs] + [str(outdir / "index.json")],
                   {"automata": len(index), "empty": empty})
    return EXIT_PARTIAL if empty else EXIT_OK


def _read_automata_dir(path):
    idx = json.loads((Path(path) / "index.json").read_text())
    out = []
    for item in idx["automata"]:
        a, weights = read_automaton(Path(path) / item["file"])
        out.append((item["id"], a))
    return idx, out


def cmd_count(args):
    _idx, automata = _read_automata_dir(args.automata)
    total = 0
    for tid, a in automata:
        c = count_trees(a)
        total += c
        print(f"{tid}\t{c}")
    print(f"TOTAL\t{total}")
    return EXIT_OK


def cmd_train_em(args):
    _idx, automata = _read_automata_dir(args.automata)
    if args.iters == 0:
        from .training import random_weights_baseline
        table = random_weights_baseline(automata, seed=args.seed)
    else:
        table = em_fit(automata, iterations=args.iters, seed=args.seed,
                       smoothing=args.smoothing)
    _write_json(table.to_json(), args.out)
    write_manifest(args.manifest or args.out + ".manifest.json", "train-em",
                   {"iters": args.iters, "seed": args.seed, "smoothing": args.smoothing},
                   [str(Path(args.automata) / "index.json")], [args.out],
                   {"events": len(table.theta), "instances": len(automata)})
    return EXIT_OK


def cmd_train_joint(args):
    _idx, automata = _read_automata_dir(args.automata)
    if args.corpus:
        wanted = {gid for gid, _ in read_corpus(args.corpus)}
        automata = [(tid, a) for tid, a in automata if tid.split("#")[0] in wanted]
    cfg = JointConfig(epochs=args.epochs, lr=args.lr, batch=args.batch,
                      seed=args.seed, l2=args.l2)
    scorer = joint_fit(automata, cfg)
    _write_json(scorer.to_json(), args.out)
    write_manifest(args.manifest or args.out + ".manifest.json", "train-joint",
                   {"epochs": args.epochs, "lr": args.lr, "batch": args.batch,
                    "seed": args.seed, "l2": args.l2},
                   [str(Path(args.automata) / "index.json")], [args.out],
                   {"params": len(scorer.params), "instances": len(automata)})
    return EXIT_OK


def cmd_viterbi(args):
    _idx, automata = _read_automata_dir(args.automata)
    weights_obj = json.loads(Path(args.weights).read_text()) if args.weights else None
    best = []
    skipped = 0
    for tid, a in automata:
        try:
            if args.sample_seed is not None:
                run = random_tree_baseline(a, seed=f"{args.sample_seed}:{tid}")
            else:
                run = reconstruct_best(a, weights_obj)
                best.append((tid, run))
                continue
            from .automata import reconstruct_tree
            best.append((tid, reconstruct_tree(a, run)))
        except EmptyAutomaton:
            skipped += 1
    write_trees(best, args.out)
    write_manifest(args.manifest or args.out + ".manifest.json", "viterbi",
                   {"weights": Path(args.weights).name if args.weights else None,
                    "sample_seed": args.sample_seed},
                   [str(Path(args.automata) / "index.json")]
                   + ([args.weights] if args.weights else []),
                   [args.out], {"trees": len(best), "skipped": skipped})
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_verify(args):
    corpus = dict(read_corpus(args.graphs))
    trees = read_trees(args.trees)
    report = []
    failures = 0
    for tid, tree in trees:
        gid = tid.split("#")[0]
        entry = {"id": tid}
        if gid not in corpus:
            entry["error"] = "no matching graph"
            failures += 1
        else:
            try:
                typ = check_well_typed(tree)
                if not typ.is_empty:
                    entry["error"] = f"open sources {typ}"
                    failures += 1
                else:
                    result = evaluate(tree)
                    if is_isomorphic_mod_of(result, corpus[gid]):
                        entry["ok"] = True
                    else:
                        entry["error"] = "evaluation not isomorphic to graph"
                        failures += 1
            except (NotWellTyped, AmdepError) as exc:
                entry["error"] = str(exc)
                failures += 1
        report.append(entry)
    if args.out:
        _write_json(report, args.out)
    print(f"verified {len(trees) - failures}/{len(trees)} trees")
    return EXIT_FAIL if failures else EXIT_OK


def cmd_stats(args):
    trees = [t for _tid, t in read_trees(args.trees)]
    if not trees:
        print("constant entropy: n/a (no trees)")
        return EXIT_OK
    h = constant_entropy(trees)
    constants, edges = event_histogram(trees)
    print(f"constant entropy: {h:.6f} nats over {len(constants)} distinct constants")
    print("top constants:")
    for form, cnt in constants.most_common(args.top):
        print(f"  {cnt:6d}  {form}")
    print("edge operations:")
    for op, cnt in sorted(edges.items(), key=lambda kv: (-kv[1], kv[0])):
        print(f"  {cnt:6d}  {op}")
    return EXIT_OK


def cmd_pipeline(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ns = argparse.Namespace(**vars(args))
    ns.out = str(outdir / "trees.json")
    ns.report = str(outdir / "skipped.json")
    ns.manifest = str(outdir / "decompose.manifest.json")
    code1 = cmd_decompose(ns)
    ns2 = argparse.Namespace(trees=str(outdir / "trees.json"), sources=args.sources,
                             out=str(outdir / "automata"), jobs=args.jobs)
    code2 = cmd_build_automata(ns2)
    ns3 = argparse.Namespace(automata=str(outdir / "automata"), iters=args.iters,
                             seed=args.seed, smoothing=1e-6,
                             out=str(outdir / "theta.json"),
                             manifest=str(outdir / "theta.manifest.json"))
    cmd_train_em(ns3)
    ns4 = argparse.Namespace(automata=str(outdir / "automata"),
                             weights=str(outdir / "theta.json"), sample_seed=None,
                             out=str(outdir / "best-trees.json"),
                             manifest=str(outdir / "viterbi.manifest.json"))
    code4 = cmd_viterbi(ns4)
    ns5 = argparse.Namespace(graphs=args.graphs, trees=str(outdir / "best-trees.json"),
                             out=str(outdir / "verify.json"))
    code5 = cmd_verify(ns5)
    trees = [t for _tid, t in read_trees(outdir / "best-trees.json")]
    entropy = constant_entropy(trees) if trees else None
    skipped = json.loads((outdir / "skipped.json").read_text())
    counts = {
        "graphs": len(read_corpus(args.graphs)),
        "decomposed": len(read_corpus(args.graphs)) - len(skipped),
        "skipped_nondecomposable": len(skipped),
        "best_trees": len(trees),
        "constant_entropy": entropy,
    }
    write_manifest(outdir / "manifest.json", "pipeline",
                   {"sources": args.sources, "iters": args.iters, "seed": args.seed,
                    "tie_break": args.tie_break, "jobs": args.jobs},
                   [args.graphs] + ([args.blobs] if args.blobs else []),
                   [str(outdir / "trees.json"), str(outdir / "theta.json"),
                    str(outdir / "best-trees.json")],
                   counts)
    codes = [code1, code2, code4, code5]
    if EXIT_FAIL in codes:
        return EXIT_FAIL
    if EXIT_PARTIAL in codes:
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="amdep", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic corpus with gold trees")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-nodes", type=int, default=12)
    g.add_argument("--sources", type=int, default=3)
    g.add_argument("--graphs", required=True, help="output corpus JSON")
    g.add_argument("--trees", required=True, help="output gold trees JSON")
    g.add_argument("--manifest")
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("decompose", help="graphs -> dependency trees with placeholders")
    d.add_argument("--graphs", required=True)
    d.add_argument("--blobs", help="blob heuristics TSV (default: built-in table)")
    d.add_argument("--tie-break", default="sorted", help="sorted | seeded:K")
    d.add_argument("--enumerate-unrollings", action="store_true",
                   help="emit every resolvable unrolling, ids suffixed #k")
    d.add_argument("--out", required=True)
    d.add_argument("--report", required=True, help="skipped non-decomposable graphs")
    d.add_argument("--jobs", type=int, default=1)
    d.add_argument("--manifest")
    d.set_defaults(func=cmd_decompose)

    b = sub.add_parser("build-automata", help="trees -> per-graph source-name automata")
    b.add_argument("--trees", required=True)
    b.add_argument("--sources", type=int, default=3)
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_build_automata)

    c = sub.add_parser("count", help="print accepted-tree counts per automaton")
    c.add_argument("--automata", required=True)
    c.set_defaults(func=cmd_count)

    e = sub.add_parser("train-em", help="EM over tied event weights "
                                        "(--iters 0 gives the random-weights baseline)")
    e.add_argument("--automata", required=True)
    e.add_argument("--iters", type=int, default=25)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--smoothing", type=float, default=1e-6)
    e.add_argument("--out", required=True)
    e.add_argument("--manifest")
    e.set_defaults(func=cmd_train_em)

    j = sub.add_parser("train-joint", help="log-linear scorer by gradient ascent on log inside")
    j.add_argument("--automata", required=True)
    j.add_argument("--corpus", help="optional corpus JSON restricting instances")
    j.add_argument("--epochs", type=int, default=10)
    j.add_argument("--lr", type=float, default=0.5)
    j.add_argument("--batch", type=int, default=0, help="0 = full batch")
    j.add_argument("--seed", type=int, default=0)
    j.add_argument("--l2", type=float, default=0.0)
    j.add_argument("--out", required=True)
    j.add_argument("--manifest")
    j.set_defaults(func=cmd_train_joint)

    v = sub.add_parser("viterbi", help="best tree per automaton under weights "
                                       "(--sample-seed K samples uniformly instead)")
    v.add_argument("--automata", required=True)
    v.add_argument("--weights", help="theta.json or scorer.json; unit weights if omitted")
    v.add_argument("--sample-seed", type=int, default=None)
    v.add_argument("--out", required=True)
    v.add_argument("--manifest")
    v.set_defaults(func=cmd_viterbi)

    w = sub.add_parser("verify", help="check trees are well-typed and evaluate to their graphs")
    w.add_argument("--graphs", required=True)
    w.add_argument("--trees", required=True)
    w.add_argument("--out", help="optional JSON report")
    w.set_defaults(func=cmd_verify)

    s = sub.add_parser("stats", help="constant entropy and event histograms")
    s.add_argument("--trees", required=True)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_stats)

    q = sub.add_parser("pipeline", help="decompose, build automata, train EM, viterbi, verify")
    q.add_argument("--graphs", required=True)
    q.add_argument("--blobs")
    q.add_argument("--tie-break", default="sorted")
    q.add_argument("--enumerate-unrollings", action="store_true")
    q.add_argument("--sources", type=int, default=3)
    q.add_argument("--iters", type=int, default=25)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--jobs", type=int, default=1)
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("AMD_LOG", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AmdepError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
