"""Rooted, node/edge-labeled directed graphs: corpus I/O, blob partitions,
edge normalization and exact isomorphism checking."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from importlib import resources

from .errors import CorpusError

log = logging.getLogger("amdep.graph")


@dataclass(frozen=True, order=True)
class Edge:
    src: str
    tgt: str
    label: str


class SemanticGraph:
    """Immutable rooted directed graph with labeled nodes and edges.

    Node labels may be None only for fragment graphs used inside constants
    (open argument slots); corpus graphs must be fully labeled.
    """

    __slots__ = ("nodes", "edges", "root", "_out", "_in")

    def __init__(self, nodes, edges, root):
        self.nodes = dict(nodes)
        self.edges = tuple(sorted(set(Edge(*e) if not isinstance(e, Edge) else e for e in edges)))
        self.root = root
        out: dict[str, list[Edge]] = {n: [] for n in self.nodes}
        inc: dict[str, list[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            if e.src not in self.nodes:
                raise CorpusError(f"edge {e} uses unknown node {e.src!r}")
            if e.tgt not in self.nodes:
                raise CorpusError(f"edge {e} uses unknown node {e.tgt!r}")
            out[e.src].append(e)
            inc[e.tgt].append(e)
        if root not in self.nodes:
            raise CorpusError(f"root {root!r} is not a node")
        self._out = out
        self._in = inc

    def __setattr__(self, name, value):
        if name in SemanticGraph.__slots__ and hasattr(self, "_in"):
            raise AttributeError("SemanticGraph is immutable")
        super().__setattr__(name, value)

    def label(self, node):
        return self.nodes[node]

    def out_edges(self, node):
        return self._out[node]

    def in_edges(self, node):
        return self._in[node]

    def is_connected(self):
        """Connectivity ignoring edge directions."""
        if not self.nodes:
            return True
        seen = {self.root}
        stack = [self.root]
        while stack:
            n = stack.pop()
            for e in self._out[n]:
                if e.tgt not in seen:
                    seen.add(e.tgt)
                    stack.append(e.tgt)
            for e in self._in[n]:
                if e.src not in seen:
                    seen.add(e.src)
                    stack.append(e.src)
        return len(seen) == len(self.nodes)

    def is_acyclic(self):
        indeg = {n: 0 for n in self.nodes}
        for e in self.edges:
            indeg[e.tgt] += 1
        queue = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            n = queue.pop()
            seen += 1
            for e in self._out[n]:
                indeg[e.tgt] -= 1
                if indeg[e.tgt] == 0:
                    queue.append(e.tgt)
        return seen == len(self.nodes)

    def reachable_from(self, node):
        """Set of nodes reachable via directed edges (includes node itself)."""
        seen = {node}
        stack = [node]
        while stack:
            n = stack.pop()
            for e in self._out[n]:
                if e.tgt not in seen:
                    seen.add(e.tgt)
                    stack.append(e.tgt)
        return seen

    def validate(self, graph_id=None, require_labels=True):
        if require_labels:
            for n, lbl in self.nodes.items():
                if lbl is None:
                    raise CorpusError(f"node {n!r} has no label", graph_id)
        if not self.is_connected():
            raise CorpusError("graph is not connected", graph_id)
        triples = [(e.src, e.tgt, e.label) for e in self.edges]
        if len(triples) != len(set(triples)):
            raise CorpusError("duplicate (src, tgt, label) edge", graph_id)
        return self

    def renamed(self, mapping):
        """New graph with node ids replaced per mapping (total on nodes)."""
        return SemanticGraph(
            {mapping[n]: lbl for n, lbl in self.nodes.items()},
            [Edge(mapping[e.src], mapping[e.tgt], e.label) for e in self.edges],
            mapping[self.root],
        )

    def __eq__(self, other):
        return (
            isinstance(other, SemanticGraph)
            and self.nodes == other.nodes
            and self.edges == other.edges
            and self.root == other.root
        )

    def __hash__(self):
        return hash((frozenset(self.nodes.items()), self.edges, self.root))

    def __repr__(self):
        return f"SemanticGraph({len(self.nodes)} nodes, {len(self.edges)} edges, root={self.root!r})"

    def to_json(self):
        return {
            "nodes": [
                {"id": n, "label": lbl} if lbl is not None else {"id": n}
                for n, lbl in sorted(self.nodes.items())
            ],
            "edges": [{"src": e.src, "tgt": e.tgt, "label": e.label} for e in self.edges],
            "root": self.root,
        }

    @classmethod
    def from_json(cls, obj, graph_id=None):
        try:
            nodes = {nd["id"]: nd.get("label") for nd in obj["nodes"]}
            if len(nodes) != len(obj["nodes"]):
                raise CorpusError("duplicate node id", graph_id)
            edges = [Edge(e["src"], e["tgt"], e["label"]) for e in obj["edges"]]
            if len(edges) != len(set(edges)):
                raise CorpusError("duplicate (src, tgt, label) edge", graph_id)
            root = obj["root"]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"malformed graph object: {exc}", graph_id) from exc
        try:
            return cls(nodes, edges, root)
        except CorpusError as exc:
            raise CorpusError(str(exc), graph_id) from exc


# ---------------------------------------------------------------------------
# corpus I/O


def read_corpus(path):
    """Read a JSON corpus file into a list of (id, SemanticGraph) pairs."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise CorpusError(f"{path}: corpus must be a top-level array")
    out = []
    for i, obj in enumerate(data):
        gid = obj.get("id", f"#{i}") if isinstance(obj, dict) else f"#{i}"
        g = SemanticGraph.from_json(obj, graph_id=gid)
        g.validate(graph_id=gid)
        for e in g.edges:
            if e.label.endswith("-of"):
                log.debug("graph %s: edge label %r already ends in -of; if reversed, "
                          "normalization strips rather than doubles the suffix", gid, e.label)
                break
        out.append((gid, g))
    return out


def write_corpus(graphs, path):
    """Write (id, SemanticGraph) pairs as corpus JSON. read(write(x)) == x."""
    data = [{"id": gid, **g.to_json()} for gid, g in graphs]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# blob partition


class BlobHeuristics:
    """Label-based rules assigning each edge to one endpoint's blob.

    Rules are (pattern, side) with side "src" or "tgt". Exact label matches
    win over prefix patterns (ending in "*"); among prefix patterns the
    longest prefix wins; a final "*" row is the mandatory default.
    """

    def __init__(self, rules):
        self.exact = {}
        self.prefixes = []
        self.default = None
        for pattern, side in rules:
            if side not in ("src", "tgt"):
                raise ValueError(f"bad blob rule side {side!r}")
            if pattern == "*":
                self.default = side
            elif pattern.endswith("*"):
                self.prefixes.append((pattern[:-1], side))
            else:
                self.exact[pattern] = side
        if self.default is None:
            raise ValueError("blob heuristics require a '*' default row")
        self.prefixes.sort(key=lambda ps: -len(ps[0]))

    def side(self, label):
        if label in self.exact:
            return self.exact[label]
        for prefix, side in self.prefixes:
            if label.startswith(prefix):
                return side
        return self.default

    @classmethod
    def from_tsv(cls, path):
        rules = []
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{ln}: expected 'pattern<TAB>src|tgt'")
                rules.append((parts[0], parts[1]))
        return cls(rules)

    @classmethod
    def default_table(cls):
        with resources.files("amdep.data").joinpath("blobs.tsv").open("r") as fh:
            rules = [tuple(line.split("\t")) for line in fh.read().splitlines()
                     if line.strip() and not line.startswith("#")]
        return cls(rules)


@dataclass
class BlobPartition:
    """Owner map: every edge belongs to the blob of exactly one endpoint."""

    owner: dict[Edge, str]

    def blob(self, node):
        return [e for e, n in self.owner.items() if n == node]


def partition_blobs(g: SemanticGraph, heuristics: BlobHeuristics) -> BlobPartition:
    owner = {}
    for e in g.edges:
        owner[e] = e.src if heuristics.side(e.label) == "src" else e.tgt
    return BlobPartition(owner)


OF_SUFFIX = "-of"


def flip_label(label):
    return label[: -len(OF_SUFFIX)] if label.endswith(OF_SUFFIX) else label + OF_SUFFIX


@dataclass
class NormalizedGraph:
    """Graph with every edge pointing away from its blob owner.

    Reversed edges carry a "-of"-suffixed label (the suffix is stripped
    instead of doubled when the original label already ends in "-of").
    """

    graph: SemanticGraph
    partition: BlobPartition
    reversed_edges: frozenset[Edge]  # edges of `graph` that were flipped


def normalize_edges(g: SemanticGraph, p: BlobPartition) -> NormalizedGraph:
    if set(p.owner) != set(g.edges):
        raise ValueError("partition does not cover exactly the edges of the graph")
    edges = []
    flipped = []
    for e in g.edges:
        if p.owner[e] == e.src:
            edges.append(e)
        else:
            ne = Edge(e.tgt, e.src, flip_label(e.label))
            if e.label.endswith(OF_SUFFIX):
                log.warning("stripping existing -of suffix while reversing %s", e)
            edges.append(ne)
            flipped.append(ne)
    ng = SemanticGraph(g.nodes, edges, g.root)
    new_owner = {}
    for e in ng.edges:
        new_owner[e] = e.src
    return NormalizedGraph(ng, BlobPartition(new_owner), frozenset(flipped))


def of_normal_form(g: SemanticGraph):
    """Orientation-normal edge multiset: every "-of" edge is flipped and
    stripped, so graphs that differ only in edge-reversal convention compare
    equal. Returns (nodes, root, Counter of (src, tgt, label))."""
    counter = Counter()
    for e in g.edges:
        if e.label.endswith(OF_SUFFIX):
            counter[(e.tgt, e.src, e.label[: -len(OF_SUFFIX)])] += 1
        else:
            counter[(e.src, e.tgt, e.label)] += 1
    return dict(g.nodes), g.root, counter


# ---------------------------------------------------------------------------
# isomorphism


def _pair_labels(triples):
    pairs: dict[tuple[str, str], Counter] = {}
    for (s, t, lbl), k in triples.items():
        pairs.setdefault((s, t), Counter())[lbl] += k
    return pairs


def _signature(nodes, pairs):
    """Per-node invariant used to cut the search: label plus sorted multisets
    of incident edge labels by direction."""
    outs: dict[str, list] = {n: [] for n in nodes}
    ins: dict[str, list] = {n: [] for n in nodes}
    for (s, t), cnt in pairs.items():
        for lbl, k in cnt.items():
            outs[s].extend([lbl] * k)
            ins[t].extend([lbl] * k)
    return {n: (nodes[n], tuple(sorted(outs[n])), tuple(sorted(ins[n]))) for n in nodes}


def _match(nodes1, root1, pairs1, nodes2, root2, pairs2):
    if len(nodes1) != len(nodes2):
        return False
    if sum(sum(c.values()) for c in pairs1.values()) != sum(sum(c.values()) for c in pairs2.values()):
        return False
    sig1 = _signature(nodes1, pairs1)
    sig2 = _signature(nodes2, pairs2)
    if sorted(sig1.values()) != sorted(sig2.values()):
        return False
    if sig1[root1] != sig2[root2]:
        return False

    adj1: dict[str, set[str]] = {n: set() for n in nodes1}
    for s, t in pairs1:
        adj1[s].add(t)
        adj1[t].add(s)

    # order g1 nodes so each (after the root) touches an earlier one
    order = [root1]
    placed = {root1}
    frontier = [root1]
    while frontier:
        n = frontier.pop(0)
        for m in sorted(adj1[n]):
            if m not in placed:
                placed.add(m)
                order.append(m)
                frontier.append(m)
    if len(order) != len(nodes1):  # disconnected: match components by signature fallback
        for n in sorted(nodes1):
            if n not in placed:
                placed.add(n)
                order.append(n)

    candidates = {n: [m for m in nodes2 if sig2[m] == sig1[n]] for n in order}
    mapping: dict[str, str] = {}
    used: set[str] = set()

    def consistent(n, m):
        for prev1, prev2 in mapping.items():
            if pairs1.get((n, prev1), Counter()) != pairs2.get((m, prev2), Counter()):
                return False
            if pairs1.get((prev1, n), Counter()) != pairs2.get((prev2, m), Counter()):
                return False
        if pairs1.get((n, n), Counter()) != pairs2.get((m, m), Counter()):
            return False
        return True

    def extend(i):
        if i == len(order):
            return True
        n = order[i]
        for m in candidates[n]:
            if m in used:
                continue
            if n == root1 and m != root2:
                continue
            if not consistent(n, m):
                continue
            mapping[n] = m
            used.add(m)
            if extend(i + 1):
                return True
            del mapping[n]
            used.discard(m)
        return False

    candidates[root1] = [root2]
    return extend(0)


def is_isomorphic(g1: SemanticGraph, g2: SemanticGraph) -> bool:
    """Exact isomorphism of rooted labeled graphs: a node bijection preserving
    the root, node labels, and labeled edges."""
    t1 = Counter((e.src, e.tgt, e.label) for e in g1.edges)
    t2 = Counter((e.src, e.tgt, e.label) for e in g2.edges)
    return _match(dict(g1.nodes), g1.root, _pair_labels(t1),
                  dict(g2.nodes), g2.root, _pair_labels(t2))


def is_isomorphic_mod_of(g1: SemanticGraph, g2: SemanticGraph) -> bool:
    """Isomorphism after normalizing edge orientation: an edge s -x-of-> t is
    treated as t -x-> s on both sides, so a graph and its blob-normalized
    form compare equal."""
    n1, r1, t1 = of_normal_form(g1)
    n2, r2, t2 = of_normal_form(g2)
    return _match(n1, r1, _pair_labels(t1), n2, r2, _pair_labels(t2))
