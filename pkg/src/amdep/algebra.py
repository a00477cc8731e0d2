"""The apply/modify graph algebra: typed s-graphs, dependency trees and
their bottom-up evaluation.

Source names are plain strings. Graph-specific placeholder names have the
form ``ps(<node-id>)``; reusable names are anything else (``s1``, ``s2``...).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal

from .errors import (
    LabelClash,
    MissingSource,
    ModAddsSources,
    NonEmptyModRequest,
    NonEmptyRootType,
    NotWellTyped,
    RequestClash,
    RequestMismatch,
    TypeDepthExceeded,
)
from .graph import Edge, SemanticGraph

MAX_TYPE_DEPTH = 10


def placeholder(node_id: str) -> str:
    return f"ps({node_id})"


def is_placeholder(name: str) -> bool:
    return name.startswith("ps(") and name.endswith(")")


def placeholder_target(name: str) -> str:
    if not is_placeholder(name):
        raise ValueError(f"{name!r} is not a placeholder source name")
    return name[3:-1]


class AMType:
    """A finite map from source names to request types. Immutable, hashable,
    compared structurally (exact map equality, no subsumption)."""

    __slots__ = ("entries", "_hash")

    def __init__(self, requests=()):
        if isinstance(requests, AMType):
            entries = requests.entries
        elif isinstance(requests, dict):
            entries = tuple(sorted((str(k), v if isinstance(v, AMType) else AMType(v))
                                   for k, v in requests.items()))
        else:
            entries = tuple(sorted((str(k), v if isinstance(v, AMType) else AMType(v))
                                   for k, v in requests))
        names = [k for k, _ in entries]
        if len(names) != len(set(names)):
            raise ValueError("duplicate source name in type")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_hash", hash(entries))
        if self.depth() > MAX_TYPE_DEPTH:
            raise TypeDepthExceeded(f"type nesting exceeds {MAX_TYPE_DEPTH}")

    def __setattr__(self, name, value):
        raise AttributeError("AMType is immutable")

    def names(self):
        return tuple(k for k, _ in self.entries)

    def __contains__(self, name):
        return any(k == name for k, _ in self.entries)

    def request(self, name) -> "AMType":
        for k, v in self.entries:
            if k == name:
                return v
        raise MissingSource(name)

    def without(self, name) -> "AMType":
        return AMType(tuple((k, v) for k, v in self.entries if k != name))

    def updated(self, name, req: "AMType") -> "AMType":
        rest = tuple((k, v) for k, v in self.entries if k != name)
        return AMType(rest + ((name, req),))

    @property
    def is_empty(self):
        return not self.entries

    def depth(self):
        if not self.entries:
            return 0
        return 1 + max(v.depth() for _, v in self.entries)

    def all_names(self):
        """Every source name occurring at any nesting level."""
        out = set()
        for k, v in self.entries:
            out.add(k)
            out |= v.all_names()
        return out

    def rename(self, mapping) -> "AMType":
        return AMType(tuple((mapping.get(k, k), v.rename(mapping)) for k, v in self.entries))

    def __eq__(self, other):
        return isinstance(other, AMType) and self.entries == other.entries

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return str(self)

    def __str__(self):
        if not self.entries:
            return "[]"
        parts = []
        for k, v in self.entries:
            parts.append(k if v.is_empty else f"{k}{v}")
        return "[" + ", ".join(parts) + "]"

    def to_json(self):
        return {k: v.to_json() for k, v in self.entries}

    @classmethod
    def from_json(cls, obj) -> "AMType":
        return cls({k: cls.from_json(v) for k, v in obj.items()})


EMPTY_TYPE = AMType()


def type_unify(a: AMType, b: AMType) -> AMType:
    """Union of top-level sources; shared names must carry structurally equal
    requests (checked recursively via structural equality)."""
    out = dict(a.entries)
    for k, v in b.entries:
        if k in out and out[k] != v:
            raise RequestClash(k, out[k], v)
        out[k] = v
    return AMType(out)


def is_submap(sub: AMType, sup: AMType) -> bool:
    """True iff every entry of sub occurs in sup with an equal request."""
    return all(k in sup and sup.request(k) == v for k, v in sub.entries)


# ---------------------------------------------------------------------------
# s-graphs


@dataclass
class SGraph:
    """A graph fragment with a designated root, source-marked nodes and a
    type. Used both as a tree label (graph constant) and as an evaluation
    result. Treated as immutable."""

    graph: SemanticGraph
    root: str
    sources: dict[str, str]  # source name -> node id (injective)
    typ: AMType

    def __post_init__(self):
        seen = set()
        for name, node in self.sources.items():
            if node not in self.graph.nodes:
                raise ValueError(f"source {name!r} marks unknown node {node!r}")
            if node in seen:
                raise ValueError(f"node {node!r} carries two source names")
            seen.add(node)
        if self.root in seen and len(self.graph.nodes) > 1:
            raise ValueError("root cannot carry a source name")
        for name in self.typ.names():
            if name not in self.sources:
                raise ValueError(f"top-level source {name!r} of type has no marked node")
        for name in self.sources:
            if name not in self.typ:
                raise ValueError(f"marked source {name!r} missing from type")

    def with_type(self, typ: AMType) -> "SGraph":
        return SGraph(self.graph, self.root, dict(self.sources), typ)

    def rename_sources(self, mapping) -> "SGraph":
        return SGraph(
            self.graph,
            self.root,
            {mapping.get(k, k): v for k, v in self.sources.items()},
            self.typ.rename(mapping),
        )

    def placeholders(self):
        """All placeholder names anywhere in the type (nested included)."""
        return {n for n in self.typ.all_names() if is_placeholder(n)}

    def root_label(self):
        return self.graph.label(self.root)

    def __eq__(self, other):
        return (
            isinstance(other, SGraph)
            and self.graph == other.graph
            and self.root == other.root
            and self.sources == other.sources
            and self.typ == other.typ
        )

    def to_json(self):
        return {**self.graph.to_json(), "sources": dict(sorted(self.sources.items())),
                "type": self.typ.to_json()}

    @classmethod
    def from_json(cls, obj) -> "SGraph":
        g = SemanticGraph.from_json(obj)
        return cls(g, g.root, dict(obj.get("sources", {})), AMType.from_json(obj.get("type", {})))


def constant(label, node_id, slots=(), typ=None) -> SGraph:
    """Convenience builder for single-node constants.

    slots: iterable of (edge_label, source_name); slot nodes are unlabeled
    and named after their source. typ defaults to empty requests.
    """
    nodes = {node_id: label}
    edges = []
    sources = {}
    for edge_label, src_name in slots:
        slot_id = sources.get(src_name)
        if slot_id is None:
            slot_id = f"{node_id}@{src_name}"
            nodes[slot_id] = None
            sources[src_name] = slot_id
        edges.append(Edge(node_id, slot_id, edge_label))
    t = typ if typ is not None else AMType({s: EMPTY_TYPE for s in sources})
    return SGraph(SemanticGraph(nodes, edges, node_id), node_id, sources, t)


def ref_placeholder(node_id: str) -> SGraph:
    """Empty-type single unlabeled node; fills a slot without contributing."""
    return SGraph(SemanticGraph({node_id: None}, [], node_id), node_id, {}, EMPTY_TYPE)


def _merge_label(a, b):
    if a is None:
        return b
    if b is None or a == b:
        return a
    raise LabelClash(a, b)


def _merge(host: SGraph, guest: SGraph, mapping):
    """Union of two s-graph graphs with guest nodes remapped per mapping;
    unmapped guest nodes get fresh ids. Returns (graph nodes, edges, id map)."""
    nodes = dict(host.graph.nodes)
    idmap = dict(mapping)
    for n, lbl in guest.graph.nodes.items():
        if n in idmap:
            tgt = idmap[n]
            nodes[tgt] = _merge_label(nodes[tgt], lbl)
        else:
            nid = n
            k = 0
            while nid in nodes:
                k += 1
                nid = f"{n}~{k}"
            idmap[n] = nid
            nodes[nid] = lbl
    edges = set(host.graph.edges)
    for e in guest.graph.edges:
        edges.add(Edge(idmap[e.src], idmap[e.tgt], e.label))
    return nodes, edges, idmap


def apply(head: SGraph, arg: SGraph, source: str) -> SGraph:
    """Plug the root of arg into the named source slot of head. Shared source
    names denote one merged node afterwards; the result keeps head's root."""
    if source not in head.sources:
        raise MissingSource(source)
    req = head.typ.request(source)
    if req != arg.typ:
        raise RequestMismatch(source, req, arg.typ)
    result_type = type_unify(head.typ.without(source), arg.typ)
    mapping = {arg.root: head.sources[source]}
    for name, nid in arg.sources.items():
        if name in head.sources and name != source:
            mapping.setdefault(nid, head.sources[name])
    nodes, edges, idmap = _merge(head, arg, mapping)
    sources = {}
    for name in result_type.names():
        if name in head.sources and name != source:
            sources[name] = head.sources[name]
        else:
            sources[name] = idmap[arg.sources[name]]
    return SGraph(SemanticGraph(nodes, edges, head.root), head.root, sources, result_type)


def modify(head: SGraph, mod: SGraph, source: str) -> SGraph:
    """Plug head's root into the named slot of the modifier; the modifier's
    remaining sources must already be in head's type and merge by name. The
    result keeps head's root and type."""
    if source not in mod.sources:
        raise MissingSource(source)
    if not mod.typ.request(source).is_empty:
        raise NonEmptyModRequest(source)
    leftover = mod.typ.without(source)
    extra = [n for n in leftover.names() if n not in head.typ]
    if extra:
        raise ModAddsSources(extra)
    for name in leftover.names():
        if head.typ.request(name) != leftover.request(name):
            raise RequestClash(name, head.typ.request(name), leftover.request(name))
    mapping = {mod.sources[source]: head.root}
    for name in leftover.names():
        mapping.setdefault(mod.sources[name], head.sources[name])
    nodes, edges, _ = _merge(head, mod, mapping)
    return SGraph(SemanticGraph(nodes, edges, head.root), head.root,
                  dict(head.sources), head.typ)


# ---------------------------------------------------------------------------
# dependency trees

OpKind = Literal["APP", "MOD"]


@dataclass(frozen=True, order=True)
class DepEdge:
    parent: str
    child: str
    op: str  # "APP" | "MOD"
    source: str


class AMDepTree:
    """Tree whose nodes are graph constants and whose edges carry apply or
    modify operations. Node ids are opaque strings."""

    def __init__(self, nodes: dict[str, SGraph], root: str, edges):
        self.nodes = dict(nodes)
        self.root = root
        self.edges = [e if isinstance(e, DepEdge) else DepEdge(*e) for e in edges]
        self._children: dict[str, list[DepEdge]] = {n: [] for n in self.nodes}
        self._parent: dict[str, DepEdge] = {}
        for e in self.edges:
            if e.parent not in self.nodes or e.child not in self.nodes:
                raise ValueError(f"edge {e} references unknown node")
            if e.op not in ("APP", "MOD"):
                raise ValueError(f"bad operation {e.op!r}")
            self._children[e.parent].append(e)
            if e.child in self._parent:
                raise ValueError(f"node {e.child!r} has two parents")
            self._parent[e.child] = e
        if root not in self.nodes:
            raise ValueError(f"root {root!r} is not a node")
        if root in self._parent:
            raise ValueError("root has a parent")
        reach = [root]
        seen = {root}
        while reach:
            n = reach.pop()
            for e in self._children[n]:
                if e.child in seen:
                    raise ValueError("edges do not form a tree")
                seen.add(e.child)
                reach.append(e.child)
        if len(seen) != len(self.nodes):
            raise ValueError("tree is not connected")
        for n, kids in self._children.items():
            pairs = [(e.op, e.source) for e in kids if e.op == "APP"]
            if len(pairs) != len(set(pairs)):
                raise ValueError(f"node {n!r} has two APP children on one source")
            kids.sort(key=lambda e: (e.op, e.source, e.child))

    def children(self, node):
        return list(self._children[node])

    def parent_edge(self, node):
        return self._parent.get(node)

    def constant(self, node) -> SGraph:
        return self.nodes[node]

    def subtree_nodes(self, node):
        out = [node]
        stack = [node]
        while stack:
            n = stack.pop()
            for e in self._children[n]:
                out.append(e.child)
                stack.append(e.child)
        return out

    def depth_order(self):
        """Nodes ordered so children precede parents."""
        order = []
        stack = [(self.root, False)]
        while stack:
            n, done = stack.pop()
            if done:
                order.append(n)
            else:
                stack.append((n, True))
                for e in self._children[n]:
                    stack.append((e.child, False))
        return order

    def to_json(self):
        return {
            "root": self.root,
            "nodes": {n: c.to_json() for n, c in sorted(self.nodes.items())},
            "edges": [
                {"parent": e.parent, "child": e.child, "op": e.op, "source": e.source}
                for e in sorted(self.edges)
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "AMDepTree":
        nodes = {n: SGraph.from_json(c) for n, c in obj["nodes"].items()}
        edges = [DepEdge(e["parent"], e["child"], e["op"], e["source"]) for e in obj["edges"]]
        return cls(nodes, obj["root"], edges)

    def __eq__(self, other):
        return (
            isinstance(other, AMDepTree)
            and self.root == other.root
            and self.nodes == other.nodes
            and sorted(self.edges) == sorted(other.edges)
        )


def read_trees(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [(item["id"], AMDepTree.from_json(item["tree"])) for item in data]


def write_trees(trees, path):
    data = [{"id": tid, "tree": t.to_json()} for tid, t in trees]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# evaluation

# A child filling source α by APP must wait while α is still an open source
# of some sibling's term type: applying it earlier would consume the slot
# before the sibling's delayed copy can merge with it, silently changing the
# result. With this blocking rule all admissible orders are confluent.


def _app_admissible(head_type, edge, child_type, others):
    if edge.source not in head_type:
        return f"head type {head_type} has no source {edge.source!r}"
    if head_type.request(edge.source) != child_type:
        return (f"request at {edge.source!r} is {head_type.request(edge.source)}, "
                f"child has type {child_type}")
    for other_edge, other_type in others:
        if edge.source in other_type.names():
            return f"source {edge.source!r} still open in sibling {other_edge.child!r}"
    return None


def _mod_admissible(head_type, edge, child_type):
    if edge.source not in child_type:
        return f"modifier type {child_type} has no source {edge.source!r}"
    if not child_type.request(edge.source).is_empty:
        return f"modifier slot {edge.source!r} has non-empty request"
    leftover = child_type.without(edge.source)
    for name in leftover.names():
        if name not in head_type:
            return f"modifier would add source {name!r}"
        if head_type.request(name) != leftover.request(name):
            return f"modifier and head disagree on request at {name!r}"
    return None


def _fold_order(node, head_type, pending):
    """Greedy admissible consumption order for one node's children.

    pending: list of (DepEdge, child term type), pre-sorted by the
    deterministic tie-break (op kind APP < MOD, source, child id).
    Yields (edge, child_type, head_type_after). Raises NotWellTyped when
    stuck.
    """
    remaining = list(pending)
    while remaining:
        chosen = None
        reasons = []
        for i, (edge, ctype) in enumerate(remaining):
            others = [rc for j, rc in enumerate(remaining) if j != i]
            if edge.op == "APP":
                why = _app_admissible(head_type, edge, ctype, others)
            else:
                why = _mod_admissible(head_type, edge, ctype)
            if why is None:
                chosen = i
                break
            reasons.append(f"{edge.op}_{edge.source}->{edge.child}: {why}")
        if chosen is None:
            raise NotWellTyped(node, "no admissible child; " + "; ".join(reasons))
        edge, ctype = remaining.pop(chosen)
        if edge.op == "APP":
            try:
                head_type = type_unify(head_type.without(edge.source), ctype)
            except RequestClash as exc:
                raise NotWellTyped(node, str(exc)) from exc
        yield edge, ctype, head_type


def _sorted_children(tree, node):
    return sorted(tree.children(node), key=lambda e: (e.op, e.source, e.child))


def check_well_typed(tree: AMDepTree) -> AMType:
    """Type-level simulation of evaluation; returns the root term type."""
    types: dict[str, AMType] = {}
    for n in tree.depth_order():
        head = tree.constant(n).typ
        pending = [(e, types[e.child]) for e in _sorted_children(tree, n)]
        for _edge, _ctype, head in _fold_order(n, head, pending):
            pass
        types[n] = head
    return types[tree.root]


def term_type(tree: AMDepTree, node: str) -> AMType:
    """Type of the result of evaluating the subtree rooted at node."""
    types: dict[str, AMType] = {}
    wanted = set(tree.subtree_nodes(node))
    for n in tree.depth_order():
        if n not in wanted:
            continue
        head = tree.constant(n).typ
        pending = [(e, types[e.child]) for e in _sorted_children(tree, n)]
        for _edge, _ctype, head in _fold_order(n, head, pending):
            pass
        types[n] = head
    return types[node]


def evaluate_sgraph(tree: AMDepTree, node=None) -> SGraph:
    """Evaluate (a subtree of) the tree bottom-up to an s-graph."""
    node = tree.root if node is None else node
    results: dict[str, SGraph] = {}
    wanted = set(tree.subtree_nodes(node))
    for n in tree.depth_order():
        if n not in wanted:
            continue
        head = tree.constant(n)
        pending = [(e, results[e.child].typ) for e in _sorted_children(tree, n)]
        child_result = {e.child: results[e.child] for e in tree.children(n)}
        for edge, _ctype, _t in _fold_order(n, head.typ, pending):
            try:
                if edge.op == "APP":
                    head = apply(head, child_result[edge.child], edge.source)
                else:
                    head = modify(head, child_result[edge.child], edge.source)
            except (MissingSource, RequestMismatch, NonEmptyModRequest,
                    ModAddsSources, RequestClash, LabelClash) as exc:
                raise NotWellTyped(n, str(exc)) from exc
        results[n] = head
    return results[node]


def evaluate(tree: AMDepTree) -> SemanticGraph:
    """Evaluate a well-typed tree to a plain graph; the final type must be
    empty and every node must end up labeled."""
    result = evaluate_sgraph(tree)
    if not result.typ.is_empty:
        raise NonEmptyRootType(result.typ)
    for n, lbl in result.graph.nodes.items():
        if lbl is None:
            raise NotWellTyped(None, f"evaluation leaves node {n!r} unlabeled")
    return result.graph


def admissible_orders(tree: AMDepTree, node, types, max_children=8):
    """All admissible child consumption orders at one node (for testing the
    order-invariance property). types maps node -> term type."""
    kids = _sorted_children(tree, node)
    if len(kids) > max_children:
        raise ValueError("too many children to enumerate")

    def rec(head_type, remaining):
        if not remaining:
            yield []
            return
        for i, (edge, ctype) in enumerate(remaining):
            others = [rc for j, rc in enumerate(remaining) if j != i]
            if edge.op == "APP":
                ok = _app_admissible(head_type, edge, ctype, others) is None
                new_type = type_unify(head_type.without(edge.source), ctype) if ok else None
            else:
                ok = _mod_admissible(head_type, edge, ctype) is None
                new_type = head_type if ok else None
            if ok:
                for rest in rec(new_type, others):
                    yield [edge] + rest

    pending = [(e, types[e.child]) for e in kids]
    return list(rec(tree.constant(node).typ, pending))


def evaluate_with_orders(tree: AMDepTree, orders: dict[str, list]) -> SGraph:
    """Evaluate with an explicit child order at selected nodes (each must be
    admissible); other nodes fold in the default greedy order."""
    results: dict[str, SGraph] = {}
    for n in tree.depth_order():
        head = tree.constant(n)
        child_result = {e.child: results[e.child] for e in tree.children(n)}
        if n in orders:
            sequence = orders[n]
        else:
            pending = [(e, child_result[e.child].typ) for e in _sorted_children(tree, n)]
            sequence = [edge for edge, _c, _t in _fold_order(n, head.typ, pending)]
        for edge in sequence:
            if edge.op == "APP":
                head = apply(head, child_result[edge.child], edge.source)
            else:
                head = modify(head, child_result[edge.child], edge.source)
        results[n] = head
    return results[tree.root]


# ---------------------------------------------------------------------------
# canonical forms


def canonical_constant_form(c: SGraph) -> str:
    """Canonical, node-id-independent JSON string for a tree label (a
    single labeled node plus unlabeled slot nodes, or a bare placeholder).
    Used for event tying, entropy statistics and golden comparisons."""
    others = [n for n in c.graph.nodes if n != c.root]
    src_of = {v: k for k, v in c.sources.items()}
    rename = {c.root: "r"}
    anon = 0
    for n in sorted(others, key=lambda n: (src_of.get(n, ""), str(c.graph.nodes[n]))):
        if n in src_of:
            rename[n] = f"s:{src_of[n]}"
        else:
            rename[n] = f"x{anon}"
            anon += 1
    g = c.graph.renamed(rename)
    payload = {
        "root": g.root,
        "nodes": {n: lbl for n, lbl in sorted(g.nodes.items())},
        "edges": [[e.src, e.label, e.tgt] for e in g.edges],
        "sources": {k: rename[v] for k, v in sorted(c.sources.items())},
        "type": c.typ.to_json(),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def constant_from_canonical(form: str) -> SGraph:
    obj = json.loads(form)
    g = SemanticGraph(obj["nodes"], [Edge(s, t, lbl) for s, lbl, t in obj["edges"]], obj["root"])
    return SGraph(g, obj["root"], dict(obj["sources"]), AMType.from_json(obj["type"]))


def skeleton_form(c: SGraph) -> str:
    """Canonical form with source names erased: identical for any two
    renamings of the same constant. Canonicalized by minimizing over all
    assignments of positional names (constants carry only a handful of
    sources, so the permutation search is cheap)."""
    from itertools import permutations

    names = sorted(c.typ.all_names() | set(c.sources))
    if not names:
        return canonical_constant_form(c)
    best = None
    slots = [f"_{i}" for i in range(len(names))]
    for perm in permutations(slots):
        form = canonical_constant_form(c.rename_sources(dict(zip(names, perm))))
        if best is None or form < best:
            best = form
    return best
