"""Graph-to-tree decomposition: unroll a normalized graph into a tree with
reference leaves, build the canonical dependency tree over placeholder
sources, then resolve the reentrancies through the type system."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from .algebra import (
    AMDepTree,
    AMType,
    DepEdge,
    EMPTY_TYPE,
    SGraph,
    check_well_typed,
    constant,
    evaluate,
    placeholder,
    placeholder_target,
    ref_placeholder,
    term_type,
    type_unify,
)
from .errors import InvalidSwapPair, NotWellTyped, RequestClash, ResolutionFailed
from .graph import (
    BlobHeuristics,
    Edge,
    NormalizedGraph,
    SemanticGraph,
    is_isomorphic,
    normalize_edges,
    partition_blobs,
)

log = logging.getLogger("amdep.decompose")


# ---------------------------------------------------------------------------
# unrolling


@dataclass
class UEdge:
    parent: str  # tree node id
    child: str
    backward: bool  # True for edges traversed against their direction
    graph_edge: Edge


@dataclass
class UnrolledTree:
    """Tree-shaped expansion of a normalized graph. Real nodes keep their
    graph ids (each occurs once); repeat visits become reference leaves with
    ids ref0, ref1, ... pointing back at a real node."""

    root: str
    labels: dict[str, str]  # real node id -> label
    refs: dict[str, str]  # ref leaf id -> referenced node id
    edges: list[UEdge]

    def children(self, node):
        return [e for e in self.edges if e.parent == node]

    def as_semantic_graph(self) -> SemanticGraph:
        nodes = dict(self.labels)
        for rid, tgt in self.refs.items():
            nodes[rid] = f"REF({tgt})"
        edges = []
        for e in self.edges:
            ge = e.graph_edge
            src = e.parent if not e.backward else e.child
            tgt = e.child if not e.backward else e.parent
            # keep the normalized orientation; endpoints may be ref ids
            edges.append(Edge(src if src in nodes else ge.src,
                              tgt if tgt in nodes else ge.tgt, ge.label))
        return SemanticGraph(nodes, edges, self.root)

    def merged(self) -> SemanticGraph:
        """Merge every reference leaf into its target; reproduces the
        normalized graph when the unrolling is total."""
        edges = [e.graph_edge for e in self.edges]
        return SemanticGraph(self.labels, edges, self.root)


def _order_key(tie_break):
    if tie_break == "sorted":
        return lambda edge, far: (edge.label, far)
    if tie_break.startswith("seeded:"):
        seed = int(tie_break.split(":", 1)[1])

        def key(edge, far, _seed=seed):
            rng = random.Random(f"{_seed}|{edge.src}|{edge.tgt}|{edge.label}|{far}")
            return rng.random()

        return key
    raise ValueError(f"unknown tie_break {tie_break!r} (use 'sorted' or 'seeded:K')")


def _component(g: SemanticGraph, start, unvisited):
    comp = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for e in g.out_edges(n):
            if e.tgt in unvisited and e.tgt not in comp:
                comp.add(e.tgt)
                stack.append(e.tgt)
        for e in g.in_edges(n):
            if e.src in unvisited and e.src not in comp:
                comp.add(e.src)
                stack.append(e.src)
    return comp


def _entry_is_valid(g, parents, pick, comp, visited, traversed):
    """A backward entry into an untraversed component is kept only when every
    other boundary edge (w, m) of the component can later become a reference
    leaf whose resolution survives the new modify edge: the entry point x
    must equal m, or reach m by a directed path whose carriers can actually
    fold below x (nodes still unvisited, or already placed in x's subtree) —
    that chain is what leaves the delayed slot open in x's partial result."""
    x = pick.tgt

    def under_x(w):
        while w is not None:
            if w == x:
                return True
            w = parents.get(w)
        return False

    def constrained_reach(m):
        seen = {x}
        stack = [x]
        while stack:
            v = stack.pop()
            for e in g.out_edges(v):
                w = e.tgt
                if w == m:
                    return True
                if w in seen:
                    continue
                if w not in visited or under_x(w):
                    seen.add(w)
                    stack.append(w)
        return False

    for e in g.edges:
        if e in traversed or e is pick:
            continue
        if e.src in comp and e.tgt in visited:
            if e.tgt != x and not constrained_reach(e.tgt):
                return False
    return True


def _run_unroll(n: NormalizedGraph, tie_break, choices=None, record=None):
    """Core two-queue traversal. choices/record support enumeration over
    backward entry points: choices[i] overrides the pick at juncture i, and
    record (a list) receives (candidate count, valid count) per juncture."""
    g = n.graph
    okey = _order_key(tie_break)
    visited = {g.root}
    traversed: set[Edge] = set()
    labels = {g.root: g.label(g.root)}
    refs: dict[str, str] = {}
    edges: list[UEdge] = []
    parents: dict[str, str] = {}
    fqueue: list[Edge] = []
    bqueue: list[Edge] = []
    ref_count = 0
    juncture = 0

    def visit(v):
        outs = sorted((e for e in g.out_edges(v) if e not in traversed),
                      key=lambda e: okey(e, e.tgt))
        ins = sorted((e for e in g.in_edges(v) if e not in traversed),
                     key=lambda e: okey(e, e.src))
        fqueue.extend(outs)
        bqueue.extend(ins)

    visit(g.root)
    while True:
        while fqueue:
            e = fqueue.pop(0)
            if e in traversed:
                continue
            traversed.add(e)
            v, w = e.src, e.tgt
            if w not in visited:
                visited.add(w)
                labels[w] = g.label(w)
                parents[w] = v
                edges.append(UEdge(v, w, False, e))
                visit(w)
            else:
                rid = f"ref{ref_count}"
                ref_count += 1
                refs[rid] = w
                edges.append(UEdge(v, rid, False, e))
        candidates = [e for e in bqueue if e not in traversed]
        if not candidates:
            break
        unvisited = {x for x in g.nodes if x not in visited}
        ranked = []
        for e in candidates:
            comp = _component(g, e.src, unvisited)
            ranked.append((e, _entry_is_valid(g, parents, e, comp, visited, traversed)))
        ordered = [e for e, ok in ranked if ok] + [e for e, ok in ranked if not ok]
        if record is not None:
            record.append((len(ordered), sum(1 for _, ok in ranked if ok)))
        idx = 0
        if choices is not None and juncture < len(choices):
            idx = choices[juncture]
        juncture += 1
        pick = ordered[idx]
        traversed.add(pick)
        u, v = pick.src, pick.tgt
        visited.add(u)
        labels[u] = g.label(u)
        parents[u] = v
        edges.append(UEdge(v, u, True, pick))
        visit(u)
    return UnrolledTree(g.root, labels, refs, edges)


def unroll(n: NormalizedGraph, tie_break="sorted") -> UnrolledTree:
    """Breadth-first expansion with separate forward and backward queues.
    Forward edges are always drained first; a backward edge is only taken
    when no forward edge is pending, entering an untraversed component at a
    point from which the component's remaining boundary edges stay
    resolvable."""
    return _run_unroll(n, tie_break)


def iter_unrollings(n: NormalizedGraph, tie_break="sorted", limit=64,
                    include_invalid=False):
    """Lazily yield unrollings, varying the backward entry choices. Variants
    are explored best-first by the number of deviations from the greedy
    (validity-ranked) picks, so the first yield is exactly
    unroll(n, tie_break) and near-greedy alternatives come early.

    By default only entries the validity filter accepts are explored (the
    meaningful latent choice); include_invalid widens to every candidate,
    which the completeness harness uses for exhaustive negative proofs.
    """
    import heapq

    seen = set()
    emitted = 0
    pops = 0
    counter = 0
    heap = [(0, 0, [])]
    while heap and emitted < limit and pops < 8 * limit:
        devs, _tie, choices = heapq.heappop(heap)
        pops += 1
        record: list[tuple[int, int]] = []
        tree = _run_unroll(n, tie_break, choices=choices, record=record)
        key = tuple(sorted((e.parent, e.child, e.backward, e.graph_edge)
                           for e in tree.edges))
        if key not in seen:
            seen.add(key)
            emitted += 1
            yield tree
        # children deviate at one juncture at or past the explicit prefix;
        # every choice vector is generated exactly once this way
        for j in range(len(choices), len(record)):
            total, valid = record[j]
            width = total if include_invalid else max(1, valid)
            for alt in range(1, width):
                counter += 1
                child = choices + [0] * (j - len(choices)) + [alt]
                heapq.heappush(heap, (devs + 1, counter, child))


def enumerate_unrollings(n: NormalizedGraph, tie_break="sorted", limit=64,
                         include_invalid=False):
    """All unrollings reachable by varying the backward entry choices."""
    return list(iter_unrollings(n, tie_break, limit, include_invalid))


# ---------------------------------------------------------------------------
# canonical trees


def canonical_constant(n: NormalizedGraph, node) -> SGraph:
    """Single-node constant: the node's label plus one placeholder slot per
    blob edge, every request empty."""
    slots = [(e.label, placeholder(e.tgt)) for e in sorted(n.graph.out_edges(node))]
    return constant(n.graph.label(node), node, slots)


def canonical_tree(u: UnrolledTree, n: NormalizedGraph) -> AMDepTree:
    """Label the unrolled tree with canonical constants; forward edges become
    apply edges on the target's placeholder, backward edges become modify
    edges on the parent's placeholder, and reference leaves become empty
    placeholder constants filling the slot they stand for."""
    nodes: dict[str, SGraph] = {}
    for nid in u.labels:
        nodes[nid] = canonical_constant(n, nid)
    for rid in u.refs:
        nodes[rid] = ref_placeholder(rid)
    edges = []
    for e in u.edges:
        source = placeholder(e.graph_edge.tgt)
        op = "MOD" if e.backward else "APP"
        edges.append(DepEdge(e.parent, e.child, op, source))
    return AMDepTree(nodes, u.root, edges)


def is_ref_node(tree: AMDepTree, node) -> bool:
    c = tree.constant(node)
    return (len(c.graph.nodes) == 1 and c.root_label() is None
            and not c.sources and c.typ.is_empty)


def ref_target(tree: AMDepTree, node) -> str:
    edge = tree.parent_edge(node)
    return placeholder_target(edge.source)


# ---------------------------------------------------------------------------
# resolution plans and Theorem-1 style checking


@dataclass
class ResolutionPlan:
    resolve_set: set[str]  # nodes to resolve
    targets: dict[str, str]  # node -> resolution target (ancestor)
    paths: dict[str, list[list[DepEdge]]]  # node -> paths, each from target down


@dataclass
class Violation:
    node: str
    path: list[DepEdge]
    condition: int  # 1 or 2
    witness: DepEdge

    def to_json(self):
        return {
            "node": self.node,
            "path": [[e.parent, e.child, e.op, e.source] for e in self.path],
            "condition": self.condition,
            "witness": [self.witness.parent, self.witness.child,
                        self.witness.op, self.witness.source],
        }


@dataclass
class Theorem1Report:
    decomposable: bool
    violations: list[Violation] = field(default_factory=list)

    def to_json(self):
        return {"decomposable": self.decomposable,
                "violations": [v.to_json() for v in self.violations]}


def _ancestors(tree: AMDepTree, node):
    chain = [node]
    e = tree.parent_edge(node)
    while e is not None:
        chain.append(e.parent)
        e = tree.parent_edge(e.parent)
    return chain  # node first, root last


def _lca(tree: AMDepTree, nodes):
    chains = [_ancestors(tree, n) for n in nodes]
    common = set(chains[0])
    for c in chains[1:]:
        common &= set(c)
    for n in chains[0]:
        if n in common:
            return n
    raise ValueError("no common ancestor")


def _path_down(tree: AMDepTree, top, bottom):
    """Edges from top down to bottom (top must be an ancestor of bottom)."""
    edges = []
    cur = bottom
    while cur != top:
        e = tree.parent_edge(cur)
        if e is None:
            raise ValueError(f"{top!r} is not an ancestor of {bottom!r}")
        edges.append(e)
        cur = e.parent
    edges.reverse()
    return edges


def default_plan(tree: AMDepTree) -> ResolutionPlan:
    """Resolve exactly the referenced nodes, each at the lowest common
    ancestor of the node and all its reference leaves."""
    ref_positions: dict[str, list[str]] = {}
    for node in tree.nodes:
        if is_ref_node(tree, node):
            ref_positions.setdefault(ref_target(tree, node), []).append(node)
    plan = ResolutionPlan(set(), {}, {})
    for y, positions in sorted(ref_positions.items()):
        rt = _lca(tree, [y] + positions)
        plan.resolve_set.add(y)
        plan.targets[y] = rt
        plan.paths[y] = [_path_down(tree, rt, p) for p in sorted([y] + positions)]
    return plan


def build_plan(tree: AMDepTree, targets: dict[str, str]) -> ResolutionPlan:
    """Plan with explicit resolution targets (each at least as high as the
    default lowest common ancestor); may include nodes without references."""
    ref_positions: dict[str, list[str]] = {}
    for node in tree.nodes:
        if is_ref_node(tree, node):
            ref_positions.setdefault(ref_target(tree, node), []).append(node)
    for y in ref_positions:
        if y not in targets:
            raise ValueError(f"plan must cover referenced node {y!r}")
    plan = ResolutionPlan(set(), {}, {})
    for y, rt in sorted(targets.items()):
        positions = sorted([y] + ref_positions.get(y, []))
        lca = _lca(tree, positions)
        if rt not in _ancestors(tree, lca):
            raise ValueError(f"target {rt!r} for {y!r} is below the common ancestor {lca!r}")
        plan.resolve_set.add(y)
        plan.targets[y] = rt
        plan.paths[y] = [_path_down(tree, rt, p) for p in positions]
    return plan


def check_resolvable(tree: AMDepTree, plan: ResolutionPlan,
                     normalized: NormalizedGraph) -> Theorem1Report:
    """Exact per-path evaluation of the two resolvability conditions: the
    bottom-most edge of every resolution path must not be a modify edge, and
    every interior modify edge (not incident to the resolved node) needs a
    directed graph path from its parent to the resolved node."""
    desc = {v: normalized.graph.reachable_from(v) for v in normalized.graph.nodes}
    violations = []
    for y in sorted(plan.resolve_set):
        for path in plan.paths[y]:
            if not path:
                continue
            bottom = path[-1]
            if bottom.op == "MOD":
                violations.append(Violation(y, path, 1, bottom))
            for e in path:
                if e.op == "MOD" and e.parent != y and e.child != y:
                    if y not in desc[e.parent]:
                        violations.append(Violation(y, path, 2, e))
    return Theorem1Report(not violations, violations)


# ---------------------------------------------------------------------------
# resolution


def _add_request(typ: AMType, slot: str, addition: AMType, node) -> AMType:
    try:
        merged = type_unify(typ.request(slot), addition)
    except RequestClash as exc:
        raise ResolutionFailed(node, f"conflicting requests at {slot!r}: {exc}") from exc
    return typ.updated(slot, merged)


def resolve(tree: AMDepTree, plan: ResolutionPlan | None = None,
            debug=False) -> AMDepTree:
    """Remove every reference leaf, expressing the reentrancies through type
    requests instead, and attach each resolved node at its target.

    Nodes are processed so that a node is only handled once no other pending
    node's resolution path runs through it; within each step the edge order
    is immaterial. With debug=True the tree is re-typechecked after every
    step (the intermediate trees, references included, must stay well-typed).
    """
    if plan is None:
        plan = default_plan(tree)
    nodes = dict(tree.nodes)
    edges = list(tree.edges)
    root = tree.root

    def current_tree():
        return AMDepTree(nodes, root, edges)

    def path_nodes(y):
        out = set()
        for path in plan.paths[y]:
            for e in path:
                out.add(e.parent)
                out.add(e.child)
        out.add(plan.targets[y])
        return out

    pending = set(plan.resolve_set)
    while pending:
        eligible = [y for y in sorted(pending)
                    if not any(y in path_nodes(x) for x in pending if x != y)]
        if not eligible:
            raise ResolutionFailed(sorted(pending)[0],
                                   "circular resolution paths; no eligible node")
        y = eligible[0]
        snapshot = current_tree()
        rt = plan.targets[y]
        # The request recorded along a resolution path is the type of
        # whatever ultimately occupies the merged slot. At or above y that is
        # the subtree of y, which re-attaches by apply at the target; on path
        # segments strictly below y (a reference hanging under y's own
        # modifiers) the slot is instead met by y's root through a modify
        # operation, whose slot request must stay empty.
        if rt == y:
            tt = EMPTY_TYPE
        else:
            try:
                tt = term_type(snapshot, y)
            except NotWellTyped as exc:
                raise ResolutionFailed(y, f"cannot type subtree: {exc}") from exc
        for path in plan.paths[y]:
            below_y = False
            for e in path:
                if e.parent == y:
                    below_y = True
                value = EMPTY_TYPE if below_y else tt
                if e.op == "APP":
                    # the slot rule applies whenever the edge ends at y or at
                    # one of its reference leaves, not merely on the final
                    # path edge (a reference can sit below y itself)
                    if e.child == y or e is path[-1]:
                        nodes[e.parent] = nodes[e.parent].with_type(
                            _add_request(nodes[e.parent].typ, placeholder(y), value, y))
                    else:
                        addition = AMType({placeholder(y): value})
                        nodes[e.parent] = nodes[e.parent].with_type(
                            _add_request(nodes[e.parent].typ, e.source, addition, y))
                if e.child == y:
                    below_y = True
        if rt != y:
            old = snapshot.parent_edge(y)
            edges = [e for e in edges if not (e.child == y and e.parent == old.parent)]
            edges.append(DepEdge(rt, y, "APP", placeholder(y)))
        doomed = [n for n in nodes
                  if n in snapshot.nodes and is_ref_node(snapshot, n)
                  and ref_target(snapshot, n) == y]
        for n in doomed:
            del nodes[n]
            edges = [e for e in edges if e.child != n]
        pending.discard(y)
        if debug:
            try:
                check_well_typed(current_tree())
            except NotWellTyped as exc:
                raise ResolutionFailed(y, f"tree ill-typed after step: {exc}") from exc
    return current_tree()


def resolve_extended(tree: AMDepTree, plan: ResolutionPlan) -> AMDepTree:
    """Resolution with generalized targets (above the common ancestor) and
    optional resolution of unreferenced nodes."""
    return resolve(tree, plan)


# ---------------------------------------------------------------------------
# modify-edge swapping


def modify_swap(tree: AMDepTree, pairs) -> AMDepTree:
    """Swap consecutive modify edges: for each pair (n->m, m->k) the node k
    becomes the modifier of n and m becomes an apply child of k, with m's
    term type recorded as the request at m's slot in k's constant."""
    nodes = dict(tree.nodes)
    edges = list(tree.edges)
    used = set()
    for (n, m), (m2, k) in pairs:
        if m2 != m:
            raise InvalidSwapPair(f"pair ({n},{m});({m2},{k}) is not consecutive")
        cur = AMDepTree(nodes, tree.root, edges)
        top = cur.parent_edge(m)
        bot = cur.parent_edge(k)
        if top is None or bot is None or top.parent != n or bot.parent != m:
            raise InvalidSwapPair(f"edges ({n},{m}) and ({m},{k}) not found")
        if top.op != "MOD" or top.source != placeholder(n):
            raise InvalidSwapPair(f"edge ({n},{m}) is not MOD_{placeholder(n)}")
        if bot.op != "MOD" or bot.source != placeholder(m):
            raise InvalidSwapPair(f"edge ({m},{k}) is not MOD_{placeholder(m)}")
        if top in used or bot in used:
            raise InvalidSwapPair("edge appears in two pairs")
        used.update((top, bot))
        tt = term_type(cur, m)
        if placeholder(n) not in tt.names():
            raise InvalidSwapPair(
                f"term type of {m!r} lacks {placeholder(n)!r}; swap would detach the modifier")
        edges = [e for e in edges if e not in (top, bot)]
        edges.append(DepEdge(n, k, "MOD", placeholder(n)))
        edges.append(DepEdge(k, m, "APP", placeholder(m)))
        nodes[k] = nodes[k].with_type(
            _add_request(nodes[k].typ, placeholder(m), tt, k))
    return AMDepTree(nodes, tree.root, edges)


def consecutive_mod_pairs(tree: AMDepTree):
    """All candidate swap pairs present in the tree."""
    out = []
    for e in tree.edges:
        if e.op != "MOD" or e.source != placeholder(e.parent):
            continue
        for f in tree.children(e.child):
            if f.op == "MOD" and f.source == placeholder(e.child):
                out.append(((e.parent, e.child), (f.parent, f.child)))
    return out


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class NonDecomposable:
    reason: str
    report: Theorem1Report | None = None

    def to_json(self):
        return {"reason": self.reason,
                "report": self.report.to_json() if self.report else None}


@dataclass
class Decomposition:
    tree: AMDepTree
    normalized: NormalizedGraph
    unrolled: UnrolledTree


def decompose(g: SemanticGraph, heuristics: BlobHeuristics | None = None,
              tie_break="sorted", max_unrollings=64):
    """Full pipeline: blob partition, edge normalization, unrolling,
    canonical tree, resolvability check, resolution, and a final round-trip
    verification. Returns a Decomposition or a NonDecomposable report.

    Backward entry points into not-yet-traversed components interact
    non-locally with resolvability, so unrollings are tried lazily in
    tie-break order until one verifies; the first candidate almost always
    succeeds and the result is deterministic for a fixed tie_break.
    """
    heuristics = heuristics or BlobHeuristics.default_table()
    p = partition_blobs(g, heuristics)
    n = normalize_edges(g, p)
    if not n.graph.is_acyclic():
        return NonDecomposable("normalized graph has a directed cycle")
    first_failure = None
    for u in iter_unrollings(n, tie_break, limit=max_unrollings):
        c = canonical_tree(u, n)
        plan = default_plan(c)
        report = check_resolvable(c, plan, n)
        if not report.decomposable:
            if first_failure is None:
                first_failure = NonDecomposable("resolution conditions violated", report)
            continue
        try:
            t = resolve(c, plan)
            final_type = check_well_typed(t)
        except (ResolutionFailed, NotWellTyped) as exc:
            if first_failure is None:
                first_failure = NonDecomposable(f"resolution failed: {exc}", report)
            continue
        if not final_type.is_empty:
            if first_failure is None:
                first_failure = NonDecomposable(
                    f"resolved tree has open sources {final_type}", report)
            continue
        if not is_isomorphic(evaluate(t), n.graph):
            if first_failure is None:
                first_failure = NonDecomposable(
                    "resolved tree does not evaluate to the input graph", report)
            continue
        return Decomposition(t, n, u)
    return first_failure or NonDecomposable("no unrolling found")


def enumerate_candidate_trees(g: SemanticGraph, heuristics=None, tie_break="sorted",
                              max_unrollings=64, with_swaps=True, with_lifts=False,
                              include_invalid_entries=True):
    """Bounded exploration of the decomposition space: every unrolling entry
    choice, optionally every non-overlapping set of modify-edge swaps and
    every lifted resolution target. Yields only trees that verify (well-typed
    and evaluating to the normalized input). Intended for tiny graphs."""
    heuristics = heuristics or BlobHeuristics.default_table()
    p = partition_blobs(g, heuristics)
    n = normalize_edges(g, p)
    if not n.graph.is_acyclic():
        return []
    found = []
    seen = set()
    for u in enumerate_unrollings(n, tie_break, limit=max_unrollings,
                                  include_invalid=include_invalid_entries):
        base = canonical_tree(u, n)
        variants = [base]
        if with_swaps:
            pairs = consecutive_mod_pairs(base)
            for i in range(len(pairs)):
                try:
                    variants.append(modify_swap(base, [pairs[i]]))
                except InvalidSwapPair:
                    pass
        for cand in variants:
            for targets in _plan_space(cand, with_lifts):
                try:
                    plan = build_plan(cand, targets)
                except ValueError:
                    continue
                report = check_resolvable(cand, plan, n)
                if not report.decomposable:
                    continue
                try:
                    t = resolve(cand, plan)
                    if not check_well_typed(t).is_empty:
                        continue
                    if not is_isomorphic(evaluate(t), n.graph):
                        continue
                except (ResolutionFailed, NotWellTyped):
                    continue
                key = _tree_key(t)
                if key not in seen:
                    seen.add(key)
                    found.append(t)
    return found


def _plan_space(tree: AMDepTree, with_lifts):
    refd = sorted({ref_target(tree, n) for n in tree.nodes if is_ref_node(tree, n)})
    default = {}
    for y in refd:
        positions = [y] + [n for n in tree.nodes
                           if is_ref_node(tree, n) and ref_target(tree, n) == y]
        default[y] = _lca(tree, positions)
    if not with_lifts:
        return [default]
    options = []
    for y in refd:
        chain = _ancestors(tree, default[y])
        options.append([(y, a) for a in chain])
    plans = [{}]
    for opts in options:
        plans = [dict(pl, **{y: a}) for pl in plans for y, a in opts]
    return plans or [default]


def _tree_key(t: AMDepTree):
    from .algebra import canonical_constant_form

    return (
        tuple(sorted((e.parent, e.child, e.op, e.source) for e in t.edges)),
        tuple(sorted((nid, canonical_constant_form(c)) for nid, c in t.nodes.items())),
    )
