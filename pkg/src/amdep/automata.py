"""Per-graph bottom-up tree automata over source-name assignments.

A decomposed tree (placeholder sources) is binarized; the automaton's states
pair a node address in the binarized tree with a partial map from placeholder
names to reusable names, and its runs are exactly the consistent renamings
that stay well-typed.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from itertools import permutations

from .algebra import (
    AMDepTree,
    DepEdge,
    SGraph,
    canonical_constant_form,
    constant_from_canonical,
    is_placeholder,
    placeholder,
    placeholder_target,
    skeleton_form,
    term_type,
    _fold_order,
    _sorted_children,
)

log = logging.getLogger("amdep.automata")


# ---------------------------------------------------------------------------
# binarization


@dataclass
class BinNode:
    address: str  # "" is the root; child i of pi has address pi + str(i)
    # leaf fields
    const: SGraph | None = None
    tree_node: str | None = None
    # operation fields
    op: str | None = None  # "APP" | "MOD"
    source: str | None = None  # placeholder source of the operation
    dep_parent: str | None = None
    dep_child: str | None = None
    left: "BinNode | None" = None
    right: "BinNode | None" = None

    @property
    def is_leaf(self):
        return self.const is not None

    def walk(self):
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()


def binarize(tree: AMDepTree) -> BinNode:
    """Fold each node's constant with its children in the deterministic
    admissible order; the head side is always the left child."""
    types = {}
    built: dict[str, BinNode] = {}
    for n in tree.depth_order():
        head = tree.constant(n).typ
        node = BinNode("", const=tree.constant(n), tree_node=n)
        pending = [(e, types[e.child]) for e in _sorted_children(tree, n)]
        for edge, _ctype, head in _fold_order(n, head, pending):
            node = BinNode("", op=edge.op, source=edge.source,
                           dep_parent=edge.parent, dep_child=edge.child,
                           left=node, right=built[edge.child])
        types[n] = head
        built[n] = node
    root = built[tree.root]
    _assign_addresses(root, "")
    return root


def _assign_addresses(node: BinNode, addr: str):
    node.address = addr
    if not node.is_leaf:
        _assign_addresses(node.left, addr + "0")
        _assign_addresses(node.right, addr + "1")


# ---------------------------------------------------------------------------
# automaton


@dataclass(frozen=True, order=True)
class State:
    address: str
    phi: tuple[tuple[str, str], ...]  # sorted (placeholder -> reusable) pairs

    def __str__(self):
        addr = self.address or "e"
        inside = ",".join(f"{placeholder_target(k)}={v}" for k, v in self.phi)
        return f"{addr}:{{{inside}}}"


@dataclass
class Rule:
    rid: int
    parent: State
    label: str  # canonical constant JSON for leaves, "APP_x"/"MOD_x" for ops
    children: tuple[State, ...]
    event: tuple  # ("const", canonical) | ("edge", kind, reusable source)
    align: tuple  # ("node", node_label) | ("edge", parent_label, child_label)

    def __str__(self):
        kids = ", ".join(str(c) for c in self.children)
        return f"{self.parent} <- {self.label}({kids})"


@dataclass
class TreeAutomaton:
    graph_id: str
    sources: tuple[str, ...]
    rules: list[Rule]
    finals: list[State]
    shape: dict[str, dict]  # address -> leaf/op descriptor (for reconstruction)
    empty: bool = False
    meta: dict = field(default_factory=dict)

    def rules_by_parent(self):
        out: dict[State, list[Rule]] = {}
        for r in self.rules:
            out.setdefault(r.parent, []).append(r)
        return out

    def states(self):
        seen = set()
        for r in self.rules:
            seen.add(r.parent)
            seen.update(r.children)
        return seen


def _phi_consistent(phi1, phi2):
    d2 = dict(phi2)
    return all(d2.get(k, v) == v for k, v in phi1)


def build_automaton(tree: AMDepTree, sources) -> TreeAutomaton:
    """One leaf rule per injective assignment of a constant's placeholders
    (nested request names included) to reusable sources; operation rules
    percolate the head-side assignment upward when the two child assignments
    agree on their shared placeholders."""
    sources = tuple(sources)
    for ch in "(){}=,:# ":
        if any(ch in s for s in sources):
            raise ValueError(f"source name containing {ch!r} unsupported")
    b = binarize(tree)
    rules_at: dict[str, list] = {}
    states_at: dict[str, list] = {}
    shape: dict[str, dict] = {}

    for node in b.walk():
        if not node.is_leaf:
            continue
        ph = sorted(node.const.placeholders())
        if any(ch in node.tree_node for ch in "(){}=,:# "):
            raise ValueError(f"node id {node.tree_node!r} unsupported in automaton files")
        shape[node.address] = {"kind": "leaf", "node": node.tree_node,
                               "const": canonical_constant_form(node.const)}
        lst = []
        if len(ph) <= len(sources):
            for combo in permutations(sources, len(ph)):
                phi = tuple(zip(ph, combo))
                renamed = node.const.rename_sources(dict(phi))
                lst.append((State(node.address, phi), canonical_constant_form(renamed), ()))
        rules_at[node.address] = lst
        states_at[node.address] = sorted({st for st, _, _ in lst})
        if not lst:
            log.warning("constant at %s has %d placeholders but only %d sources",
                        node.tree_node, len(ph), len(sources))

    for node in sorted((n for n in b.walk() if not n.is_leaf),
                       key=lambda n: -len(n.address)):
        shape[node.address] = {"kind": "op", "op": node.op, "source": node.source,
                               "parent": node.dep_parent, "child": node.dep_child}
        lst = []
        for s1 in states_at[node.address + "0"]:
            for s2 in states_at[node.address + "1"]:
                if not _phi_consistent(s1.phi, s2.phi):
                    continue
                phi1, phi2 = dict(s1.phi), dict(s2.phi)
                if node.op == "APP":
                    if node.source not in phi1:
                        continue
                    name = phi1[node.source]
                else:
                    if node.source not in phi2:
                        continue
                    name = phi2[node.source]
                parent = State(node.address, s1.phi)
                lst.append((parent, f"{node.op}_{name}", (s1, s2)))
        rules_at[node.address] = lst
        states_at[node.address] = sorted({st for st, _, _ in lst})

    finals = states_at.get("", [])
    # prune: keep states that reach a final state top-down
    useful: set[State] = set(finals)
    for addr in sorted(rules_at, key=len):
        for parent, _lbl, children in rules_at[addr]:
            if parent in useful:
                useful.update(children)
    rules: list[Rule] = []
    leaf_label = {a: d["const"] for a, d in shape.items() if d["kind"] == "leaf"}

    def leftmost_label(addr):
        while addr not in leaf_label:
            addr += "0"
        return constant_from_canonical(leaf_label[addr]).root_label()

    for addr in sorted(rules_at):
        for parent, lbl, children in rules_at[addr]:
            if parent not in useful or any(c not in useful for c in children):
                continue
            if children:
                kind, name = lbl.split("_", 1)
                event = ("edge", kind, name)
                align = ("edge", leftmost_label(addr + "0"), leftmost_label(addr + "1"))
            else:
                event = ("const", lbl)
                align = ("node", leftmost_label(addr))
            rules.append(Rule(len(rules), parent, lbl, children, event, align))
    fa = TreeAutomaton(graph_id="", sources=sources, rules=rules,
                       finals=[f for f in finals if f in useful], shape=shape,
                       empty=not finals)
    if fa.empty:
        log.warning("automaton accepts no trees (source inventory too small?)")
    return fa


# ---------------------------------------------------------------------------
# counting / enumeration / reconstruction


def count_trees(a: TreeAutomaton) -> int:
    """Exact number of accepted trees (unit-weight inside with integers)."""
    by_parent = a.rules_by_parent()
    memo: dict[State, int] = {}

    def count(state):
        if state not in memo:
            memo[state] = 0  # guards accidental cycles; automaton is acyclic
            total = 0
            for r in by_parent.get(state, []):
                prod = 1
                for c in r.children:
                    prod *= count(c)
                total += prod
            memo[state] = total
        return memo[state]

    return sum(count(f) for f in a.finals)


@dataclass(frozen=True)
class Run:
    rule: int
    children: tuple["Run", ...] = ()

    def rule_ids(self):
        out = [self.rule]
        for c in self.children:
            out.extend(c.rule_ids())
        return out


def enumerate_runs(a: TreeAutomaton, limit=None):
    """Accepted runs in lexicographic order of their preorder rule-id
    sequences, truncated at limit. Runs of one automaton share the binarized
    shape, so comparing same-length sequences rule by rule is total, and
    iterating rules in id order with left subruns outermost yields exactly
    that order."""
    if limit is not None and limit <= 0:
        return []
    by_parent = a.rules_by_parent()
    for lst in by_parent.values():
        lst.sort(key=lambda r: r.rid)

    def runs_for_rule(r):
        if not r.children:
            yield Run(r.rid)
            return
        for lc in runs_for(r.children[0]):
            for rc in runs_for(r.children[1]):
                yield Run(r.rid, (lc, rc))

    def runs_for(state):
        for r in by_parent.get(state, []):
            yield from runs_for_rule(r)

    top_rules = sorted((r for f in a.finals for r in by_parent.get(f, [])),
                       key=lambda r: r.rid)
    out = []
    for r in top_rules:
        for run in runs_for_rule(r):
            out.append(run)
            if limit is not None and len(out) >= limit:
                return out
    return out


def reconstruct_tree(a: TreeAutomaton, run: Run) -> AMDepTree:
    """De-binarize an accepted run into a dependency tree whose constants and
    operations carry the run's reusable source names."""
    rules = {r.rid: r for r in a.rules}
    nodes: dict[str, SGraph] = {}
    edges: list[DepEdge] = []
    root_of: dict[str, str] = {}  # address -> dep tree node id of head side

    def walk(run_node: Run):
        r = rules[run_node.rule]
        addr = r.parent.address
        desc = a.shape[addr]
        if desc["kind"] == "leaf":
            nodes[desc["node"]] = constant_from_canonical(r.label)
            root_of[addr] = desc["node"]
            return desc["node"]
        left = walk(run_node.children[0])
        right = walk(run_node.children[1])
        kind, name = r.label.split("_", 1)
        edges.append(DepEdge(left, right, kind, name))
        root_of[addr] = left
        return left

    root = walk(run)
    return AMDepTree(nodes, root, edges)


# ---------------------------------------------------------------------------
# serialization

_STATE_RE = re.compile(r"^(?P<addr>[01]*|e):\{(?P<phi>[^}]*)\}$")


def _state_str(s: State) -> str:
    return str(s)


def _parse_state(text: str) -> State:
    m = _STATE_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad state {text!r}")
    addr = "" if m.group("addr") == "e" else m.group("addr")
    phi = []
    if m.group("phi"):
        for part in m.group("phi").split(","):
            k, v = part.split("=", 1)
            phi.append((placeholder(k), v))
    return State(addr, tuple(sorted(phi)))


def write_automaton(a: TreeAutomaton, path, weights=None):
    """Line-oriented text: header comments, final states, then one rule per
    line `<state> <- <label>(<children>) [# weight]`."""
    lines = [f"#! graph {a.graph_id}", f"#! sources {' '.join(a.sources)}",
             f"#! shape {json.dumps(a.shape, sort_keys=True, separators=(',', ':'))}"]
    for f in a.finals:
        lines.append(f"final: {_state_str(f)}")
    for r in a.rules:
        kids = ", ".join(_state_str(c) for c in r.children)
        line = f"{_state_str(r.parent)} <- {r.label}({kids})"
        if weights is not None:
            line += f" # {weights[r.rid]!r}"
        lines.append(line)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_automaton(path) -> tuple[TreeAutomaton, dict[int, float] | None]:
    graph_id = ""
    sources: tuple[str, ...] = ()
    shape: dict[str, dict] = {}
    finals = []
    rules = []
    weights: dict[int, float] = {}
    saw_weight = False
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#!"):
                _, key, rest = line.split(" ", 2)
                if key == "graph":
                    graph_id = rest
                elif key == "sources":
                    sources = tuple(rest.split())
                elif key == "shape":
                    shape = json.loads(rest)
                continue
            if line.startswith("#"):
                continue
            if line.startswith("final:"):
                finals.append(_parse_state(line[len("final:"):]))
                continue
            body = line
            if " # " in line:
                cut = line.rfind(" # ")
                wtext = line[cut + 3:]
                try:
                    weight = float(wtext)
                except ValueError:
                    weight = None  # a label containing " # ", not a weight
                if weight is not None:
                    body = line[:cut]
                    weights[len(rules)] = weight
                    saw_weight = True
            head, rest = body.split(" <- ", 1)
            parent = _parse_state(head)
            if rest.endswith("()"):
                label, children = rest[:-2], ()
            else:
                open_idx = rest.index("(")
                label = rest[:open_idx]
                inner = rest[open_idx + 1:-1]
                children = tuple(_parse_state(p) for p in inner.split(", "))
            if children:
                kind, name = label.split("_", 1)
                event = ("edge", kind, name)
            else:
                event = ("const", label)
            rules.append(Rule(len(rules), parent, label, children, event, ("", )))
    a = TreeAutomaton(graph_id, sources, rules, finals, shape, empty=not finals)
    _recompute_align(a)
    return a, (weights if saw_weight else None)


def _recompute_align(a: TreeAutomaton):
    leaf_label = {addr: d["const"] for addr, d in a.shape.items() if d["kind"] == "leaf"}

    def leftmost_label(addr):
        while addr not in leaf_label:
            addr += "0"
        return constant_from_canonical(leaf_label[addr]).root_label()

    for r in a.rules:
        if r.children:
            addr = r.parent.address
            r.align = ("edge", leftmost_label(addr + "0"), leftmost_label(addr + "1"))
        else:
            r.align = ("node", leftmost_label(r.parent.address))


def build_corpus_automata(trees, sources):
    """Automata for a decomposed corpus: list of (id, automaton)."""
    out = []
    for tid, tree in trees:
        a = build_automaton(tree, sources)
        a.graph_id = tid
        out.append((tid, a))
    return out


def event_groups(automata):
    """Normalization groups over the events of a corpus: constants grouped by
    their name-erased skeleton, edges by operation kind."""
    groups: dict[str, set] = {}
    for _tid, a in automata:
        for r in a.rules:
            if r.event[0] == "const":
                key = "const:" + skeleton_form(constant_from_canonical(r.event[1]))
            else:
                key = f"edge:{r.event[1]}"
            groups.setdefault(key, set()).add(r.event)
    return {k: sorted(v) for k, v in groups.items()}
