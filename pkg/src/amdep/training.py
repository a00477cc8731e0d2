"""Weighted-automaton learning: inside scores, outer weights, Viterbi,
EM over globally tied event weights, sampling baselines, and a log-linear
scorer trained through the outer-weight gradient identity."""

from __future__ import annotations

import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field

from .algebra import canonical_constant_form, constant_from_canonical, skeleton_form
from .automata import Run, TreeAutomaton
from .errors import EmptyAutomaton, NonFiniteGradient

log = logging.getLogger("amdep.training")

NEG_INF = float("-inf")


def logsumexp(values):
    m = max(values, default=NEG_INF)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


# ---------------------------------------------------------------------------
# inside / outside


@dataclass
class InsideOutsideResult:
    log_inside: dict  # state -> log inside score
    log_total: float  # log I
    log_alpha: dict | None = None  # rule id -> log outer weight
    lin_total: float | None = None  # linear-domain I when it did not under/overflow

    @property
    def total(self):
        if self.lin_total is not None and self.lin_total > 0.0 \
                and math.isfinite(self.lin_total):
            return self.lin_total
        return math.exp(self.log_total)

    def alpha(self, rid):
        v = self.log_alpha[rid]
        return 0.0 if v == NEG_INF else math.exp(v)


def _log_weights(a: TreeAutomaton, weights):
    out = {}
    for r in a.rules:
        w = weights[r.rid] if weights is not None else 1.0
        if not (w > 0.0) or not math.isfinite(w):
            raise ValueError(f"rule weight must be positive and finite, got {w!r}")
        out[r.rid] = math.log(w)
    return out


def _states_bottom_up(a: TreeAutomaton):
    return sorted(a.states(), key=lambda s: (-len(s.address), s))


def inside(a: TreeAutomaton, weights=None) -> InsideOutsideResult:
    """Single bottom-up pass; log I sums over the final states. The same
    recursion is tracked in the linear domain, which is exact for unit
    weights and tighter at desk scale, with the log values as the
    underflow-safe reference. weights maps rule id -> positive weight (unit
    when None)."""
    if a.empty or not a.finals:
        return InsideOutsideResult({}, NEG_INF)
    lw = _log_weights(a, weights)
    by_parent = a.rules_by_parent()
    log_in: dict = {}
    lin_in: dict = {}
    for state in _states_bottom_up(a):
        terms = []
        lins = []
        for r in by_parent.get(state, []):
            t = lw[r.rid]
            p = weights[r.rid] if weights is not None else 1.0
            for c in r.children:
                t += log_in.get(c, NEG_INF)
                p *= lin_in.get(c, 0.0)
            terms.append(t)
            lins.append(p)
        log_in[state] = logsumexp(terms)
        lin_in[state] = math.fsum(lins)
    total = logsumexp([log_in.get(f, NEG_INF) for f in a.finals])
    lin_total = math.fsum(lin_in.get(f, 0.0) for f in a.finals)
    return InsideOutsideResult(log_in, total, lin_total=lin_total)


def outer_weights(a: TreeAutomaton, weights=None) -> InsideOutsideResult:
    """Inside plus the top-down pass: the outer weight of a rule is the total
    weight of accepted trees using it divided by the rule's own weight, and
    equals the partial derivative of the inside total in that weight."""
    res = inside(a, weights)
    if res.log_total == NEG_INF:
        raise EmptyAutomaton("no accepted trees")
    lw = _log_weights(a, weights)
    log_out: dict = {f: [0.0] for f in a.finals}
    log_alpha: dict = {}
    by_parent = a.rules_by_parent()
    for state in sorted(a.states(), key=lambda s: (len(s.address), s)):
        out_s = logsumexp(log_out.get(state, []))
        for r in by_parent.get(state, []):
            t = out_s
            for c in r.children:
                t += res.log_inside.get(c, NEG_INF)
            log_alpha[r.rid] = t
            for i, c in enumerate(r.children):
                contrib = out_s + lw[r.rid]
                for j, d in enumerate(r.children):
                    if j != i:
                        contrib += res.log_inside.get(d, NEG_INF)
                log_out.setdefault(c, []).append(contrib)
    return InsideOutsideResult(res.log_inside, res.log_total, log_alpha, res.lin_total)


def viterbi(a: TreeAutomaton, weights=None) -> Run:
    """Maximum-weight accepted run; ties broken by the smallest preorder
    rule-id sequence."""
    if a.empty or not a.finals:
        raise EmptyAutomaton("no accepted trees")
    lw = _log_weights(a, weights)
    by_parent = a.rules_by_parent()
    best: dict = {}
    for state in _states_bottom_up(a):
        cand = None
        for r in sorted(by_parent.get(state, []), key=lambda r: r.rid):
            score = lw[r.rid]
            kids = []
            dead = False
            for c in r.children:
                if c not in best:
                    dead = True
                    break
                s, run = best[c]
                score += s
                kids.append(run)
            if dead:
                continue
            run = Run(r.rid, tuple(kids))
            key = (-score, run.rule_ids())
            if cand is None or key < cand[0]:
                cand = (key, score, run)
        if cand is not None:
            best[state] = (cand[1], cand[2])
    tops = [best[f] for f in a.finals if f in best]
    if not tops:
        raise EmptyAutomaton("no accepted trees")
    return min(tops, key=lambda sr: (-sr[0], sr[1].rule_ids()))[1]


def sample_run(a: TreeAutomaton, rng: random.Random) -> Run:
    """Exact uniform sample over accepted trees: integer subtree counts drive
    a top-down categorical walk."""
    by_parent = a.rules_by_parent()
    counts: dict = {}
    for state in _states_bottom_up(a):
        total = 0
        for r in by_parent.get(state, []):
            prod = 1
            for c in r.children:
                prod *= counts.get(c, 0)
            total += prod
        counts[state] = total
    grand = sum(counts.get(f, 0) for f in a.finals)
    if grand == 0:
        raise EmptyAutomaton("no accepted trees")
    pick = rng.randrange(grand)
    final = None
    for f in a.finals:
        if pick < counts.get(f, 0):
            final = f
            break
        pick -= counts.get(f, 0)

    def descend(state, idx):
        for r in sorted(by_parent.get(state, []), key=lambda r: r.rid):
            prod = 1
            for c in r.children:
                prod *= counts.get(c, 0)
            if idx < prod:
                kid_runs = []
                for i, c in enumerate(r.children):
                    later = 1
                    for d in r.children[i + 1:]:
                        later *= counts.get(d, 0)
                    sub, idx = divmod(idx, later)
                    kid_runs.append(descend(c, sub))
                return Run(r.rid, tuple(kid_runs))
            idx -= prod
        raise AssertionError("index out of range")

    return descend(final, pick)


# ---------------------------------------------------------------------------
# events and EM


def rule_event_key(rule) -> str:
    if rule.event[0] == "const":
        return "const " + rule.event[1]
    return f"edge {rule.event[1]} {rule.event[2]}"


def event_group_key(event_key: str) -> str:
    """Normalization group of an event: constants by name-erased skeleton,
    edges by operation kind."""
    if event_key.startswith("edge "):
        return "edge " + event_key.split(" ")[1]
    form = event_key[len("const "):]
    return "skel " + skeleton_form(constant_from_canonical(form))


@dataclass
class EventTable:
    theta: dict[str, float]
    groups: dict[str, list[str]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    default: float = 1e-6

    def weight(self, event_key):
        return self.theta.get(event_key, self.default)

    def rule_weights(self, a: TreeAutomaton):
        return {r.rid: self.weight(rule_event_key(r)) for r in a.rules}

    def to_json(self):
        return {"theta": dict(sorted(self.theta.items())),
                "groups": {k: sorted(v) for k, v in sorted(self.groups.items())},
                "meta": self.meta, "default": self.default}

    @classmethod
    def from_json(cls, obj):
        return cls(dict(obj["theta"]), {k: list(v) for k, v in obj.get("groups", {}).items()},
                   dict(obj.get("meta", {})), obj.get("default", 1e-6))


def discover_events(automata):
    groups: dict[str, set[str]] = {}
    for _tid, a in automata:
        for r in a.rules:
            key = rule_event_key(r)
            groups.setdefault(event_group_key(key), set()).add(key)
    return {g: sorted(ks) for g, ks in sorted(groups.items())}


def _normalize_groups(theta, groups, smoothing=0.0):
    for keys in groups.values():
        total = math.fsum(theta.get(k, 0.0) + smoothing for k in keys)
        if total <= 0.0:
            log.warning("degenerate normalization group; resetting to uniform")
            for k in keys:
                theta[k] = 1.0 / len(keys)
        else:
            for k in keys:
                theta[k] = (theta.get(k, 0.0) + smoothing) / total
    return theta


def em_fit(automata, iterations=25, seed=0, smoothing=1e-6) -> EventTable:
    """Inside-outside EM over globally tied event weights.

    automata: list of (id, TreeAutomaton); empty ones are skipped with a
    report in the metadata. Weights are normalized within each event group,
    so the per-iteration corpus log-likelihood (sum of log inside totals) is
    non-decreasing up to floating point noise.
    """
    usable = [(tid, a) for tid, a in automata if not a.empty and a.finals]
    skipped = [tid for tid, a in automata if a.empty or not a.finals]
    if skipped:
        log.warning("EM skipping %d empty automata: %s", len(skipped), skipped[:5])
    if not usable:
        raise EmptyAutomaton("no usable automata in corpus")
    groups = discover_events(usable)
    rng = random.Random(seed)
    theta = {k: rng.uniform(0.1, 1.0) for keys in groups.values() for k in keys}
    _normalize_groups(theta, groups)
    history = []
    for it in range(iterations):
        table = EventTable(theta, groups)
        counts: dict[str, float] = {}
        ll = 0.0
        for _tid, a in usable:
            w = table.rule_weights(a)
            res = outer_weights(a, w)
            ll += res.log_total
            for r in a.rules:
                post = math.exp(res.log_alpha[r.rid] + math.log(w[r.rid]) - res.log_total)
                key = rule_event_key(r)
                counts[key] = counts.get(key, 0.0) + post
        history.append(ll)
        if len(history) >= 2 and history[-1] < history[-2] - 1e-9:
            log.warning("EM log-likelihood decreased: %.12f -> %.12f",
                        history[-2], history[-1])
        theta = _normalize_groups(counts, groups, smoothing)
    return EventTable(theta, groups,
                      meta={"iterations": iterations, "seed": seed,
                            "smoothing": smoothing, "log_likelihood": history,
                            "skipped": skipped})


def random_weights_baseline(automata, seed=0) -> EventTable:
    """One weight per graph constant and edge event, drawn once globally."""
    usable = [(tid, a) for tid, a in automata if not a.empty and a.finals]
    groups = discover_events(usable)
    rng = random.Random(seed)
    theta = {k: rng.uniform(0.1, 1.0) for keys in sorted(groups.values()) for k in keys}
    return EventTable(theta, groups, meta={"seed": seed, "baseline": "random-weights"})


def random_tree_baseline(a: TreeAutomaton, seed=0) -> Run:
    return sample_run(a, random.Random(seed))


def reconstruct_best(a: TreeAutomaton, weights_obj=None):
    """Viterbi tree under a parsed weights file (an event table when it has
    a "theta" key, a scorer when it has "params", unit weights when None)."""
    from .automata import reconstruct_tree

    if weights_obj is None:
        w = None
    elif "theta" in weights_obj:
        w = EventTable.from_json(weights_obj).rule_weights(a)
    elif "params" in weights_obj:
        w = score_rules(Scorer.from_json(weights_obj), a)
    else:
        raise ValueError("weights file must contain 'theta' or 'params'")
    return reconstruct_tree(a, viterbi(a, w))


# ---------------------------------------------------------------------------
# log-linear scorer and joint training


@dataclass
class Scorer:
    """Log-linear scorer with one feature per (anchor labels, event) pair and
    an exponential link: a rule's weight is exp(theta[feature])."""

    params: dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @staticmethod
    def feature_key(rule) -> str:
        if rule.event[0] == "const":
            return f"n={rule.align[1]}|{rule_event_key(rule)}"
        return f"p={rule.align[1]}|c={rule.align[2]}|{rule_event_key(rule)}"

    def score(self, rule) -> float:
        return self.params.get(self.feature_key(rule), 0.0)

    def to_json(self):
        return {"params": dict(sorted(self.params.items())), "meta": self.meta}

    @classmethod
    def from_json(cls, obj):
        return cls(dict(obj["params"]), dict(obj.get("meta", {})))


def score_rules(scorer: Scorer, a: TreeAutomaton) -> dict[int, float]:
    """Rule weights under the scorer: exp of the feature score, leaf rules
    anchored at the constant's node label, edge rules at the head and
    dependent labels."""
    return {r.rid: math.exp(scorer.score(r)) for r in a.rules}


def log_inside_gradient(scorer: Scorer, a: TreeAutomaton):
    """(log I, gradient of log I w.r.t. scorer parameters). The gradient of
    log I is the posterior expected feature count: sum over rules of
    alpha(r) * c(r) / I times the rule's feature vector, computed without
    backpropagating through the inside recursion."""
    w = score_rules(scorer, a)
    res = outer_weights(a, w)
    grad: dict[str, float] = {}
    for r in a.rules:
        post = math.exp(res.log_alpha[r.rid] + math.log(w[r.rid]) - res.log_total)
        key = scorer.feature_key(r)
        grad[key] = grad.get(key, 0.0) + post
    return res.log_total, grad


@dataclass
class JointConfig:
    epochs: int = 10
    lr: float = 0.5
    batch: int = 0  # 0 means full batch
    seed: int = 0
    l2: float = 0.0


def joint_fit(automata, cfg: JointConfig) -> Scorer:
    """Gradient ascent on the summed log inside scores (minus optional L2).
    Deterministic given the config: instances are shuffled per epoch with the
    seeded generator and gradients accumulated in corpus order."""
    usable = [(tid, a) for tid, a in automata if not a.empty and a.finals]
    if not usable:
        raise EmptyAutomaton("no usable automata in corpus")
    scorer = Scorer(meta={"epochs": cfg.epochs, "lr": cfg.lr, "batch": cfg.batch,
                          "seed": cfg.seed, "l2": cfg.l2})
    rng = random.Random(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = list(range(len(usable)))
        rng.shuffle(order)
        batch = cfg.batch or len(usable)
        total_ll = 0.0
        for start in range(0, len(order), batch):
            grad: dict[str, float] = {}
            for idx in order[start:start + batch]:
                ll, g = log_inside_gradient(scorer, usable[idx][1])
                total_ll += ll
                for k, v in g.items():
                    grad[k] = grad.get(k, 0.0) + v
            if cfg.l2:
                for k in set(grad) | set(scorer.params):
                    grad[k] = grad.get(k, 0.0) - 2.0 * cfg.l2 * scorer.params.get(k, 0.0)
            for k, v in grad.items():
                if not math.isfinite(v):
                    raise NonFiniteGradient(f"gradient for {k!r} is {v!r}")
                if cfg.lr:
                    scorer.params[k] = scorer.params.get(k, 0.0) + cfg.lr * v
        history.append(total_ll / len(usable))
    scorer.meta["mean_log_inside"] = history
    return scorer


# ---------------------------------------------------------------------------
# statistics


def constant_entropy(trees) -> float:
    """Entropy (nats) of the empirical distribution of graph constants over
    the given trees, constants compared by canonical form."""
    counts = Counter()
    for tree in trees:
        for node in tree.nodes:
            counts[canonical_constant_form(tree.constant(node))] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no constants")
    return -math.fsum((c / total) * math.log(c / total) for c in counts.values())


def event_histogram(trees):
    """Constant and edge-operation counts over a set of trees."""
    constants = Counter()
    edges = Counter()
    for tree in trees:
        for node in tree.nodes:
            constants[canonical_constant_form(tree.constant(node))] += 1
        for e in tree.edges:
            edges[f"{e.op}_{e.source}"] += 1
    return constants, edges
