"""Causal DAGs with observability annotations, d-separation and intervention stability."""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

Node = str


class GraphError(ValueError):
    """Raised for malformed graphs or queries on unknown nodes."""


class CycleError(GraphError):
    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        super().__init__("edge set contains a cycle through: " + ", ".join(self.nodes))


def _topological_order(nodes: tuple[Node, ...], parents: Mapping[Node, frozenset]) -> tuple[Node, ...]:
    # Kahn's algorithm; among ready nodes the earliest-declared goes first.
    index = {v: i for i, v in enumerate(nodes)}
    indeg = {v: len(parents[v]) for v in nodes}
    children: dict[Node, list[Node]] = {v: [] for v in nodes}
    for v in nodes:
        for p in parents[v]:
            children[p].append(v)
    ready = [index[v] for v in nodes if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = nodes[heapq.heappop(ready)]
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, index[c])
    if len(order) != len(nodes):
        raise CycleError(v for v in nodes if indeg[v] > 0)
    return tuple(order)


class _DiGraph:
    """Shared adjacency plumbing for base and augmented graphs."""

    nodes: tuple[Node, ...]
    edges: frozenset

    def _index(self):
        pa = {v: set() for v in self.nodes}
        ch = {v: set() for v in self.nodes}
        for p, c in self.edges:
            if p not in pa or c not in pa:
                raise GraphError(f"edge {p} -> {c} references an unknown node")
            if p == c:
                raise CycleError([p])
            pa[c].add(p)
            ch[p].add(c)
        pa = {v: frozenset(s) for v, s in pa.items()}
        object.__setattr__(self, "_parents", pa)
        object.__setattr__(self, "_children", {v: frozenset(s) for v, s in ch.items()})
        object.__setattr__(self, "_order", _topological_order(self.nodes, pa))

    def _check(self, v: Node) -> None:
        if v not in self._parents:
            raise GraphError(f"unknown node {v!r}")

    def parents(self, v: Node) -> frozenset:
        self._check(v)
        return self._parents[v]

    def children(self, v: Node) -> frozenset:
        self._check(v)
        return self._children[v]

    def ancestors(self, v: Node) -> frozenset:
        """Strict ancestors of ``v``."""
        self._check(v)
        seen: set[Node] = set()
        stack = list(self._parents[v])
        while stack:
            p = stack.pop()
            if p not in seen:
                seen.add(p)
                stack.extend(self._parents[p])
        return frozenset(seen)

    def descendants(self, v: Node) -> frozenset:
        """Strict descendants of ``v``."""
        self._check(v)
        seen: set[Node] = set()
        stack = list(self._children[v])
        while stack:
            c = stack.pop()
            if c not in seen:
                seen.add(c)
                stack.extend(self._children[c])
        return frozenset(seen)

    @property
    def topological_order(self) -> tuple[Node, ...]:
        return self._order

    def sort_nodes(self, nodes: Iterable[Node]) -> list[Node]:
        """Order ``nodes`` by declaration order in this graph."""
        pos = {v: i for i, v in enumerate(self.nodes)}
        return sorted(nodes, key=pos.__getitem__)


@dataclass(frozen=True, eq=False)
class CausalGraph(_DiGraph):
    """DAG over named nodes with a designated target and observed/actionable subsets.

    ``observed`` defaults to every non-target node and ``actionable`` to the
    empty set.
    """

    nodes: tuple[Node, ...]
    edges: frozenset
    target: Node
    observed: frozenset = None
    actionable: frozenset = frozenset()

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError("node identifiers must be unique")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset((p, c) for p, c in self.edges))
        if self.target not in nodes:
            raise GraphError(f"target {self.target!r} is not a node")
        observed = self.observed
        if observed is None:
            observed = set(nodes) - {self.target}
        object.__setattr__(self, "observed", frozenset(observed))
        object.__setattr__(self, "actionable", frozenset(self.actionable))
        if self.target in self.observed:
            raise GraphError("the target cannot be in the observed feature set")
        if not self.observed <= set(nodes):
            raise GraphError(f"observed set has unknown nodes: {sorted(self.observed - set(nodes))}")
        if not self.actionable <= self.observed:
            raise GraphError(f"actionable nodes must be observed: {sorted(self.actionable - self.observed)}")
        self._index()

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return (self.nodes, self.edges, self.target, self.observed, self.actionable) == (
            other.nodes, other.edges, other.target, other.observed, other.actionable)

    def __hash__(self):
        return hash((self.nodes, self.edges, self.target))

    def replace(self, **changes) -> "CausalGraph":
        fields = dict(nodes=self.nodes, edges=self.edges, target=self.target,
                      observed=self.observed, actionable=self.actionable)
        fields.update(changes)
        return CausalGraph(**fields)


@dataclass(frozen=True, eq=False)
class AugmentedGraph(_DiGraph):
    """A base graph plus one parentless indicator ``I_<node>`` per intervention target."""

    base: CausalGraph
    intervention_targets: frozenset
    intervention_nodes: Mapping[Node, Node] = field(init=False)

    def __post_init__(self):
        targets = frozenset(self.intervention_targets)
        object.__setattr__(self, "intervention_targets", targets)
        ordered = self.base.sort_nodes(targets)
        names = {}
        for t in ordered:
            name = f"I_{t}"
            while name in self.base.nodes or name in names.values():
                name = "_" + name
            names[t] = name
        object.__setattr__(self, "intervention_nodes", names)
        object.__setattr__(self, "nodes", self.base.nodes + tuple(names[t] for t in ordered))
        object.__setattr__(self, "edges", self.base.edges | {(names[t], t) for t in ordered})
        self._index()

    @property
    def target(self) -> Node:
        return self.base.target

    def indicator(self, v: Node) -> Node:
        return self.intervention_nodes[v]


def parents(g: _DiGraph, v: Node) -> frozenset:
    return g.parents(v)


def children(g: _DiGraph, v: Node) -> frozenset:
    return g.children(v)


def causes(g: CausalGraph, v: Node, observed_only: bool = False) -> frozenset:
    """All strict ancestors of ``v``; with ``observed_only`` restricted to observed nodes."""
    anc = g.ancestors(v)
    if observed_only:
        anc = anc & g.observed
    return anc


def spouses(g: _DiGraph, v: Node) -> frozenset:
    """Other parents of the children of ``v``."""
    out: set[Node] = set()
    for c in g.children(v):
        out |= g.parents(c)
    out.discard(v)
    return frozenset(out)


def minimal_d_separator(g: CausalGraph) -> frozenset:
    """Parents, children and spouses of the target.

    Every one of those nodes must be observed.
    """
    y = g.target
    blanket = g.parents(y) | g.children(y) | spouses(g, y)
    missing = blanket - g.observed
    if missing:
        raise GraphError(f"blanket members are unobserved: {g.sort_nodes(missing)}")
    return blanket


def _as_set(g: _DiGraph, nodes: Iterable[Node], label: str) -> frozenset:
    if isinstance(nodes, str):
        nodes = [nodes]
    s = frozenset(nodes)
    for v in s:
        if v not in g._parents:
            raise GraphError(f"unknown node {v!r} in {label}")
    return s


def d_separated(g: _DiGraph, a: Iterable[Node], b: Iterable[Node], z: Iterable[Node] = ()) -> bool:
    """True iff every path between ``a`` and ``b`` is blocked by ``z``.

    Reachability over (node, direction) states: a trail may pass a
    non-collider outside ``z`` and a collider that is an ancestor of ``z``
    (or in ``z``).
    """
    a, b, z = _as_set(g, a, "a"), _as_set(g, b, "b"), _as_set(g, z, "z")
    if (a & b) or (a & z) or (b & z):
        raise GraphError("query sets must be pairwise disjoint")
    if not a or not b:
        return True

    # Nodes that have a descendant (inclusive) in z: colliders there are open.
    anc_z = set(z)
    stack = list(z)
    while stack:
        for p in g._parents[stack.pop()]:
            if p not in anc_z:
                anc_z.add(p)
                stack.append(p)

    UP, DOWN = 0, 1  # UP: reached from a child; DOWN: reached from a parent
    visited: set[tuple[Node, int]] = set()
    queue = deque((v, UP) for v in a)
    while queue:
        v, d = queue.popleft()
        if (v, d) in visited:
            continue
        visited.add((v, d))
        if v not in z and v in b:
            return False
        if d == UP and v not in z:
            queue.extend((p, UP) for p in g._parents[v])
            queue.extend((c, DOWN) for c in g._children[v])
        elif d == DOWN:
            if v not in z:
                queue.extend((c, DOWN) for c in g._children[v])
            if v in anc_z:
                queue.extend((p, UP) for p in g._parents[v])
    return True


def markov_blanket(g: CausalGraph) -> frozenset:
    """Minimal observed set rendering the remaining observed nodes independent of the target.

    With the full blanket observed this is parents, children and spouses.
    Otherwise subsets of the observed set are searched by size, ties going
    to the lexicographically first in declaration order.
    """
    y = g.target
    blanket = g.parents(y) | g.children(y) | spouses(g, y)
    if blanket <= g.observed:
        return blanket
    observed = g.sort_nodes(g.observed)
    for size in range(len(observed) + 1):
        for subset in itertools.combinations(observed, size):
            rest = g.observed - set(subset)
            if d_separated(g, rest, {y}, subset):
                return frozenset(subset)
    raise AssertionError("the full observed set always separates")  # pragma: no cover


def augment(g: CausalGraph, targets: Iterable[Node]) -> AugmentedGraph:
    targets = _as_set(g, targets, "targets")
    if g.target in targets:
        raise GraphError("cannot add an intervention variable on the target")
    return AugmentedGraph(g, targets)


STABLE_CAUSE = "stable-cause"
STABLE_NON_CAUSE = "stable-non-cause"
UNSTABLE = "unstable"


@dataclass(frozen=True)
class StabilityReport:
    conditioning_set: frozenset
    verdicts: Mapping[Node, bool]
    causal_tag: Mapping[Node, bool]

    def stable(self) -> frozenset:
        return frozenset(v for v, ok in self.verdicts.items() if ok)

    def unstable(self) -> frozenset:
        return frozenset(v for v, ok in self.verdicts.items() if not ok)

    def classify(self, v: Node) -> str:
        if not self.verdicts[v]:
            return UNSTABLE
        return STABLE_CAUSE if self.causal_tag[v] else STABLE_NON_CAUSE

    def classes(self) -> dict[Node, str]:
        return {v: self.classify(v) for v in self.verdicts}

    @property
    def all_stable(self) -> bool:
        return all(self.verdicts.values())


def intervention_stable(g: CausalGraph, s: Iterable[Node], targets: Iterable[Node]) -> StabilityReport:
    s = frozenset([s] if isinstance(s, str) else s)
    bad = s - g.observed
    if bad:
        raise GraphError(f"conditioning set contains unobserved or unknown nodes: {sorted(bad)}")
    aug = augment(g, targets)
    y = g.target
    anc = causes(g, y)
    ordered = g.sort_nodes(aug.intervention_targets)
    verdicts = {l: d_separated(aug, {aug.indicator(l)}, {y}, s) for l in ordered}
    tags = {l: l in anc for l in ordered}
    return StabilityReport(s, verdicts, tags)


def check_blanket_stability(g: CausalGraph) -> bool:
    """Check that the Markov blanket is stable under interventions on every cause of the target.

    Requires parents, children and spouses of the target to be observed.
    """
    minimal_d_separator(g)
    report = intervention_stable(g, markov_blanket(g), causes(g, g.target))
    return report.all_stable
