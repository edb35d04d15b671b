"""Layered tree traversal instances, lazy deterministic traversers and cost."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .trees import (
    ROOT,
    PortPath,
    active_tree,
    format_node,
    is_ancestor,
    is_antichain,
    layer_dominates,
    lca,
    parse_node,
    tree_distance,
)


class InstanceError(ValueError):
    def __init__(self, index, reason):
        super().__init__(f"step {index}: {reason}")
        self.index = index
        self.reason = reason


class EndOfInstance(Exception):
    """Raised by a traverser when asked to pick a leaf of an empty layer."""


@dataclass(frozen=True)
class ElementaryUpdate:
    kind: str  # "fork" | "delete"
    leaf: PortPath
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in ("fork", "delete"):
            raise ValueError(f"unknown update kind {self.kind!r}")
        if (self.kind == "delete") != (not self.children):
            raise ValueError("a delete has no children and a fork has at least one")

    def apply(self, layer: frozenset) -> frozenset:
        return (layer - {self.leaf}) | frozenset(self.children)


@dataclass(frozen=True)
class LgtInstance:
    """Decreasing sequence of layers, optionally annotated with the elementary
    update producing each layer from the previous one."""

    layers: tuple
    updates: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(frozenset(l) for l in self.layers))
        if self.updates is not None:
            object.__setattr__(self, "updates", tuple(self.updates))

    @classmethod
    def from_updates(cls, updates: Sequence[ElementaryUpdate], start=frozenset({ROOT})):
        layers = [frozenset(start)]
        for upd in updates:
            layers.append(upd.apply(layers[-1]))
        return cls(tuple(layers), tuple(updates))

    def __len__(self):
        return len(self.layers)

    @property
    def width(self) -> int:
        return max((len(l) for l in self.layers), default=0)

    def underlying_tree(self) -> set:
        nodes = set()
        for layer in self.layers:
            nodes |= active_tree(layer)
        return nodes

    @property
    def depth(self) -> int:
        return max((len(u) for u in self.underlying_tree()), default=0)

    @property
    def length(self) -> int:
        """Number of edges of the underlying tree."""
        return max(len(self.underlying_tree()) - 1, 0)


def validate_instance(inst: LgtInstance) -> None:
    """Raise InstanceError naming the first offending index."""
    for t, layer in enumerate(inst.layers):
        if not is_antichain(layer):
            raise InstanceError(t, "layer is not an antichain")
        if t and not layer_dominates(inst.layers[t - 1], layer):
            raise InstanceError(t, "layer is not dominated by its predecessor")
    if inst.updates is None:
        return
    if len(inst.updates) != len(inst.layers) - 1:
        raise InstanceError(len(inst.updates), "update count does not match layer count")
    for t, upd in enumerate(inst.updates):
        prev = inst.layers[t]
        if upd.leaf not in prev:
            raise InstanceError(t + 1, f"updated node {format_node(upd.leaf)} is not active")
        if any(c[:-1] != upd.leaf for c in upd.children):
            raise InstanceError(t + 1, "forked nodes must be children of the leaf")
        if upd.apply(prev) != inst.layers[t + 1]:
            raise InstanceError(t + 1, "layer does not match its update")


def decompose(prev: frozenset, nxt: frozenset) -> list:
    """Elementary fork/delete chain turning layer ``prev`` into ``nxt``.

    Requires ``prev`` to dominate ``nxt``.  Forks only create the children
    that lead to nodes of ``nxt``.
    """
    if not layer_dominates(prev, nxt):
        raise ValueError("decompose needs a dominated successor layer")
    out = []
    target_tree = active_tree(nxt)
    for leaf in sorted(prev):
        stack = [leaf]
        while stack:
            u = stack.pop()
            if u in nxt:
                continue
            if u not in target_tree:
                out.append(ElementaryUpdate("delete", u))
                continue
            kids = sorted({v[: len(u) + 1] for v in target_tree if len(v) > len(u) and is_ancestor(u, v)})
            out.append(ElementaryUpdate("fork", u, tuple(kids)))
            stack.extend(reversed(kids))
    return out


def elementary_instance(inst: LgtInstance) -> tuple:
    """Refine an instance into elementary steps.

    Returns the refined instance and, for each refined step, the index of the
    original layer it ends in (so traces can be re-aligned).
    """
    updates, owner = [], [0]
    for t in range(1, len(inst.layers)):
        chain = decompose(inst.layers[t - 1], inst.layers[t])
        updates.extend(chain)
        owner.extend([t] * len(chain))
    refined = LgtInstance.from_updates(updates, inst.layers[0])
    return refined, owner


# ----- text format -----


def format_instance(inst: LgtInstance) -> str:
    if inst.updates is None:
        raise ValueError("only update-annotated instances have a text form")
    lines = [f"width={inst.width}"]
    for upd in inst.updates:
        if upd.kind == "delete":
            lines.append(f"delete {format_node(upd.leaf)}")
        else:
            kids = ",".join(format_node(c) for c in upd.children)
            lines.append(f"fork {format_node(upd.leaf)} -> {kids}")
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> LgtInstance:
    lines = [l.strip() for l in text.splitlines() if l.strip() and not l.startswith("#")]
    if not lines or not lines[0].startswith("width="):
        raise ValueError("instance text must start with 'width=<w>'")
    declared = int(lines[0].split("=", 1)[1])
    updates = []
    for line in lines[1:]:
        verb, _, rest = line.partition(" ")
        if verb == "delete":
            updates.append(ElementaryUpdate("delete", parse_node(rest)))
        elif verb == "fork":
            node, _, kids = rest.partition("->")
            updates.append(
                ElementaryUpdate(
                    "fork", parse_node(node), tuple(parse_node(k) for k in kids.split(","))
                )
            )
        else:
            raise ValueError(f"bad instance line {line!r}")
    inst = LgtInstance.from_updates(updates)
    if inst.width > declared:
        raise ValueError(f"instance width {inst.width} exceeds declared width {declared}")
    return inst


# ----- traversers -----


class Traverser:
    """Lazy deterministic traverser: maps a revealed prefix to a leaf of its
    last layer.

    Calls may come from several robots holding prefixes of the same instance,
    so the traverser memoises its outputs along the longest prefix seen and
    replays from scratch when handed a prefix that disagrees with it.
    """

    name = "base"

    def __init__(self):
        self.reset()

    def reset(self):
        self._layers: list = []
        self._positions: list = []
        self._revealed: set = set()
        self._branching: dict = {}

    def __call__(self, prefix: Sequence) -> PortPath:
        h = len(prefix)
        if h == 0:
            raise ValueError("empty prefix")
        for i in range(min(h, len(self._layers))):
            if self._layers[i] is not prefix[i] and self._layers[i] != prefix[i]:
                self.reset()
                break
        for t in range(len(self._layers), h):
            layer = frozenset(prefix[t])
            if not layer:
                raise EndOfInstance(t)
            self._layers.append(layer)
            for u in active_tree(layer):
                if u not in self._revealed:
                    self._revealed.add(u)
                    if u:
                        self._branching[u[:-1]] = self._branching.get(u[:-1], 0) + 1
            prev = self._positions[-1] if self._positions else ROOT
            pos = prev if prev in layer else self.choose(prev, layer)
            self._positions.append(pos)
        return self._positions[h - 1]

    def choose(self, prev: PortPath, layer: frozenset) -> PortPath:
        raise NotImplementedError


class NearestLeaf(Traverser):
    """Move to the closest active leaf, ties broken by port order."""

    name = "nearest"

    def choose(self, prev, layer):
        return min(layer, key=lambda l: (tree_distance(prev, l), l))


class StickyDFS(Traverser):
    """Stay in the deepest surviving branch of the previous position and take
    its first leaf in depth-first (port) order."""

    name = "sticky-dfs"

    def choose(self, prev, layer):
        return min(layer, key=lambda l: (-len(lca(prev, l)), l))


class WorkFunctionTraverser(Traverser):
    """Threshold traverser in the spirit of work-function algorithms.

    Each active leaf carries a value: its depth plus, for every ancestor on
    its path, the number of extra siblings revealed there.  On a forced move
    the traverser keeps to its own branch unless that branch's best leaf is
    worth more than ``gamma`` times the global minimum.
    """

    name = "work-function"

    def __init__(self, gamma=2):
        if gamma <= 1:
            raise ValueError("gamma must exceed 1")
        self.gamma = gamma
        super().__init__()

    def value(self, leaf):
        extra = sum(self._branching.get(leaf[:d], 1) - 1 for d in range(len(leaf)))
        return len(leaf) + extra

    def choose(self, prev, layer):
        vals = {l: self.value(l) for l in layer}
        best = min(layer, key=lambda l: (vals[l], l))
        sticky = min(layer, key=lambda l: (-len(lca(prev, l)), vals[l], l))
        if vals[sticky] <= self.gamma * vals[best]:
            return sticky
        return best


TRAVERSERS = {
    "nearest": NearestLeaf,
    "sticky-dfs": StickyDFS,
    "work-function": WorkFunctionTraverser,
}


def make_traverser(name="work-function", gamma=2) -> Traverser:
    if name == "work-function":
        return WorkFunctionTraverser(gamma)
    try:
        return TRAVERSERS[name]()
    except KeyError:
        raise ValueError(f"unknown traverser {name!r}") from None


def traverse(prefix: Sequence, traverser: Traverser) -> PortPath:
    return traverser(prefix)


def run_traverser(inst: LgtInstance, traverser: Traverser) -> list:
    """Positions ell(1), ..., ell(T); stops early at an empty layer."""
    traverser.reset()
    out = []
    for t in range(1, len(inst.layers) + 1):
        try:
            out.append(traverser(inst.layers[:t]))
        except EndOfInstance:
            break
    return out


def traversal_cost(inst: LgtInstance, trace: Sequence, weights=None) -> int:
    cost, prev = 0, ROOT
    for t, pos in enumerate(trace):
        if pos not in inst.layers[t]:
            raise InstanceError(t, f"position {format_node(pos)} is not in its layer")
        cost += tree_distance(prev, pos, weights)
        prev = pos
    return cost


def offline_optimum(inst: LgtInstance) -> int:
    """Cheapest position sequence that stays on every layer (dynamic program)."""
    best = {ROOT: 0}
    for layer in inst.layers:
        if not layer:
            break
        best = {
            l: min(c + tree_distance(p, l) for p, c in best.items()) for l in layer
        }
    return min(best.values())
