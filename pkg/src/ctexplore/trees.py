"""Port-path trees, layers, configurations and transport distances.

A node is the tuple of port numbers leading to it from the root, so the root
is the empty tuple ``()``.  Masses are ``fractions.Fraction`` throughout.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

PortPath = tuple  # tuple[int, ...]
ROOT: PortPath = ()

Configuration = dict  # PortPath -> Fraction, absent nodes have mass 0


class InvalidTree(ValueError):
    pass


class InvalidConfiguration(ValueError):
    def __init__(self, node, reason):
        super().__init__(f"{format_node(node)}: {reason}")
        self.node = node
        self.reason = reason


def parent(u: PortPath) -> PortPath:
    if not u:
        raise ValueError("the root has no parent")
    return u[:-1]


def depth(u: PortPath) -> int:
    return len(u)


def is_ancestor(a: PortPath, u: PortPath) -> bool:
    """True if ``a`` is a prefix of ``u`` (a node is its own ancestor)."""
    return len(a) <= len(u) and u[: len(a)] == a


def ancestors(u: PortPath):
    """Ancestors of ``u`` from ``u`` itself up to and including the root."""
    for d in range(len(u), -1, -1):
        yield u[:d]


def lca(u: PortPath, v: PortPath) -> PortPath:
    n = 0
    for a, b in zip(u, v):
        if a != b:
            break
        n += 1
    return u[:n]


def tree_distance(u: PortPath, v: PortPath, weights: Mapping | None = None) -> int:
    if weights is None:
        return len(u) + len(v) - 2 * len(lca(u, v))
    a = lca(u, v)
    total = 0
    for node in (u, v):
        while len(node) > len(a):
            if node not in weights:
                raise KeyError(f"node {format_node(node)} is not in the weighted tree")
            total += weights[node]
            node = node[:-1]
    return total


def step_towards(p: PortPath, v: PortPath) -> PortPath:
    """First node after ``p`` on the unique path from ``p`` to ``v``."""
    if p == v:
        raise ValueError("already at destination")
    if is_ancestor(p, v):
        return v[: len(p) + 1]
    return p[:-1]


@dataclass(frozen=True)
class ExplorationTree:
    """Finite prefix-closed set of port paths with positive integral edge weights.

    ``weights`` maps every non-root node to the weight of the edge to its
    parent; missing entries default to 1.
    """

    nodes: frozenset
    weights: Mapping = field(default_factory=dict)

    def __post_init__(self):
        nodes = frozenset(tuple(u) for u in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if ROOT not in nodes:
            raise InvalidTree("tree must contain the root")
        for u in nodes:
            if u and u[:-1] not in nodes:
                raise InvalidTree(f"{format_node(u)} has no parent in the tree")
            if any((not isinstance(p, int)) or p < 0 for p in u):
                raise InvalidTree(f"bad port in {u!r}")
        w = {}
        for u, x in dict(self.weights).items():
            u = tuple(u)
            if u not in nodes or not u:
                raise InvalidTree(f"weight on non-edge {format_node(u)}")
            if int(x) != x or x <= 0:
                raise InvalidTree(f"edge weight must be a positive integer, got {x!r}")
            if x != 1:
                w[u] = int(x)
        object.__setattr__(self, "weights", w)
        children = defaultdict(list)
        for u in nodes:
            if u:
                children[u[:-1]].append(u)
        object.__setattr__(
            self, "_children", {u: tuple(sorted(cs)) for u, cs in children.items()}
        )

    @classmethod
    def from_nodes(cls, nodes: Iterable, weights: Mapping | None = None):
        return cls(frozenset(tuple(u) for u in nodes), dict(weights or {}))

    def __contains__(self, u):
        return u in self.nodes

    def __len__(self):
        return len(self.nodes)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def children(self, u: PortPath) -> tuple:
        return self._children.get(u, ())

    def weight(self, u: PortPath) -> int:
        return self.weights.get(u, 1)

    @property
    def is_weighted(self) -> bool:
        return bool(self.weights)

    def edge_weights(self) -> dict:
        return {u: self.weight(u) for u in self.nodes if u}

    def root_distance(self, u: PortPath) -> int:
        return sum(self.weight(u[:d]) for d in range(1, len(u) + 1))

    @property
    def depth(self) -> int:
        """Maximum weighted root distance."""
        if not self.weights:
            return max(len(u) for u in self.nodes)
        return max(self.root_distance(u) for u in self.nodes)

    @property
    def length(self) -> int:
        """Sum of edge weights."""
        return sum(self.weight(u) for u in self.nodes if u)

    def distance(self, u, v) -> int:
        for x in (u, v):
            if x not in self.nodes:
                raise KeyError(f"node {format_node(x)} is not in the tree")
        return tree_distance(u, v, self.edge_weights() if self.weights else None)

    def leaves(self) -> list:
        return sorted(u for u in self.nodes if not self.children(u))

    def edges(self) -> list:
        return sorted((u[:-1], u) for u in self.nodes if u)

    def dfs_order(self) -> list:
        out, stack = [], [ROOT]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(reversed(self.children(u)))
        return out


# ----- layers -----


def is_antichain(layer: Iterable) -> bool:
    nodes = set(layer)
    for u in nodes:
        for a in list(ancestors(u))[1:]:
            if a in nodes:
                return False
    return True


def layer_dominates(a: Iterable, b: Iterable) -> bool:
    """True iff every node of ``b`` has an ancestor (possibly itself) in ``a``."""
    a = set(a)
    return all(any(x in a for x in ancestors(u)) for u in b)


def active_tree(layer: Iterable) -> set:
    """All nodes with at least one descendant in ``layer``."""
    out = set()
    for u in layer:
        for x in ancestors(u):
            if x in out:
                break
            out.add(x)
    return out


def layer_below(layer: Iterable, u: PortPath) -> list:
    return sorted(x for x in layer if is_ancestor(u, x))


# ----- configurations -----


def configuration_from_leaves(leaf_mass: Mapping) -> Configuration:
    """Lift a distribution on a layer to a configuration (x_u = sum below u)."""
    x: dict = defaultdict(Fraction)
    for leaf, m in leaf_mass.items():
        m = Fraction(m)
        if m == 0:
            continue
        for a in ancestors(tuple(leaf)):
            x[a] += m
    return dict(x)


def leaf_masses(x: Mapping) -> dict:
    """Inverse of :func:`configuration_from_leaves`: own mass of each node."""
    below: dict = defaultdict(Fraction)
    for u, m in x.items():
        if u:
            below[u[:-1]] += m
    out = {}
    for u, m in x.items():
        own = m - below.get(u, 0)
        if own != 0:
            out[u] = own
    return out


def point_mass(u: PortPath) -> Configuration:
    return configuration_from_leaves({u: Fraction(1)})


def validate_configuration(raw: Mapping) -> Configuration:
    """Return the configuration as a clean dict or raise InvalidConfiguration.

    The first violation in sorted node order is reported: root mass different
    from 1, a negative mass, or children whose masses sum above their parent.
    """
    x = {tuple(u): Fraction(m) for u, m in raw.items()}
    if x.get(ROOT, 0) != 1:
        raise InvalidConfiguration(ROOT, f"root mass is {x.get(ROOT, 0)}, expected 1")
    child_sum: dict = defaultdict(Fraction)
    for u, m in x.items():
        if m < 0:
            raise InvalidConfiguration(u, f"negative mass {m}")
        if u:
            child_sum[u[:-1]] += m
    for u in sorted(child_sum):
        if child_sum[u] > x.get(u, 0):
            raise InvalidConfiguration(
                u, f"child mass {child_sum[u]} exceeds node mass {x.get(u, 0)}"
            )
    return {u: m for u, m in x.items() if m != 0}


def in_layer_polytope(x: Mapping, layer: Iterable) -> bool:
    """True iff ``x`` is a configuration with all its mass on ``layer``."""
    try:
        validate_configuration(x)
    except InvalidConfiguration:
        return False
    layer = set(layer)
    return all(u in layer for u in leaf_masses(x))


def ot_up(x: Mapping, y: Mapping) -> Fraction:
    total = Fraction(0)
    for u in set(x) | set(y):
        d = x.get(u, 0) - y.get(u, 0)
        if d > 0:
            total += d
    return total


def ot_down(x: Mapping, y: Mapping) -> Fraction:
    return ot_up(y, x)


def ot_distance(x: Mapping, y: Mapping) -> Fraction:
    return sum((abs(x.get(u, 0) - y.get(u, 0)) for u in set(x) | set(y)), Fraction(0))


# ----- text format -----


def format_node(u: PortPath) -> str:
    return "/" + "/".join(str(p) for p in u)


def parse_node(s: str) -> PortPath:
    s = s.strip()
    if not s.startswith("/"):
        raise ValueError(f"node must start with '/': {s!r}")
    parts = [p for p in s[1:].split("/") if p != ""]
    return tuple(int(p) for p in parts)


def format_tree(tree: ExplorationTree) -> str:
    lines = []
    for u in sorted(tree.nodes, key=lambda v: (len(v), v)):
        w = tree.weight(u) if u else 1
        lines.append(format_node(u) + (f";w={w}" if w != 1 else ""))
    return "\n".join(lines) + "\n"


def parse_tree(text: str) -> ExplorationTree:
    nodes, weights = [], {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        node_part, _, rest = line.partition(";")
        u = parse_node(node_part)
        nodes.append(u)
        if rest:
            key, _, val = rest.partition("=")
            if key.strip() != "w":
                raise ValueError(f"unknown node attribute in {line!r}")
            weights[u] = int(val)
    return ExplorationTree.from_nodes(nodes, weights)


def format_mass(m: Fraction) -> str:
    m = Fraction(m)
    return str(m.numerator) if m.denominator == 1 else f"{m.numerator}/{m.denominator}"
