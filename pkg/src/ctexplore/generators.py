"""Tree families, weighted subdivision, and random layered instances."""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from .lgt import ElementaryUpdate, LgtInstance
from .sim import ExplorationOutcome, SimState, default_budget, step
from .trees import ROOT, ExplorationTree


def path(n: int) -> ExplorationTree:
    if n < 1:
        raise ValueError("n must be positive")
    return ExplorationTree.from_nodes((0,) * d for d in range(n))


def star(k: int, arm: int = 1) -> ExplorationTree:
    """``k`` arms of ``arm`` edges each hanging from the root."""
    nodes = [ROOT]
    for j in range(k):
        nodes += [(j,) + (0,) * d for d in range(arm)]
    return ExplorationTree.from_nodes(nodes)


def spider(arms: int, length: int) -> ExplorationTree:
    """Legs of graded lengths: leg j has ceil(length * (j + 1) / arms) edges."""
    nodes = [ROOT]
    for j in range(arms):
        leg = -(-length * (j + 1) // arms)
        nodes += [(j,) + (0,) * d for d in range(leg)]
    return ExplorationTree.from_nodes(nodes)


def binary(D: int) -> ExplorationTree:
    nodes, frontier = [ROOT], [ROOT]
    for _ in range(D):
        frontier = [u + (b,) for u in frontier for b in (0, 1)]
        nodes += frontier
    return ExplorationTree.from_nodes(nodes)


def comb_tree(D: int) -> ExplorationTree:
    """Spine of D edges along port 0; at spine depth i < D - 1 a tooth of
    D - i edges hangs from port 1, so every tooth ends at depth D."""
    if D < 2:
        raise ValueError("comb needs D >= 2")
    nodes = [(0,) * i for i in range(D + 1)]
    for i in range(D - 1):
        base = (0,) * i + (1,)
        nodes += [base + (0,) * j for j in range(D - i)]
    return ExplorationTree.from_nodes(nodes)


def comb_size(D: int) -> int:
    return D + D * (D + 1) // 2


def random_tree(n: int, seed=0) -> ExplorationTree:
    """Uniform random labelled tree on n vertices (Pruefer code), rooted at
    label 0; children get ports in increasing label order."""
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return ExplorationTree.from_nodes([ROOT])
    rng = random.Random(seed)
    if n == 2:
        edges = [(0, 1)]
    else:
        code = [rng.randrange(n) for _ in range(n - 2)]
        degree = [1] * n
        for x in code:
            degree[x] += 1
        leaves = [v for v in range(n) if degree[v] == 1]
        heapq.heapify(leaves)
        edges = []
        for x in code:
            leaf = heapq.heappop(leaves)
            edges.append((leaf, x))
            degree[x] -= 1
            if degree[x] == 1:
                heapq.heappush(leaves, x)
        edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    label_to_node = {0: ROOT}
    stack = [0]
    while stack:
        v = stack.pop()
        kids = sorted(w for w in adj[v] if w not in label_to_node)
        for port, w in enumerate(kids):
            label_to_node[w] = label_to_node[v] + (port,)
            stack.append(w)
    return ExplorationTree.from_nodes(label_to_node.values())


def random_weights(tree: ExplorationTree, seed=0, low=1, high=8, a=1) -> ExplorationTree:
    rng = random.Random(seed)
    w = {u: a * rng.randint(low, high) for u in sorted(tree.nodes) if u}
    return ExplorationTree.from_nodes(tree.nodes, w)


# ----- weighted edges -----


@dataclass
class Subdivision:
    tree: ExplorationTree  # unit-weight tree
    a: int
    to_unit: dict  # real node -> node of the subdivided tree
    to_real: dict = field(default_factory=dict)

    def __post_init__(self):
        self.to_real = {v: u for u, v in self.to_unit.items()}

    def is_real(self, v) -> bool:
        return v in self.to_real


def subdivide(tree: ExplorationTree, a: int = 1) -> Subdivision:
    """Replace each edge of weight m*a by a path of m unit edges."""
    to_unit = {ROOT: ROOT}
    nodes = [ROOT]
    for u in sorted(tree.nodes, key=len):
        if not u:
            continue
        w = tree.weight(u)
        if w % a:
            raise ValueError(f"edge weight {w} is not a multiple of {a}")
        m = w // a
        base = to_unit[u[:-1]] + (u[-1],)
        nodes += [base + (0,) * j for j in range(m)]
        to_unit[u] = base + (0,) * (m - 1)
    return Subdivision(ExplorationTree.from_nodes(nodes), a, to_unit)


def contract(sub: Subdivision) -> ExplorationTree:
    """Inverse of :func:`subdivide`."""
    weights = {}
    for u, v in sub.to_unit.items():
        if u:
            pv = sub.to_unit[u[:-1]]
            weights[u] = sub.a * (len(v) - len(pv))
    return ExplorationTree.from_nodes(sub.to_unit, weights)


@dataclass
class WeightedOutcome:
    inner: ExplorationOutcome
    subdivision: Subdivision
    cost: int
    completed: bool


def weighted_run(tree, agent, adversary, k=1, a=1, budget=None) -> WeightedOutcome:
    """Explore a weighted tree by running ``agent`` on its subdivision.

    Whenever the adversary picks a robot (always standing on a real node), the
    robot keeps moving in the subdivided tree until it reaches a real node.
    Cost is ``a`` times the unit moves used; completion means every real node
    has been visited.
    """
    sub = subdivide(tree, a)
    if budget is None:
        budget = default_budget(sub.tree.n, k)
    state = SimState.initial(sub.tree, agent, k)
    real = set(sub.to_real)

    def done():
        return real <= state.visited

    while not done() and state.round < budget:
        r = adversary(state)
        step(state, agent, r)
        while not done() and state.positions[r] not in real and state.round < budget:
            step(state, agent, r)
    outcome = ExplorationOutcome(state, state.move_count, state.round, done())
    return WeightedOutcome(outcome, sub, a * state.move_count, done())


# ----- random layered instances -----


def random_instance(seed=0, max_width=4, max_depth=8, steps=None, max_children=3,
                    delete_bias=0.3, single_leaf_end=True) -> LgtInstance:
    """Random chain of fork/delete updates from {root}.

    Stops when no legal update remains or after ``steps`` updates.  With
    ``single_leaf_end`` random deletions then shrink the last layer to one
    leaf, as when a traversal ends at the last explored node.
    """
    rng = random.Random(seed)
    layer = {ROOT}
    updates = []
    limit = steps if steps is not None else 4 * max_width * max_depth
    for _ in range(limit):
        forkable = sorted(l for l in layer if len(l) < max_depth)
        can_delete = len(layer) > 1
        if not forkable and not can_delete:
            break
        if can_delete and (not forkable or rng.random() < delete_bias):
            leaf = rng.choice(sorted(layer))
            updates.append(ElementaryUpdate("delete", leaf))
            layer.discard(leaf)
            continue
        leaf = rng.choice(forkable)
        room = max_width - len(layer) + 1
        c = rng.randint(1, max(1, min(max_children, room)))
        kids = tuple(leaf + (j,) for j in range(c))
        updates.append(ElementaryUpdate("fork", leaf, kids))
        layer.discard(leaf)
        layer.update(kids)
    while single_leaf_end and len(layer) > 1:
        leaf = rng.choice(sorted(layer))
        updates.append(ElementaryUpdate("delete", leaf))
        layer.discard(leaf)
    return LgtInstance.from_updates(updates)


GENERATORS = {
    "path": lambda p: path(int(p["n"])),
    "comb": lambda p: comb_tree(int(p["D"])),
    "binary": lambda p: binary(int(p["D"])),
    "star": lambda p: star(int(p.get("arms", 3)), int(p.get("arm", 1))),
    "spider": lambda p: spider(int(p["arms"]), int(p["len"])),
    "random": lambda p: random_tree(int(p["n"]), int(p.get("seed", 0))),
}


def generate(spec: dict) -> ExplorationTree:
    """Build a tree from a generator spec such as {"family": "comb", "D": 40}.

    An optional ``weights=lo..hi`` entry draws integral edge weights.
    """
    family = spec.get("family")
    if family not in GENERATORS:
        raise ValueError(f"unknown tree family {family!r}")
    tree = GENERATORS[family](spec)
    if "weights" in spec:
        lo, _, hi = str(spec["weights"]).partition("..")
        tree = random_weights(
            tree, int(spec.get("seed", 0)), int(lo), int(hi or lo), int(spec.get("a", 1))
        )
    return tree
