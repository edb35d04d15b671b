import random
from collections import deque
from fractions import Fraction

import pytest
from hypothesis import settings

from ctexplore.trees import ExplorationTree, ROOT, configuration_from_leaves

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def bfs_distances(tree, src):
    """Independent metric oracle: breadth-first search over an adjacency list."""
    adj = {u: [] for u in tree.nodes}
    for u in tree.nodes:
        if u:
            adj[u].append(u[:-1])
            adj[u[:-1]].append(u)
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def random_small_tree(rng, n):
    """Random recursive tree: node j attaches to a uniformly chosen earlier node."""
    nodes = [ROOT]
    kids = {ROOT: 0}
    for _ in range(n - 1):
        p = rng.choice(nodes)
        c = p + (kids[p],)
        kids[p] += 1
        kids[c] = 0
        nodes.append(c)
    return ExplorationTree.from_nodes(nodes)


def random_distribution(rng, nodes, grain):
    """Masses in multiples of 1/grain over ``nodes`` (own masses, not lifted)."""
    own = {}
    for _ in range(grain):
        u = rng.choice(nodes)
        own[u] = own.get(u, 0) + 1
    return {u: Fraction(c, grain) for u, c in own.items()}


@pytest.fixture
def rng():
    return random.Random(20240601)


def lift(own):
    return configuration_from_leaves(own)


# ----- acceptance report -----

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
