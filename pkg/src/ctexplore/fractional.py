"""Fractional tree traversal: random-DFS configurations, the potential-driven
conversion z(.), the reduction from collective exploration, and exact
certificate checking.

Configurations are dicts node -> Fraction over the support (plus ancestors);
absent nodes have mass 0.  Layer indices are 0-based positions into
``LgtInstance.layers``; layers[0] is {root}.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .lgt import LgtInstance, elementary_instance
from .sim import SimState, step
from .trees import (
    ROOT,
    ExplorationTree,
    active_tree,
    configuration_from_leaves,
    format_mass,
    format_node,
    lca,
    leaf_masses,
    ot_distance,
    ot_down,
    ot_up,
    point_mass,
)

ZERO = Fraction(0)
ONE = Fraction(1)


def _pos(v):
    return v if v > 0 else ZERO


# ----- random-DFS configuration -----


def delta_for_layer(layer) -> dict:
    """delta_u = 1 / prod of c+ over the parents on the path from u to the root.

    c+_v counts the children of v with a descendant in the layer.  The leaf
    masses are the probabilities that a DFS with uniformly shuffled children
    reaches each leaf before any other leaf of the layer.
    """
    layer = frozenset(layer)
    if not layer:
        raise ValueError("empty layer")
    tree = active_tree(layer)
    branching: dict = {}
    for u in tree:
        if u:
            branching[u[:-1]] = branching.get(u[:-1], 0) + 1
    delta = {}
    for u in sorted(tree, key=len):
        delta[u] = ONE if not u else delta[u[:-1]] / branching[u[:-1]]
    return delta


def delta_of(inst: LgtInstance, t: int) -> dict:
    return delta_for_layer(inst.layers[t])


def random_dfs_hit(layer, rng: random.Random):
    """Leaf of ``layer`` first reached by a DFS with shuffled children."""
    tree = active_tree(layer)
    u = ROOT
    while u not in layer:
        kids = sorted(c for c in tree if len(c) == len(u) + 1 and c[:-1] == u)
        u = rng.choice(kids)
    return u


# ----- potential and objective -----


def potential_D(delta, x, z) -> Fraction:
    """Sum over all nodes of (z_u + delta_u - 2 x_u)^+."""
    total = ZERO
    for u in set(delta) | set(x) | set(z):
        total += _pos(z.get(u, ZERO) + delta.get(u, ZERO) - 2 * x.get(u, ZERO))
    return total


def z_objective(z_prev, x, delta, z) -> tuple:
    """(upward movement + potential, upward movement) of a candidate z."""
    up = ot_up(z_prev, z)
    return up + potential_D(delta, x, z), up


# Piecewise-linear functions on [0, 1] with lexicographic (primary, secondary)
# values.  A function is (value at 0, [(length, slope, tag), ...]) with slopes
# in nondecreasing lexicographic order.  The secondary component is minus the
# upward movement, so minimising pairs implements the tie-break.


def _add(p, q):
    return (p[0] + q[0], p[1] + q[1])


def _node_cost(a, b, one):
    """Lex cost of node mass m in [0, one]: ((a - m)^+ + (m - b)^+, -(a - m)^+)."""
    cuts = sorted({0, one} | {c for c in (a, b) if 0 < c < one})
    segs = []
    for lo, hi in zip(cuts, cuts[1:]):
        # the slope is constant on (lo, hi); test at its midpoint, doubled
        below_a = lo + hi < 2 * a
        prim = (-1 if below_a else 0) + (1 if lo + hi > 2 * b else 0)
        segs.append((hi - lo, (prim, 1 if below_a else 0)))
    return (a + max(-b, 0), -a), segs


def _add_pointwise(f_segs, g_segs):
    """Sum of two slope lists over the same domain; tags follow ``f``."""
    out = []
    i = j = 0
    fl = f_segs[0][0] if f_segs else 0
    gl = g_segs[0][0] if g_segs else 0
    while i < len(f_segs) and j < len(g_segs):
        step_len = min(fl, gl)
        if step_len > 0:
            out.append((step_len, _add(f_segs[i][1], g_segs[j][1]), f_segs[i][2]))
        fl -= step_len
        gl -= step_len
        if fl == 0:
            i += 1
            fl = f_segs[i][0] if i < len(f_segs) else 0
        if gl == 0:
            j += 1
            gl = g_segs[j][0] if j < len(g_segs) else 0
    return out


def z_step(z_prev, x, delta, layer) -> dict:
    """Exact minimiser over configurations on ``layer`` of
    OT_up(z_prev, z) + D(delta, x, z), ties broken towards larger OT_up(z_prev, z)
    and then by port order.

    Tree dynamic programme: each node's optimal subtree cost as a function
    of its mass is convex piecewise linear; children combine by merging
    slopes (infimal convolution), then the node's own term is added.
    """
    layer = frozenset(layer)
    if not layer:
        raise ValueError("empty layer")
    tree = active_tree(layer)
    # work in integer units of a common denominator
    one = 1
    for u in tree:
        for cfg in (z_prev, x, delta):
            one = math.lcm(one, Fraction(cfg.get(u, ZERO)).denominator)
    kids: dict = {}
    for u in tree:
        if u:
            kids.setdefault(u[:-1], []).append(u)
    merged: dict = {}
    funcs: dict = {}
    for u in sorted(tree, key=len, reverse=True):
        a = int(z_prev.get(u, ZERO) * one)
        b = int((2 * x.get(u, ZERO) - delta.get(u, ZERO)) * one)
        v0, own = _node_cost(a, b, one)
        if u in layer:
            funcs[u] = (v0, [(l, s, None) for l, s in own])
            continue
        children = sorted(kids[u])
        pool = []
        for rank, c in enumerate(children):
            cv0, csegs = funcs.pop(c)
            v0 = _add(v0, cv0)
            pool.extend((s, rank, l, c) for l, s, _ in csegs)
        pool.sort(key=lambda e: (e[0], e[1]))
        segs, room = [], one
        for s, _, l, c in pool:
            if room == 0:
                break
            take = min(l, room)
            segs.append((take, s, c))
            room -= take
        merged[u] = segs
        funcs[u] = (v0, _add_pointwise(segs, [(l, s, None) for l, s in own]))
    # top-down allocation from unit root mass
    z = {ROOT: one}
    stack = [ROOT]
    while stack:
        u = stack.pop()
        if u in layer:
            continue
        alloc: dict = {}
        room = z[u]
        for l, _, c in merged[u]:
            if room == 0:
                break
            take = min(l, room)
            alloc[c] = alloc.get(c, ZERO) + take
            room -= take
        for c, m in alloc.items():
            if m > 0:
                z[c] = m
                stack.append(c)
    return {u: Fraction(m, one) for u, m in z.items()}


def grid_minimum(z_prev, x, delta, layer, grain=12):
    """Brute force over configurations on ``layer`` with masses in multiples
    of 1/grain: the lexicographically best (objective, -OT_up) and a witness."""
    leaves = sorted(layer)
    best = None

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    for comp in compositions(grain, len(leaves)):
        z = configuration_from_leaves({l: Fraction(c, grain) for l, c in zip(leaves, comp)})
        val, up = z_objective(z_prev, x, delta, z)
        if best is None or (val, -up) < (best[0], -best[1]):
            best = (val, up, z)
    return best


# ----- costs -----


@dataclass
class FractionalTrace:
    configs: list  # one configuration per layer index

    def __len__(self):
        return len(self.configs)

    def __getitem__(self, t):
        return self.configs[t]


def fractional_costs(configs) -> dict:
    """Cost, Cost_up and Cost_down of a trace, starting from the root."""
    cost = up = down = ZERO
    prev = point_mass(ROOT)
    for c in configs:
        cost += ot_distance(prev, c)
        up += ot_up(prev, c)
        down += ot_down(prev, c)
        prev = c
    return {"cost": cost, "up": up, "down": down}


def mean_depth(config) -> Fraction:
    return sum((m * len(u) for u, m in leaf_masses(config).items()), ZERO)


# ----- the reduction from collective exploration -----


class PhaseStall(RuntimeError):
    """The agent failed to bring every robot onto the next layer in time."""


@dataclass
class ReductionRun:
    trace: FractionalTrace
    phase_moves: list  # robot moves spent reaching layer t (0 for t = 0)
    state: SimState


def robot_distribution(positions, k) -> dict:
    counts: dict = {}
    for p in positions:
        counts[p] = counts.get(p, 0) + 1
    return configuration_from_leaves({p: Fraction(c, k) for p, c in counts.items()})


def acte_to_fractional(agent, inst: LgtInstance, k: int, phase_budget=None) -> ReductionRun:
    """Drive ``agent`` with ``k`` robots through the tree underlying ``inst``.

    For each new layer the adversary activates, round robin, the robots not
    standing on the layer, until all of them stand on it; robots on the layer
    are never activated, so nobody sees below it.  x(t) is the robot
    distribution with mass 1/k per robot.
    """
    tree = ExplorationTree.from_nodes(inst.underlying_tree())
    if phase_budget is None:
        phase_budget = 10 * (2 * tree.n + k * tree.n)
    state = SimState.initial(tree, agent, k)
    if inst.layers[0] != frozenset({ROOT}):
        raise ValueError("the instance must start from the root layer")
    configs = [robot_distribution(state.positions, k)]
    phase_moves = [0]
    turn = 0
    for t in range(1, len(inst.layers)):
        layer = inst.layers[t]
        if not layer:
            break
        before, rounds = state.move_count, 0
        while True:
            off = [i for i in range(k) if state.positions[i] not in layer]
            if not off:
                break
            if rounds >= phase_budget:
                raise PhaseStall(f"robots did not reach layer {t} within {phase_budget} rounds")
            i = min(off, key=lambda r: (r - turn) % k)
            turn = i + 1
            step(state, agent, i, stop_when_complete=False)
            rounds += 1
        configs.append(robot_distribution(state.positions, k))
        phase_moves.append(state.move_count - before)
    return ReductionRun(FractionalTrace(configs), phase_moves, state)


# ----- synthetic traces -----


def synthetic_trace(inst: LgtInstance, seed=0, grain=12, lazy=True) -> FractionalTrace:
    """A random fractional traversal with masses in multiples of 1/grain.

    With ``lazy`` the mass of a forked leaf is split among its children and
    the mass of a deleted leaf is sent to a random surviving leaf; otherwise
    each configuration is drawn independently on its layer.
    """
    rng = random.Random(seed)
    units = {ROOT: grain}
    out = [point_mass(ROOT)]
    for t in range(1, len(inst.layers)):
        layer = sorted(inst.layers[t])
        if not layer:
            break
        if lazy:
            nxt = {}
            for leaf, m in units.items():
                if leaf in inst.layers[t]:
                    nxt[leaf] = nxt.get(leaf, 0) + m
                    continue
                below = [l for l in layer if l[: len(leaf)] == leaf]
                for _ in range(m):
                    dest = rng.choice(below or layer)
                    nxt[dest] = nxt.get(dest, 0) + 1
            units = nxt
        else:
            units = {}
            for _ in range(grain):
                dest = rng.choice(layer)
                units[dest] = units.get(dest, 0) + 1
        out.append(configuration_from_leaves({l: Fraction(m, grain) for l, m in units.items()}))
    return FractionalTrace(out)


# ----- certificates -----


@dataclass
class Violation:
    check: str
    step: int
    slack: Fraction  # rhs - lhs, negative when violated
    detail: str = ""

    def __str__(self):
        return f"{self.check} at step {self.step}: slack {format_mass(self.slack)} {self.detail}".rstrip()


@dataclass
class CertificateReport:
    violations: list = field(default_factory=list)
    steps: int = 0
    width: int = 0
    depth: int = 0
    cost_x: Fraction = ZERO
    cost_z: Fraction = ZERO
    cost_z_up: Fraction = ZERO
    cost_z_down: Fraction = ZERO
    forked_mass: Fraction = ZERO  # sum over steps of z at the updated leaf before the update
    min_slack: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def forked_mass_ratio(self):
        return None if self.cost_x == 0 else self.forked_mass / self.cost_x

    def record(self, check, step, lhs, rhs, detail=""):
        slack = rhs - lhs
        if check not in self.min_slack or slack < self.min_slack[check][0]:
            self.min_slack[check] = (slack, step)
        if slack < 0:
            self.violations.append(Violation(check, step, slack, detail))

    def lines(self):
        out = [f"steps={self.steps} width={self.width} depth={self.depth}"]
        for name, (slack, step_) in sorted(self.min_slack.items()):
            status = "ok" if slack >= 0 else "FAIL"
            out.append(f"{name}: {status} min_slack={format_mass(slack)} at step {step_}")
        return out


def shift_panel(z, layer):
    """Leaf-to-leaf mass shifts probing stability: for each leaf with mass
    and each other leaf, move all, half, or a small slice of its mass.

    Yields (src, dst, eps, changes) where ``changes`` maps each node whose
    mass changes to its increment; all other nodes keep their mass.
    """
    leaves = sorted(layer)
    for src in leaves:
        m = z.get(src, ZERO)
        if m <= 0:
            continue
        for dst in leaves:
            if dst == src:
                continue
            anc = len(lca(src, dst))
            for eps in sorted({m, m / 2, m / 64}):
                changes = {src[:d]: -eps for d in range(anc + 1, len(src) + 1)}
                changes.update({dst[:d]: eps for d in range(anc + 1, len(dst) + 1)})
                yield src, dst, eps, changes


def apply_shift(z, changes) -> dict:
    out = dict(z)
    for u, d in changes.items():
        out[u] = out.get(u, ZERO) + d
    return {u: m for u, m in out.items() if m != 0}


def _stability_panel(delta, x, z, layer):
    """Worst shift of the panel as (gain, detail), with gain the exact value
    of OT_up(z, z') + D(z') - D(z); stability asks for gain >= 0.

    Masses are scaled to a common denominator so the panel runs on integers.
    """
    den = 1
    for cfg in (delta, x, z):
        for m in cfg.values():
            den = math.lcm(den, m.denominator)
    den *= 128  # room for the half and 1/64 slices
    Z = {u: int(m * den) for u, m in z.items()}
    B = {u: int(delta.get(u, ZERO) * den) - 2 * int(x.get(u, ZERO) * den) for u in set(delta) | set(x)}
    worst = None
    for src, dst, eps, changes in shift_panel(z, layer):
        gain = 0
        for u, d in changes.items():
            d = d * den
            assert d.denominator == 1
            d = int(d)
            zu, bu = Z.get(u, 0), B.get(u, 0)
            if d < 0:
                gain -= d
            gain += max(zu + d + bu, 0) - max(zu + bu, 0)
        if worst is None or gain < worst[0]:
            worst = (gain, f"{format_node(src)}->{format_node(dst)} eps={format_mass(eps)}")
    if worst is None:
        return None
    return Fraction(worst[0], den), worst[1]


def run_z(inst: LgtInstance, xs, deltas=None) -> list:
    """z(0) = root, then z(t) = z_step(z(t-1), x(t), delta(t), L(t))."""
    deltas = deltas or [delta_of(inst, t) for t in range(len(xs))]
    zs = [point_mass(ROOT)]
    for t in range(1, len(xs)):
        zs.append(z_step(zs[-1], xs[t], deltas[t], inst.layers[t]))
    return zs


def verify_certificates(inst: LgtInstance, xs, zs=None, deltas=None, width=None) -> CertificateReport:
    """Check, with exact arithmetic, every inequality of the conversion.

    ``inst`` must be made of elementary updates; ``xs`` holds one
    configuration per layer.  Checks: leaf domination, stability against
    the shift panel, the per-step potential inequality, the telescoped cost
    bounds, and the support rule.
    """
    if inst.updates is None:
        raise ValueError("certificates need an instance of elementary updates")
    xs = list(xs)
    T = len(xs)
    deltas = deltas or [delta_of(inst, t) for t in range(T)]
    zs = zs or run_z(inst, xs, deltas)
    w = width or max(len(inst.layers[t]) for t in range(T))
    D = max((len(u) for t in range(T) for u in inst.layers[t]), default=0)
    rep = CertificateReport(steps=T, width=w, depth=D)
    floor = Fraction(1, 2**w)
    pot = [potential_D(deltas[t], xs[t], zs[t]) for t in range(T)]
    for t in range(T):
        layer, x, z, dl = inst.layers[t], xs[t], zs[t], deltas[t]
        for leaf in sorted(layer):
            zl = z.get(leaf, ZERO)
            rep.record("leaf-domination", t, zl, _pos(2 * x.get(leaf, ZERO) - dl.get(leaf, ZERO)),
                       format_node(leaf))
            if zl > 0:
                rep.record("support", t, floor, x.get(leaf, ZERO), format_node(leaf))
        worst = _stability_panel(dl, x, z, layer)
        if worst is not None:
            rep.record("stability", t, ZERO, worst[0], worst[1])
        if t == 0:
            continue
        leaf = inst.updates[t - 1].leaf
        zl_prev = zs[t - 1].get(leaf, ZERO)
        rep.forked_mass += zl_prev
        lhs = ot_up(zs[t - 1], z) + pot[t] - pot[t - 1]
        moved = ot_distance(xs[t - 1], x)
        rest = zl_prev + sum(dl.values(), ZERO) - sum(deltas[t - 1].values(), ZERO)
        rep.record("potential-step", t, lhs, moved + rest)
        # x enters the potential with weight 2, so the provable form charges 2 OT
        rep.record("potential-step-2ot", t, lhs, 2 * moved + rest)
    cx = fractional_costs(xs)
    cz = fractional_costs(zs)
    rep.cost_x, rep.cost_z, rep.cost_z_up, rep.cost_z_down = cx["cost"], cz["cost"], cz["up"], cz["down"]
    rep.record("upward-cost", T - 1, cz["up"], 3 * cx["cost"] + D)
    rep.record("total-cost", T - 1, cz["cost"], 9 * cx["cost"])
    return rep


def certify_instance(inst: LgtInstance, xs=None, agent=None, k=None, seed=0, **kw):
    """Refine ``inst`` to elementary updates, build x (from ``agent`` with
    ``k`` robots, or a synthetic trace) and run every certificate."""
    if inst.updates is None:
        inst, _ = elementary_instance(inst)
    if xs is None:
        if agent is not None:
            xs = acte_to_fractional(agent, inst, k).trace.configs
        else:
            xs = synthetic_trace(inst, seed, **kw).configs
    return verify_certificates(inst, xs)


# ----- product bound -----


def partitions(total, largest=None):
    """Integer partitions of ``total`` as nonincreasing tuples."""
    largest = total if largest is None else largest
    if total == 0:
        yield ()
        return
    for first in range(min(total, largest), 0, -1):
        for rest in partitions(total - first, first):
            yield (first,) + rest


def max_product(w: int) -> int:
    """Largest prod c_i over integer families with sum (c_i - 1) <= w.

    Families are partitions of the excess budget: c_i - 1 ranges over the
    parts of a partition of some s <= w (entries equal to 1 do not matter).
    """
    best = 1
    for s in range(w + 1):
        for parts in partitions(s):
            best = max(best, math.prod(p + 1 for p in parts))
    return best


def product_bound_check(w: int) -> bool:
    if not 0 <= w <= 12:
        raise ValueError("w must lie in 0..12")
    return max_product(w) == 2**w

