"""Replay audit of run artifacts, plus fault injection for testing the auditor.

The audit trusts nothing computed during the run: it replays the move log on
the tree, rebuilds the layered instance from the register dump, and checks
each invariant against that replay.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

from .experiment import Artifact, _extract, default_team_size
from .lgt import InstanceError, make_traverser, run_traverser, validate_instance
from .trees import ROOT, format_node, parse_node, step_towards, tree_distance

CHECKS = ("moves", "claim1", "claim2", "claim3", "claim4", "claim5", "claim6", "potential", "bound")


@dataclass
class Failure:
    check: str
    round: int | None
    message: str

    def __str__(self):
        where = "" if self.round is None else f" at round {self.round}"
        return f"{self.check}: FAIL{where}: {self.message}"


@dataclass
class AuditReport:
    failures: list = field(default_factory=list)
    skipped: set = field(default_factory=set)
    ledger: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def failed(self, check) -> bool:
        return any(f.check == check for f in self.failures)

    def fail(self, check, rnd, message):
        self.failures.append(Failure(check, rnd, message))

    def lines(self) -> list:
        out = []
        for check in CHECKS:
            if check in self.skipped:
                out.append(f"{check}: skipped")
                continue
            mine = [f for f in self.failures if f.check == check]
            out.extend(str(f) for f in mine[:5]) if mine else out.append(f"{check}: pass")
        for key, val in self.ledger.items():
            out.append(f"ledger {key}={val}")
        return out


def audit(art: Artifact) -> AuditReport:
    rep = AuditReport()
    if art.error:
        rep.fail("moves", None, art.error)
    _check_moves(art, rep)
    if not art.teams:
        rep.skipped.update(c for c in CHECKS if c != "moves")
        return rep
    _check_claims(art, rep)
    _check_bound(art, rep)
    return rep


def _check_moves(art: Artifact, rep: AuditReport):
    pos = [ROOT] * art.scenario.k
    count = 0
    for m in art.moves:
        if not 0 <= m.robot < len(pos):
            rep.fail("moves", m.t, f"unknown robot {m.robot}")
            return
        if m.src != pos[m.robot]:
            rep.fail("moves", m.t, f"robot {m.robot} logged at {format_node(m.src)}, replay has {format_node(pos[m.robot])}")
            return
        if m.dst != m.src:
            if not (m.dst in art.tree.children(m.src) or (m.src and m.dst == m.src[:-1])):
                rep.fail("moves", m.t, f"{format_node(m.src)} -> {format_node(m.dst)} is not an edge")
                return
            count += 1
        pos[m.robot] = m.dst
    if count != art.moves_used:
        rep.fail("moves", None, f"log has {count} moves, outcome says {art.moves_used}")


def _team_of(art: Artifact, robot: int) -> tuple:
    """(team index, robot id inside the team)."""
    if art.scenario.agent != "dacte-split":
        return 0, robot
    size = art.scenario.team or default_team_size(art.scenario.k)
    return robot // size, robot % size


def _check_claims(art: Artifact, rep: AuditReport):
    tree = art.tree
    teams = {t.team: t for t in art.teams}
    events = {t: (r, info) for t, r, info in art.events}
    insts = {}
    for t in art.teams:
        if t.extraction is None:
            rep.fail("claim2", None, f"team {t.team}: register chain is inconsistent: {t.extraction_error}")
            rep.fail("claim3", None, f"team {t.team}: register chain is inconsistent: {t.extraction_error}")
        else:
            insts[t.team] = t.extraction

    # claim4: the instance is valid and the traverser replays the targets
    for team, ex in insts.items():
        try:
            validate_instance(ex.instance)
        except InstanceError as exc:
            rep.fail("claim4", None, f"team {team}: {exc}")
        trav = make_traverser(art.scenario.traverser, art.scenario.gamma)
        replay = run_traverser(ex.instance, trav)
        if replay != ex.targets:
            h = next((i for i, (a, b) in enumerate(zip(replay, ex.targets)) if a != b), min(len(replay), len(ex.targets)))
            rep.fail("claim4", None, f"team {team}: traverser replay departs from the targets at h={h + 1}")

    # claim6: width of every layer ever written, then first explorers
    for rec in art.teams:
        for u, b in rec.registers.items():
            written = list(b.layers) + ([b.layer_next] if b.layer_next is not None else [])
            for layer in written:
                if len(layer) > rec.k:
                    rep.fail("claim6", None, f"team {rec.team}: layer of {len(layer)} nodes > k={rec.k} in registers at {format_node(u)}")
    first_explorer: dict = {}
    for m in art.moves:
        if m.rule == "R1" and m.dst != m.src:
            team, inner = _team_of(art, m.robot)
            first_explorer.setdefault((team, m.dst), inner)
    for team, ex in insts.items():
        k = teams[team].k
        for h, layer in enumerate(ex.instance.layers, start=1):
            if len(layer) > k:
                rep.fail("claim6", None, f"team {team}: layer {h} has {len(layer)} nodes > k={k}")
            owners = {}
            for c in sorted(layer):
                if c == ROOT:
                    continue
                i = first_explorer.get((team, c))
                if i is None:
                    rep.fail("claim6", None, f"team {team}: layer {h} node {format_node(c)} was never explored")
                elif i in owners:
                    rep.fail("claim6", None, f"team {team}: robot {i} first explored both {format_node(owners[i])} and {format_node(c)} of layer {h}")
                else:
                    owners[i] = c

    # claim3: register and memory snapshots are prefixes of the final instance
    for team, ex in insts.items():
        layers = ex.instance.layers
        rec = teams[team]
        for u, b in rec.registers.items():
            if b.h is None:
                continue
            if tuple(b.layers) != layers[: len(b.layers)]:
                rep.fail("claim3", None, f"team {team}: registers at {format_node(u)} disagree with the instance")
            if b.layer_next is not None and b.v_next is not None:
                if len(layers) <= b.h or layers[b.h] != b.layer_next:
                    rep.fail("claim3", None, f"team {team}: next layer at {format_node(u)} disagrees with the instance")
        for r, mem in rec.memories.items():
            if tuple(mem.layers) != layers[: len(mem.layers)]:
                rep.fail("claim3", None, f"team {team}: memory of robot {r} disagrees with the instance")

    # replay for claims 1, 2, 5 and the potential ledger
    k = art.scenario.k
    pos = [ROOT] * k
    targets = [ROOT] * k
    heights = [1] * k
    explored: dict = {}  # team -> set of explored child nodes
    initial_open = {u: len(tree.children(u)) for u in tree.nodes if tree.children(u)}
    open_edges: dict = {}  # team -> node -> number of unexplored child edges
    seen_h: dict = {}
    potential = 0
    r1 = r2 = 0
    target_moves = [0] * k
    for m in art.moves:
        i = m.robot
        team, _ = _team_of(art, i)
        ex = insts.get(team)
        r_info = events.get(m.t)
        info = r_info[1] if r_info and r_info[0] == i else None
        if info is None:
            rep.fail("claim1", m.t, "no decision record for this activation")
            pos[i] = m.dst
            continue
        before = parse_node(info["target_before"])
        after = parse_node(info["target_after"])
        h_after = info.get("h_after", heights[i])
        mine = explored.setdefault(team, set())
        unexplored = [c for c in tree.children(m.src) if c not in mine]

        # claim5: a newly defined layer covers every unexplored edge
        for h, nodes in info.get("layers", []):
            if (team, h) in seen_h:
                continue
            layer = [parse_node(s) for s in nodes]
            seen_h[(team, h)] = m.t
            if ex is not None and h <= len(ex.instance.layers) and frozenset(layer) != ex.instance.layers[h - 1]:
                rep.fail("claim3", m.t, f"team {team}: layer {h} as written differs from the instance")
            if not layer:
                continue
            bad = _uncovered_open_node(tree, set(layer), mine, open_edges.setdefault(team, dict(initial_open)))
            if bad is not None:
                rep.fail("claim5", m.t, f"team {team}: unexplored edge below {format_node(bad)} lies outside layer {h}")

        # claim1: locally greedy with targets
        if before != targets[i]:
            rep.fail("claim2", m.t, f"robot {i} reports target {format_node(before)}, replay has {format_node(targets[i])}")
        if m.rule == "R1":
            if m.dst not in unexplored:
                rep.fail("claim1", m.t, f"R1 move to {format_node(m.dst)} is not an unexplored child")
        elif m.rule == "R2":
            if unexplored:
                rep.fail("claim1", m.t, "R2 move while an unexplored edge is adjacent")
            elif m.dst != step_towards(m.src, after):
                rep.fail("claim1", m.t, f"R2 move to {format_node(m.dst)} is not towards target {format_node(after)}")
        elif m.dst != m.src:
            rep.fail("claim1", m.t, f"move tagged {m.rule!r}")
        elif unexplored:
            rep.fail("claim1", m.t, "idle while an unexplored edge is adjacent")

        # claim2: targets follow the global sequence
        if ex is not None:
            S = ex.targets
            if not 1 <= h_after <= len(S) or S[h_after - 1] != after:
                rep.fail("claim2", m.t, f"robot {i} holds target {format_node(after)} at h={h_after}, not in the target sequence")
        if h_after < heights[i]:
            rep.fail("claim2", m.t, f"robot {i} went back from h={heights[i]} to h={h_after}")

        # potential ledger
        d_before = tree_distance(m.src, before)
        d_after = tree_distance(m.dst, after)
        jump = tree_distance(before, after)
        step_sign = {"R1": 1, "R2": -1}.get(m.rule, 0)
        if d_after - d_before > step_sign + jump:
            rep.fail("potential", m.t, f"robot {i}: potential rose by {d_after - d_before}, allowed {step_sign + jump}")
        potential += d_after - d_before
        target_moves[i] += jump
        r1 += m.rule == "R1"
        r2 += m.rule == "R2"

        if m.rule == "R1" and m.dst != m.src and m.dst not in mine:
            mine.add(m.dst)
            counts = open_edges.setdefault(team, dict(initial_open))
            counts[m.src] -= 1
        pos[i], targets[i], heights[i] = m.dst, after, max(heights[i], h_after)

    if potential != sum(tree_distance(p, v) for p, v in zip(pos, targets)):
        rep.fail("potential", None, "ledger does not telescope to the final potential")
    if r2 - r1 > sum(target_moves):
        rep.fail("potential", None, f"R2 moves exceed R1 moves by {r2 - r1} > total target movement {sum(target_moves)}")
    for team, ex in insts.items():
        rec = teams[team]
        members = [r for r in range(k) if _team_of(art, r)[0] == team]
        budget = rec.k * ex.target_movement()
        if sum(target_moves[r] for r in members) > budget:
            rep.fail("potential", None, f"team {team}: robot target movement exceeds k times the sequence length")
    rep.ledger.update(r1=r1, r2=r2, target_movement=sum(target_moves), final_potential=potential)


def _uncovered_open_node(tree, cover, explored, open_counts):
    """A node outside the subtrees of ``cover`` with an unexplored child edge.

    Walks down explored edges from the root, stopping at cover nodes: any
    uncovered unexplored edge has a first unexplored edge on its root path,
    and that edge hangs from a node the walk reaches.
    """
    stack = [ROOT]
    while stack:
        u = stack.pop()
        if u in cover:
            continue
        if open_counts.get(u):
            return u
        stack.extend(c for c in tree.children(u) if c in explored)
    return None


def _check_bound(art: Artifact, rep: AuditReport):
    if not art.completed:
        rep.fail("bound", None, "exploration did not complete")
        return
    bound = art.bound
    rep.ledger["bound"] = bound
    if art.moves_used > bound:
        rep.fail("bound", None, f"moves {art.moves_used} exceed bound {bound}")


# ----- fault injection -----

FAULTS = {
    "flip-rule": "claim1",
    "oversize-layer": "claim6",
    "wrong-target": "claim2",
}


def inject_fault(art: Artifact, kind: str) -> Artifact:
    """Copy of ``art`` with one deliberate corruption of the named kind."""
    art = copy.deepcopy(art)
    if kind == "flip-rule":
        idx = next(j for j, m in enumerate(art.moves) if m.rule == "R1")
        art.moves[idx] = replace(art.moves[idx], rule="R2")
    elif kind == "oversize-layer":
        team = art.teams[0]
        u, b = max(((u, b) for u, b in team.registers.items() if b.h is not None), key=lambda ub: ub[1].h)
        h = max(range(len(b.layers)), key=lambda j: len(b.layers[j]))
        extra = {(1000 + j,) for j in range(team.k + 1 - len(b.layers[h]))}
        b.layers = b.layers[:h] + (b.layers[h] | frozenset(extra),) + b.layers[h + 1:]
        _extract(team)
    elif kind == "wrong-target":
        # a robot claims a target that is not in the sequence at its height
        for t, r, info in art.events:
            if "h_after" in info and parse_node(info["target_after"]) != ROOT:
                bogus = parse_node(info["target_after"]) + (7,)
                info["target_after"] = format_node(bogus)
                break
    else:
        raise ValueError(f"unknown fault {kind!r}")
    return art
