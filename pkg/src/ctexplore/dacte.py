"""Whiteboard-based distributed exploration with a shared target sequence.

Each robot is locally greedy with targets: it crosses an adjacent unexplored
edge when it can (rule R1) and otherwise steps towards its target (rule R2).
When a robot stands on its target with no unexplored edge around, it either
adopts the successor target written on the whiteboard (follower) or, if none
is written yet, computes the next layer of a layered tree traversal instance
and elects the next target with a lazy traverser (leader).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .lgt import LgtInstance, Traverser, make_traverser
from .sim import Decision, Observation
from .trees import ROOT, PortPath, format_node, step_towards, tree_distance


@dataclass
class NodeRegisters:
    unexplored: frozenset = frozenset()  # incident child edges still unexplored
    c_plus: dict = field(default_factory=dict)  # child -> robot that explored the edge
    h: int | None = None
    h_first: int | None = None
    layers: tuple = ()  # L_u(1..h_u)
    v_next: PortPath | None = None
    layer_next: frozenset | None = None
    synced: set = field(default_factory=set)
    finished: bool = False


@dataclass(frozen=True)
class RobotMemory:
    p: PortPath = ROOT
    v: PortPath = ROOT
    c: PortPath | None = None
    h: int = 1
    layers: tuple = (frozenset({ROOT}),)


class DacteAgent:
    """Distributed asynchronous exploration agent.

    ``traverser`` is the lazy layered-tree traverser used by leaders; one
    traverser object serves all robots of a run (it memoises a deterministic
    function of the revealed prefix).
    """

    name = "dacte"

    def __init__(self, traverser: Traverser | str = "work-function", gamma=2):
        if isinstance(traverser, str):
            traverser = make_traverser(traverser, gamma)
        self.traverser = traverser

    def init_memory(self, robot, k):
        return RobotMemory()

    def act(self, obs: Observation, mem: RobotMemory, board: NodeRegisters | None):
        dec = self._act(obs, mem, board)
        dec.info["h_after"] = dec.memory.h
        return dec

    def _act(self, obs, mem, board):
        i, u = obs.robot, obs.position
        board = board if board is not None else NodeRegisters()
        # revisiting u: children this robot explored leave C_u^+
        for c in [c for c, r in board.c_plus.items() if r == i]:
            del board.c_plus[c]
        unexplored = obs.unexplored
        board.unexplored = frozenset(unexplored)
        mem = replace(mem, p=u)
        info = {"target_before": mem.v, "h_before": mem.h}

        if board.finished:
            info["target_after"] = mem.v
            return Decision(u, "none", mem, board, finished=True, info=info)

        at_target = u == mem.v
        if at_target and board.v_next is None:
            self._synchronize(i, u, mem, board, info)
        # c_i is refreshed only after synchronising, so a target never
        # overwrites the finished child the robot is reporting
        if board.h is None:
            mem = replace(mem, c=u)

        if unexplored:
            c = unexplored[0]
            board.c_plus[c] = i
            board.unexplored = frozenset(unexplored[1:])
            info["target_after"] = mem.v
            return Decision(c, "R1", mem, board, info=info)
        if not at_target:
            info["target_after"] = mem.v
            return Decision(step_towards(u, mem.v), "R2", mem, board, info=info)
        if board.v_next is not None:
            info["role"] = "follower"
            mem = replace(
                mem, h=board.h + 1, layers=board.layers + (board.layer_next,), v=board.v_next
            )
        else:
            info["role"] = "leader"
            nxt = (board.layers[-1] - {u}) | frozenset(board.c_plus)
            board.layer_next = nxt
            info.setdefault("layers", []).append((board.h + 1, sorted(nxt)))
            if not nxt:
                board.finished = True
                info["target_after"] = mem.v
                return Decision(u, "none", mem, board, finished=True, info=info)
            layers = board.layers + (nxt,)
            v = self.traverser(layers)
            board.v_next = v
            mem = replace(mem, h=board.h + 1, layers=layers, v=v)
        info["target_after"] = mem.v
        return Decision(step_towards(u, mem.v), "R2", mem, board, info=info)

    @staticmethod
    def _synchronize(i, u, mem, board, info):
        if board.h is None:
            board.h = board.h_first = mem.h
            board.layers = mem.layers
            board.synced = {i}
            info["sync"] = "init"
            # the first robot may itself be returning from a finished child
            if mem.c is not None and mem.c != u and mem.c in board.layers[-1]:
                board.h += 1
                new = board.layers[-1] - {mem.c}
                board.layers = board.layers + (new,)
                info["sync"] = "init+shrink"
                info.setdefault("layers", []).append((board.h, sorted(new)))
        elif i not in board.synced:
            board.synced.add(i)
            board.h += 1
            new = board.layers[-1] - ({mem.c} - {u})
            board.layers = board.layers + (new,)
            info["sync"] = "shrink"
            info.setdefault("layers", []).append((board.h, sorted(new)))


# ----- team splitting -----


@dataclass
class _TeamBoard:
    explored: set = field(default_factory=set)
    inner: object = None


class TeamSplitAgent:
    """Run independent copies of an agent on teams of ``team_size`` robots.

    Robot i belongs to team i // team_size.  Teams keep their own whiteboard
    entries and their own record of explored edges, and ignore each other.
    """

    def __init__(self, factory, team_size):
        if team_size < 1:
            raise ValueError("team size must be positive")
        self.factory = factory
        self.team_size = team_size
        self.agents: dict = {}
        self.name = f"dacte-split({team_size})"

    def team_of(self, robot):
        return robot // self.team_size

    def _agent(self, team):
        if team not in self.agents:
            self.agents[team] = self.factory()
        return self.agents[team]

    def team_count(self, k):
        return -(-k // self.team_size)

    def team_k(self, team, k):
        return min(self.team_size, k - team * self.team_size)

    def init_memory(self, robot, k):
        team = self.team_of(robot)
        return self._agent(team).init_memory(robot % self.team_size, self.team_k(team, k))

    def act(self, obs, mem, board):
        team = self.team_of(obs.robot)
        board = board if board is not None else {}
        tb = board.setdefault(team, _TeamBoard())
        inner_obs = Observation(
            robot=obs.robot % self.team_size,
            k=self.team_k(team, obs.k),
            round=obs.round,
            position=obs.position,
            parent=obs.parent,
            children=obs.children,
            explored=frozenset(tb.explored),
        )
        dec = self._agent(team).act(inner_obs, mem, tb.inner)
        tb.inner = dec.board
        if dec.destination in obs.children:
            tb.explored.add(dec.destination)
        if dec.info is not None:
            dec.info["team"] = team
        dec.board = board
        return dec


# ----- extraction of the layered instance -----


class ExtractionError(RuntimeError):
    pass


@dataclass
class Extraction:
    instance: LgtInstance
    targets: list  # v^h for h = 1..len(targets)
    chain: list  # distinct targets in election order

    def target_movement(self) -> int:
        return sum(tree_distance(a, b) for a, b in zip(self.targets, self.targets[1:]))


def extract_instance(boards: dict) -> Extraction:
    """Rebuild the layered instance and target sequence from DACTE registers.

    ``boards`` maps nodes to NodeRegisters.  Follows the v_next chain from the
    root; the deepest synchronised target holds the whole prefix.
    """
    chain, targets = [], []
    u = ROOT
    last = None
    seen = set()
    while u is not None:
        if u in seen:
            raise ExtractionError(f"target {format_node(u)} elected twice")
        seen.add(u)
        chain.append(u)
        b = boards.get(u)
        if b is None or b.h is None:
            break
        if last is not None and b.layers[: len(last.layers)] != last.layers[: len(b.layers)]:
            raise ExtractionError(f"register prefix mismatch at {format_node(u)}")
        expected = (last.h + 1) if last is not None else 1
        if b.h_first != expected:
            raise ExtractionError(
                f"target {format_node(u)} starts at index {b.h_first}, expected {expected}"
            )
        targets.extend([u] * (b.h - b.h_first + 1))
        last = b
        u = b.v_next
    if last is None:
        return Extraction(LgtInstance((frozenset({ROOT}),)), [ROOT], [ROOT])
    layers = list(last.layers)
    if last.layer_next and last.v_next is not None:
        layers.append(last.layer_next)
        targets.append(last.v_next)
    if len(layers) != len(targets):
        raise ExtractionError("layer and target counts disagree")
    return Extraction(LgtInstance(tuple(layers)), targets, chain)
