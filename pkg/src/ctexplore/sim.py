"""Asynchronous exploration arena: robots, whiteboards, adversaries.

One round activates one robot.  The robot reads the whiteboard at its node,
observes the adjacent nodes and which child edges are explored, writes the
whiteboard and its memory, then moves to one neighbour.  Agents never see
the hidden tree beyond that observation.
"""
from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from .trees import ROOT, ExplorationTree, PortPath, format_node


class ProtocolViolation(RuntimeError):
    pass


class AdversaryError(RuntimeError):
    pass


@dataclass(frozen=True)
class Observation:
    robot: int
    k: int
    round: int
    position: PortPath
    parent: PortPath | None
    children: tuple
    explored: frozenset  # children whose edge from ``position`` is explored

    @property
    def unexplored(self) -> list:
        return [c for c in self.children if c not in self.explored]


@dataclass
class Decision:
    destination: PortPath
    rule: str = "none"  # "R1" | "R2" | "none"
    memory: Any = None
    board: Any = None
    finished: bool = False
    info: dict | None = None  # free-form audit payload recorded by the arena


class Agent(Protocol):
    name: str

    def init_memory(self, robot: int, k: int) -> Any: ...

    def act(self, obs: Observation, memory: Any, board: Any) -> Decision: ...


@dataclass(frozen=True)
class MoveRecord:
    t: int
    robot: int
    src: PortPath
    dst: PortPath
    rule: str

    def csv_row(self) -> str:
        return f"{self.t},{self.robot},{format_node(self.src)},{format_node(self.dst)},{self.rule}"


@dataclass
class SimState:
    tree: ExplorationTree
    k: int
    positions: list
    memories: list
    whiteboards: dict = field(default_factory=dict)
    visited: set = field(default_factory=set)
    explored_edges: set = field(default_factory=set)
    move_count: int = 0
    round: int = 0
    move_log: list = field(default_factory=list)
    info_log: list = field(default_factory=list)
    last_rule: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    finished_signal: bool = False
    agent: Any = None  # the algorithm, visible to omniscient adversaries

    @classmethod
    def initial(cls, tree, agent, k):
        return cls(
            tree=tree,
            k=k,
            agent=agent,
            positions=[ROOT] * k,
            memories=[agent.init_memory(i, k) for i in range(k)],
            last_rule=[None] * k,
            activations=[0] * k,
        )

    @property
    def complete(self) -> bool:
        return len(self.visited) == self.tree.n

    def peek(self, robot) -> Decision:
        """The decision ``robot`` would take if activated now, computed on
        copies so the state is left untouched."""
        u = self.positions[robot]
        return self.agent.act(
            self.observe(robot),
            copy.deepcopy(self.memories[robot]),
            copy.deepcopy(self.whiteboards.get(u)),
        )

    def observe(self, robot) -> Observation:
        u = self.positions[robot]
        kids = self.tree.children(u)
        return Observation(
            robot=robot,
            k=self.k,
            round=self.round,
            position=u,
            parent=u[:-1] if u else None,
            children=kids,
            explored=frozenset(c for c in kids if (u, c) in self.explored_edges),
        )


def step(state: SimState, agent: Agent, robot: int, stop_when_complete=True) -> SimState:
    """Activate ``robot`` for one round (mutates and returns ``state``).

    Once every node is visited the round is a no-op, unless
    ``stop_when_complete`` is False.
    """
    if not 0 <= robot < state.k:
        raise AdversaryError(f"invalid robot id {robot!r}")
    u = state.positions[robot]
    state.visited.add(u)
    state.activations[robot] += 1
    t = state.round
    state.round += 1
    if stop_when_complete and state.complete:
        return state
    obs = state.observe(robot)
    dec = agent.act(obs, state.memories[robot], state.whiteboards.get(u))
    state.memories[robot] = dec.memory
    if dec.board is not None:
        state.whiteboards[u] = dec.board
    if dec.info is not None:
        state.info_log.append((t, robot, dec.info))
    v = dec.destination
    state.last_rule[robot] = dec.rule
    if dec.finished:
        state.finished_signal = True
    if v == u:
        if dec.rule != "none":
            raise ProtocolViolation(f"round {t}: robot {robot} stays put under rule {dec.rule}")
        state.move_log.append(MoveRecord(t, robot, u, u, "none"))
        return state
    if v not in obs.children and v != obs.parent:
        raise ProtocolViolation(
            f"round {t}: robot {robot} at {format_node(u)} asked for non-adjacent {format_node(v)}"
        )
    if v in obs.children:
        state.explored_edges.add((u, v))
    state.positions[robot] = v
    state.move_count += 1
    state.move_log.append(MoveRecord(t, robot, u, v, dec.rule))
    return state


@dataclass
class ExplorationOutcome:
    state: SimState
    moves_used: int
    rounds: int
    completed: bool

    @property
    def trace(self) -> list:
        return self.state.move_log

    @property
    def k(self):
        return self.state.k


def default_budget(n: int, k: int) -> int:
    return 10 * (2 * n + k * n)


def run(tree, agent, adversary, k=1, budget=None) -> ExplorationOutcome:
    """Query the adversary and step until every node is visited or ``budget``
    rounds have been spent."""
    if budget is None:
        budget = default_budget(tree.n, k)
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    state = SimState.initial(tree, agent, k)
    while not state.complete and state.round < budget:
        step(state, agent, adversary(state))
    return ExplorationOutcome(state, state.move_count, state.round, state.complete)


def synchronous_makespan(outcome: ExplorationOutcome) -> int:
    if not outcome.completed:
        raise ValueError("makespan is only defined for completed runs")
    return math.ceil(outcome.moves_used / outcome.k)


# ----- adversaries -----
# Each adversary is a callable of the full (omniscient) state returning a robot id.


class RoundRobin:
    name = "round_robin"

    def __call__(self, state):
        return state.round % state.k


class SeededRandom:
    name = "seeded_random"

    def __init__(self, seed=0):
        self.seed = int(seed) & (2**64 - 1)

    def __call__(self, state):
        return random.Random(f"{self.seed}:{state.round}").randrange(state.k)


class Starver:
    """Feed a single victim robot forever; other robots never move."""

    name = "starver"

    def __init__(self, victim=0):
        self.victim = victim

    def __call__(self, state):
        return self.victim % state.k


class Laggard:
    """Round robin over all robots but one, which only moves once every
    ``period`` rounds and so trails the others along the target sequence."""

    name = "laggard"

    def __init__(self, period=None):
        self.period = period

    def __call__(self, state):
        k = state.k
        if k == 1:
            return 0
        period = self.period or 4 * k
        lag = k - 1
        if state.round % period == period - 1:
            return lag
        return (state.round - state.round // period) % (k - 1)


class SynchronousBatch:
    """Sequential emulation of all robots moving in every time step: each
    batch activates every robot once, co-located robots consecutively."""

    name = "synchronous_batch"

    def __init__(self):
        self._batch = None
        self._order: list = []

    def __call__(self, state):
        b, i = divmod(state.round, state.k)
        if b != self._batch:
            self._batch = b
            self._order = sorted(range(state.k), key=lambda r: (state.positions[r], r))
        return self._order[i]


class BranchSerializer:
    """Comb-tree adversary that forces teeth to be explored one at a time.

    The spine is the port-0 path.  Using the algorithm's would-be decisions,
    it schedules moves in this order: along the spine up to the deepest
    occupied spine node, from the spine into a tooth, inside teeth, waiting,
    and last, pushing deeper along the spine.  Robots thus gather at each
    spine node, the whole tooth team enters before anyone descends, and the
    tooth is finished before anyone goes on.

    A robot whose last activation was a no-op is skipped until some robot
    moves again, since activating it would change nothing.
    """

    name = "serializer"

    def __init__(self):
        self._stalled: dict = {}

    def __call__(self, state):
        if state.move_log:
            last = state.move_log[-1]
            if last.src == last.dst:
                self._stalled[last.robot] = state.move_count
        front = max((len(p) for p in state.positions if not any(p)), default=0)

        def key(r):
            src, dest = state.positions[r], state.peek(r).destination
            if dest == src:
                cls = 3
            elif any(src):
                cls = 2
            elif any(dest):
                cls = 1
            else:
                cls = 0 if len(dest) <= front else 4
            # inside teeth the shallowest robot moves first, keeping teams together
            return (cls, len(src) if cls == 2 else 0, state.activations[r], r)

        live = [r for r in range(state.k) if self._stalled.get(r) != state.move_count]
        return min(live or range(state.k), key=key)


ADVERSARIES: dict[str, Callable] = {
    "round_robin": lambda seed=0: RoundRobin(),
    "seeded_random": lambda seed=0: SeededRandom(seed),
    "starver": lambda seed=0: Starver(),
    "laggard": lambda seed=0: Laggard(),
    "synchronous_batch": lambda seed=0: SynchronousBatch(),
    "serializer": lambda seed=0: BranchSerializer(),
}


def make_adversary(name: str, seed=0):
    try:
        return ADVERSARIES[name](seed)
    except KeyError:
        raise ValueError(f"unknown adversary {name!r}") from None
