"""Baseline agents: depth-first search with followers, and greedy splitting."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .sim import Decision, Observation


@dataclass(frozen=True)
class TrailMemory:
    index: int = 0  # position of the robot along the leader's walk


class DfsFollowerAgent:
    """All robots walk the same depth-first trail.

    The whiteboard at a node records, for each trail index at which the trail
    passed there, the next node of the trail.  A robot finding its index on
    the board is a follower and copies the step; otherwise it is the robot
    with the most moves so far, and it extends the trail depth-first.
    """

    name = "dfs-follower"

    def init_memory(self, robot, k):
        return TrailMemory()

    def act(self, obs: Observation, mem: TrailMemory, board):
        board = board if board is not None else {}
        nxt = board.get(mem.index)
        if nxt is None:
            unexplored = obs.unexplored
            if unexplored:
                nxt, rule = unexplored[0], "R1"
            elif obs.parent is not None:
                nxt, rule = obs.parent, "R2"
            else:
                return Decision(obs.position, "none", mem, board, finished=True)
            board[mem.index] = nxt
        else:
            rule = "R2"
        return Decision(nxt, rule, TrailMemory(mem.index + 1), board)


@dataclass(frozen=True)
class GroupMemory:
    group: frozenset
    pending: tuple | None = None  # (child we came up from,) awaiting write-back


@dataclass
class GroupBoard:
    below: dict = field(default_factory=dict)  # child -> robots currently below it
    done: set = field(default_factory=set)  # children whose subtree is finished
    votes: dict = field(default_factory=dict)  # group -> robots that voted
    plans: dict = field(default_factory=dict)  # group -> {robot: destination}
    remaining: dict = field(default_factory=dict)  # group -> robots yet to leave


class GreedySplitAgent:
    """Greedy exploration that splits co-located robots evenly among the
    unfinished subtrees and climbs only from a finished subtree.

    Robots travel in groups.  A group decides at a node once every member has
    been activated there; until then activated members wait.  This is the
    asynchronous emulation of the synchronous algorithm in which robots
    moving away from one node coordinate.
    """

    name = "greedy-split"

    def init_memory(self, robot, k):
        return GroupMemory(frozenset(range(k)))

    def act(self, obs: Observation, mem: GroupMemory, board):
        i, u = obs.robot, obs.position
        board = board if board is not None else GroupBoard()
        if mem.pending is not None:
            (c,) = mem.pending
            board.below[c] -= 1
            board.done.add(c)
            mem = replace(mem, pending=None)
        g = mem.group
        if g not in board.plans:
            votes = board.votes.setdefault(g, set())
            votes.add(i)
            if votes != set(g):
                return Decision(u, "none", mem, board)
            del board.votes[g]
            plan = self._plan(obs, g, board)
            if plan is None:
                finished = obs.parent is None and not any(board.below.values())
                return Decision(u, "none", mem, board, finished=finished)
            board.plans[g] = plan
            board.remaining[g] = set(g)
        plan = board.plans[g]
        dest = plan[i]
        sub = frozenset(r for r, d in plan.items() if d == dest)
        board.remaining[g].discard(i)
        if not board.remaining[g]:
            del board.plans[g], board.remaining[g]
        if dest == obs.parent:
            return Decision(dest, "R2", GroupMemory(sub, pending=(u,)), board)
        board.below[dest] = board.below.get(dest, 0) + 1
        rule = "R1" if dest not in obs.explored else "R2"
        return Decision(dest, rule, GroupMemory(sub), board)

    @staticmethod
    def _plan(obs, g, board):
        unfinished = [c for c in obs.children if c not in obs.explored or c not in board.done]
        members = sorted(g)
        if unfinished:
            # emptiest subtrees first, then port order
            order = sorted(unfinished, key=lambda c: (board.below.get(c, 0), c))
            return {r: order[j % len(order)] for j, r in enumerate(members)}
        if obs.parent is not None and not any(board.below.get(c, 0) for c in obs.children):
            return {r: obs.parent for r in members}
        return None
