"""Scenarios, run artifacts and their on-disk format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import TOOL, __version__
from .baselines import DfsFollowerAgent, GreedySplitAgent
from .dacte import (
    DacteAgent,
    Extraction,
    NodeRegisters,
    RobotMemory,
    TeamSplitAgent,
    extract_instance,
)
from .generators import generate, weighted_run
from .lgt import LgtInstance
from .sim import MoveRecord, ProtocolViolation, make_adversary, run, synchronous_makespan
from .trees import (
    ExplorationTree,
    format_node,
    format_tree,
    parse_node,
    parse_tree,
)

CSV_HEADER = f"# tool={TOOL} version={__version__}"
AGENTS = ("dacte", "dacte-split", "dfs-follower", "greedy-split")

# keys that configure the run; everything else describes the tree
RUN_KEYS = {"agent", "k", "team", "traverser", "gamma", "adversary", "seed", "budget", "tree_file"}


def parse_config(text: str) -> dict:
    """Plain key=value lines; blank lines and # comments are skipped."""
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {line!r}")
        out[key.strip()] = val.strip()
    return out


@dataclass
class Scenario:
    tree_spec: dict = field(default_factory=lambda: {"family": "path", "n": "8"})
    agent: str = "dacte"
    k: int = 2
    team: int | None = None  # team size for dacte-split
    traverser: str = "work-function"
    gamma: float = 2
    adversary: str = "round_robin"
    seed: int = 0
    budget: int | None = None
    tree_file: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = {k: str(v) for k, v in d.items()}
        sc = cls(tree_spec={k: v for k, v in d.items() if k not in RUN_KEYS})
        if "agent" in d:
            sc.agent = d["agent"]
        for key in ("k", "seed"):
            if key in d:
                setattr(sc, key, int(d[key]))
        if d.get("team"):
            sc.team = int(d["team"])
        if d.get("budget"):
            sc.budget = int(d["budget"])
        if "gamma" in d:
            g = float(d["gamma"])
            sc.gamma = int(g) if g.is_integer() else g
        for key in ("traverser", "adversary", "tree_file"):
            if d.get(key):
                setattr(sc, key, d[key])
        if sc.tree_file is None and "family" not in sc.tree_spec:
            raise ValueError("scenario needs a tree family or a tree_file")
        if sc.agent not in AGENTS:
            raise ValueError(f"unknown agent {sc.agent!r}")
        if sc.k < 1:
            raise ValueError("k must be positive")
        return sc

    def to_dict(self) -> dict:
        d = dict(self.tree_spec)
        d.update(agent=self.agent, k=self.k, traverser=self.traverser, gamma=self.gamma,
                 adversary=self.adversary, seed=self.seed)
        if self.team is not None:
            d["team"] = self.team
        if self.budget is not None:
            d["budget"] = self.budget
        if self.tree_file is not None:
            d["tree_file"] = self.tree_file
        return d

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in sorted(self.to_dict().items()))

    def build_tree(self) -> ExplorationTree:
        if self.tree_file is not None:
            return parse_tree(Path(self.tree_file).read_text())
        spec = dict(self.tree_spec)
        spec.setdefault("seed", self.seed)
        return generate(spec)

    def build_agent(self):
        if self.agent == "dacte":
            return DacteAgent(self.traverser, self.gamma)
        if self.agent == "dacte-split":
            size = self.team or default_team_size(self.k)
            return TeamSplitAgent(lambda: DacteAgent(self.traverser, self.gamma), size)
        if self.agent == "dfs-follower":
            return DfsFollowerAgent()
        return GreedySplitAgent()


def default_team_size(k: int) -> int:
    """ceil(ln k), at least 1."""
    return max(1, math.ceil(math.log(k))) if k > 1 else 1


# ----- artifacts -----


@dataclass
class TeamRecord:
    """What one DACTE team left behind: frozen registers and extraction."""

    team: int
    k: int
    registers: dict  # node -> NodeRegisters
    memories: dict  # robot id -> RobotMemory
    extraction: Extraction | None = None
    extraction_error: str | None = None

    @property
    def target_movement(self) -> int:
        return self.extraction.target_movement() if self.extraction else 0

    def bound(self, n: int) -> int:
        return 2 * (n - 1) + self.k * self.target_movement


@dataclass
class Artifact:
    scenario: Scenario
    tree: ExplorationTree
    moves: list  # MoveRecord
    events: list  # (t, robot, info dict) with nodes already in text form
    teams: list  # TeamRecord, empty for baselines
    completed: bool
    moves_used: int
    rounds: int
    error: str | None = None
    makespan: int | None = None  # synchronous time steps, completed runs only

    @property
    def bound(self) -> int | None:
        if not self.teams:
            return None
        return sum(team.bound(self.tree.n) for team in self.teams)

    def summary(self) -> str:
        bound = "-" if self.bound is None else str(self.bound)
        line = (
            f"n={self.tree.n} D={self.tree.depth} k={self.scenario.k} "
            f"moves={self.moves_used} bound={bound} completed={str(self.completed).lower()}"
        )
        return line + (f" error={self.error}" if self.error else "")

    # -- disk format --

    def write(self, out: Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scenario.txt").write_text(self.scenario.to_text())
        (out / "tree.txt").write_text(format_tree(self.tree))
        rows = [CSV_HEADER, "t,robot,from,to,rule"] + [m.csv_row() for m in self.moves]
        (out / "moves.csv").write_text("\n".join(rows) + "\n")
        with open(out / "events.jsonl", "w") as fh:
            for t, robot, info in self.events:
                fh.write(json.dumps({"t": t, "robot": robot, **info}, sort_keys=True) + "\n")
        teams = [_dump_team(team) for team in self.teams]
        (out / "registers.json").write_text(json.dumps(teams, sort_keys=True, indent=1) + "\n")
        meta = {"completed": self.completed, "moves_used": self.moves_used,
                "rounds": self.rounds, "error": self.error, "makespan": self.makespan}
        (out / "outcome.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
        (out / "summary.txt").write_text(self.summary() + "\n")
        for team in self.teams:
            if team.extraction is not None:
                ex = team.extraction
                (out / f"instance-{team.team}.txt").write_text(layers_text(ex.instance, ex.targets))

    @classmethod
    def read(cls, path: Path) -> "Artifact":
        path = Path(path)
        scenario = Scenario.from_dict(parse_config((path / "scenario.txt").read_text()))
        tree = parse_tree((path / "tree.txt").read_text())
        moves = []
        for line in (path / "moves.csv").read_text().splitlines():
            if not line or line.startswith("#") or line.startswith("t,"):
                continue
            t, robot, src, dst, rule = line.split(",")
            moves.append(MoveRecord(int(t), int(robot), parse_node(src), parse_node(dst), rule))
        events = []
        for line in (path / "events.jsonl").read_text().splitlines():
            rec = json.loads(line)
            t, robot = rec.pop("t"), rec.pop("robot")
            events.append((t, robot, rec))
        teams = [_load_team(d) for d in json.loads((path / "registers.json").read_text())]
        meta = json.loads((path / "outcome.json").read_text())
        return cls(scenario, tree, moves, events, teams, meta["completed"], meta["moves_used"],
                   meta["rounds"], meta.get("error"), meta.get("makespan"))


def _nodes(layer) -> list:
    return [format_node(u) for u in sorted(layer)]


def _dump_team(team: TeamRecord) -> dict:
    regs = {}
    for u, b in sorted(team.registers.items()):
        regs[format_node(u)] = {
            "h": b.h,
            "h_first": b.h_first,
            "layers": [_nodes(l) for l in b.layers],
            "v_next": None if b.v_next is None else format_node(b.v_next),
            "layer_next": None if b.layer_next is None else _nodes(b.layer_next),
            "finished": b.finished,
        }
    mems = {}
    for r, m in sorted(team.memories.items()):
        mems[str(r)] = {
            "p": format_node(m.p),
            "v": format_node(m.v),
            "c": None if m.c is None else format_node(m.c),
            "h": m.h,
            "layers": [_nodes(l) for l in m.layers],
        }
    return {"team": team.team, "k": team.k, "registers": regs, "memories": mems}


def _layer(nodes) -> frozenset:
    return frozenset(parse_node(s) for s in nodes)


def _load_team(d: dict) -> TeamRecord:
    regs = {}
    for key, r in d["registers"].items():
        regs[parse_node(key)] = NodeRegisters(
            h=r["h"],
            h_first=r["h_first"],
            layers=tuple(_layer(l) for l in r["layers"]),
            v_next=None if r["v_next"] is None else parse_node(r["v_next"]),
            layer_next=None if r["layer_next"] is None else _layer(r["layer_next"]),
            finished=r["finished"],
        )
    mems = {}
    for key, m in d["memories"].items():
        mems[int(key)] = RobotMemory(
            p=parse_node(m["p"]),
            v=parse_node(m["v"]),
            c=None if m["c"] is None else parse_node(m["c"]),
            h=m["h"],
            layers=tuple(_layer(l) for l in m["layers"]),
        )
    team = TeamRecord(d["team"], d["k"], regs, mems)
    _extract(team)
    return team


def _extract(team: TeamRecord) -> None:
    try:
        team.extraction = extract_instance(team.registers)
    except Exception as exc:  # reported by the audit
        team.extraction_error = str(exc)


def _text_info(info: dict) -> dict:
    out = {}
    for key, val in info.items():
        if key in ("target_before", "target_after"):
            out[key] = format_node(val)
        elif key == "layers":
            out[key] = [[h, [format_node(u) for u in nodes]] for h, nodes in val]
        else:
            out[key] = val
    return out


def _collect_teams(agent, state) -> list:
    """Per-team registers and memories of a finished DACTE run."""
    if isinstance(agent, DacteAgent):
        regs = {u: b for u, b in state.whiteboards.items() if isinstance(b, NodeRegisters)}
        team = TeamRecord(0, state.k, regs, dict(enumerate(state.memories)))
        _extract(team)
        return [team]
    if isinstance(agent, TeamSplitAgent):
        out = []
        for t in range(agent.team_count(state.k)):
            regs = {}
            for u, board in state.whiteboards.items():
                tb = board.get(t)
                if tb is not None and tb.inner is not None:
                    regs[u] = tb.inner
            first = t * agent.team_size
            size = agent.team_k(t, state.k)
            mems = {r: state.memories[first + r] for r in range(size)}
            team = TeamRecord(t, size, regs, mems)
            _extract(team)
            out.append(team)
        return out
    return []


def run_scenario(sc: Scenario) -> Artifact:
    """Execute a scenario; protocol violations are recorded, not raised."""
    tree = sc.build_tree()
    agent = sc.build_agent()
    adversary = make_adversary(sc.adversary, sc.seed)
    error = None
    try:
        outcome = run(tree, agent, adversary, sc.k, sc.budget)
        state = outcome.state
    except ProtocolViolation as exc:
        error = f"protocol: {exc}"
        state = None
    if state is None:
        return Artifact(sc, tree, [], [], [], False, 0, 0, error)
    events = [(t, r, _text_info(info)) for t, r, info in state.info_log]
    makespan = synchronous_makespan(outcome) if outcome.completed else None
    return Artifact(sc, tree, list(state.move_log), events, _collect_teams(agent, state),
                    state.complete, state.move_count, state.round, error, makespan)


def run_weighted_scenario(sc: Scenario, a: int = 1):
    """Weighted variant: the tree's edge weights are honoured via subdivision."""
    tree = sc.build_tree()
    agent = sc.build_agent()
    return weighted_run(tree, agent, make_adversary(sc.adversary, sc.seed), sc.k, a, sc.budget)


def layers_text(inst: LgtInstance, targets) -> str:
    lines = [f"# {len(inst.layers)} layers, width {inst.width}"]
    for h, (layer, v) in enumerate(zip(inst.layers, targets), start=1):
        lines.append(f"{h} target={format_node(v)} layer=" + " ".join(_nodes(layer)))
    return "\n".join(lines) + "\n"
