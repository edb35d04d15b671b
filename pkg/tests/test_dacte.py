import pytest

from ctexplore.baselines import DfsFollowerAgent, GreedySplitAgent
from ctexplore.dacte import DacteAgent, ExtractionError, NodeRegisters, TeamSplitAgent, extract_instance
from ctexplore.generators import binary, comb_tree, path, random_tree, spider, star
from ctexplore.lgt import make_traverser, run_traverser, traversal_cost, validate_instance
from ctexplore.sim import SimState, make_adversary, run, step
from ctexplore.trees import ROOT, ExplorationTree, tree_distance

ADVERSARIES = ["round_robin", "seeded_random", "starver", "laggard"]
TREES = [path(12), star(5, 2), binary(4), comb_tree(6), spider(4, 7), random_tree(90, seed=2)]


def teams_of(agent, state):
    if isinstance(agent, DacteAgent):
        return [(state.k, state.whiteboards)]
    out = []
    for t in range(agent.team_count(state.k)):
        regs = {u: b[t].inner for u, b in state.whiteboards.items() if t in b and b[t].inner}
        out.append((agent.team_k(t, state.k), regs))
    return out


def test_single_robot_on_a_path_walks_straight_down():
    out = run(path(6), DacteAgent(), make_adversary("round_robin"), k=1)
    assert out.completed and out.moves_used == 5
    assert {m.rule for m in out.trace} == {"R1"}


def test_single_robot_hand_trace_on_a_star():
    out = run(star(2), DacteAgent(), make_adversary("round_robin"), k=1)
    assert [(m.src, m.dst, m.rule) for m in out.trace] == [
        (ROOT, (0,), "R1"),
        ((0,), ROOT, "R2"),
        (ROOT, (1,), "R1"),
    ]


def test_star_with_robot_per_arm():
    out = run(star(3), DacteAgent(), make_adversary("round_robin"), k=3)
    assert out.completed
    first = out.trace[:3]
    assert [m.dst for m in first] == [(0,), (1,), (2,)]
    assert all(m.rule == "R1" for m in first)


@pytest.mark.parametrize("tree", TREES, ids=lambda t: f"n{t.n}")
@pytest.mark.parametrize("adv", ADVERSARIES)
@pytest.mark.parametrize("k", [1, 3])
def test_bound_width_and_lazy_targets(tree, adv, k):
    agent = DacteAgent()
    out = run(tree, agent, make_adversary(adv, 5), k=k)
    assert out.completed
    ex = extract_instance(out.state.whiteboards)
    validate_instance(ex.instance)
    assert ex.instance.width <= k
    assert out.moves_used <= 2 * (tree.n - 1) + k * ex.target_movement()
    # targets coincide with a fresh lazy traverser run on the extracted instance
    assert run_traverser(ex.instance, make_traverser("work-function")) == ex.targets
    assert ex.target_movement() == traversal_cost(ex.instance, ex.targets)


def test_single_robot_extracts_a_width_one_instance():
    out = run(random_tree(150, seed=9), DacteAgent(), make_adversary("round_robin"), k=1)
    ex = extract_instance(out.state.whiteboards)
    assert ex.instance.width == 1
    assert all(len(l) == 1 for l in ex.instance.layers)


def test_extraction_detects_broken_chains():
    boards = {
        ROOT: NodeRegisters(h=1, h_first=1, layers=(frozenset({ROOT}),), v_next=(0,),
                            layer_next=frozenset({(0,)})),
        (0,): NodeRegisters(h=3, h_first=3, layers=(frozenset({ROOT}), frozenset({(0,)}))),
    }
    with pytest.raises(ExtractionError):
        extract_instance(boards)
    assert extract_instance({}).targets == [ROOT]


@pytest.mark.parametrize("size", [1, 2, 3])
def test_team_split_bound(size):
    tree, k = random_tree(120, seed=4), 5
    agent = TeamSplitAgent(lambda: DacteAgent(), size)
    out = run(tree, agent, make_adversary("seeded_random", 3), k=k)
    assert out.completed
    bound = 0
    for team_k, regs in teams_of(agent, out.state):
        ex = extract_instance(regs)
        assert ex.instance.width <= team_k
        bound += 2 * (tree.n - 1) + team_k * ex.target_movement()
    assert out.moves_used <= bound


def test_team_split_rejects_empty_teams():
    with pytest.raises(ValueError):
        TeamSplitAgent(DacteAgent, 0)


@pytest.mark.parametrize("tree", TREES, ids=lambda t: f"n{t.n}")
@pytest.mark.parametrize("k", [1, 2, 4])
def test_dfs_follower_within_twice_k_edges(tree, k):
    for adv in ADVERSARIES:
        out = run(tree, DfsFollowerAgent(), make_adversary(adv, 1), k=k)
        assert out.completed
        assert out.moves_used <= 2 * k * (tree.n - 1)


def test_greedy_split_stalls_atop_finished_subtree():
    # /0/0 is a leaf branch, /1 a long path; two robots reach /0/0 together
    tree = ExplorationTree.from_nodes([(), (0,), (0, 0)] + [(1,) + (0,) * j for j in range(8)])
    agent = GreedySplitAgent()
    state = SimState.initial(tree, agent, 3)
    for r in range(9):
        step(state, agent, r % 3)
    assert state.positions[0] == state.positions[2] == (0, 0)
    starver = make_adversary("starver")
    step(state, agent, starver(state))  # robot 0 arrived unactivated; this visits /0/0
    snapshot = (set(state.visited), set(state.explored_edges), state.move_count)
    for _ in range(10**4):
        step(state, agent, starver(state))
    assert (set(state.visited), set(state.explored_edges), state.move_count) == snapshot
    assert not state.complete


@pytest.mark.parametrize("k", [2, 4, 8])
def test_serializer_forces_greedy_to_half_kn_on_comb(k):
    tree = comb_tree(30)
    out = run(tree, GreedySplitAgent(), make_adversary("serializer"), k=k)
    assert out.completed
    assert 2 * out.moves_used >= k * tree.n


def test_targets_move_along_tree_paths():
    out = run(comb_tree(8), DacteAgent("nearest"), make_adversary("laggard"), k=4)
    ex = extract_instance(out.state.whiteboards)
    legs = [tree_distance(a, b) for a, b in zip(ex.targets, ex.targets[1:])]
    assert sum(legs) == ex.target_movement()
    assert ex.targets[0] == ROOT
