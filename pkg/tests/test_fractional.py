import math
import random
from collections import Counter
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from ctexplore.dacte import DacteAgent
from ctexplore.fractional import (
    PhaseStall,
    acte_to_fractional,
    apply_shift,
    certify_instance,
    delta_for_layer,
    delta_of,
    fractional_costs,
    grid_minimum,
    max_product,
    mean_depth,
    potential_D,
    product_bound_check,
    random_dfs_hit,
    run_z,
    shift_panel,
    synthetic_trace,
    verify_certificates,
    z_objective,
    z_step,
)
from ctexplore.generators import random_instance
from ctexplore.lgt import ElementaryUpdate, LgtInstance, parse_instance
from ctexplore.trees import (
    ROOT,
    active_tree,
    configuration_from_leaves,
    in_layer_polytope,
    leaf_masses,
    ot_distance,
    ot_up,
    point_mass,
    validate_configuration,
)


def random_config(rng, layer, grain=12):
    leaves = sorted(layer)
    own = Counter(rng.choice(leaves) for _ in range(grain))
    return configuration_from_leaves({l: F(c, grain) for l, c in own.items()})


def random_step(seed, width=3, depth=5):
    """(z_prev, x, delta, layer) for one step of a random instance."""
    rng = random.Random(seed)
    inst = random_instance(seed, max_width=width, max_depth=depth)
    t = rng.randrange(1, len(inst.layers))
    return random_config(rng, inst.layers[t - 1]), random_config(rng, inst.layers[t]), \
        delta_of(inst, t), inst.layers[t]


# ----- delta -----


def test_delta_examples():
    assert delta_for_layer({ROOT}) == {ROOT: 1}
    d = delta_for_layer({(0,), (1, 0), (1, 1)})
    assert leaf_masses(d) == {(0,): F(1, 2), (1, 0): F(1, 4), (1, 1): F(1, 4)}
    d = delta_for_layer({(0, 0, 0), (1,), (2,)})
    assert d[(0, 0, 0)] == d[(0,)] == F(1, 3)
    with pytest.raises(ValueError):
        delta_for_layer(set())


@given(st.integers(0, 10**6), st.integers(1, 6))
def test_delta_is_a_layer_configuration(seed, w):
    inst = random_instance(seed, max_width=w, max_depth=6)
    for layer in inst.layers:
        d = delta_for_layer(layer)
        validate_configuration(d)
        assert in_layer_polytope(d, layer)
        assert sum(leaf_masses(d).values()) == 1
        assert min(leaf_masses(d).values()) >= F(1, 2 ** (w - 1))


def test_delta_matches_dfs_hit_frequencies():
    layer = {(0, 0), (0, 1), (0, 2), (1,), (2, 1, 0)}
    d = leaf_masses(delta_for_layer(layer))
    rng, N = random.Random(3), 20000
    hits = Counter(random_dfs_hit(layer, rng) for _ in range(N))
    for leaf, p in d.items():
        sigma = math.sqrt(N * p * (1 - p))
        assert abs(hits[leaf] - N * p) <= 3 * sigma


# ----- potential and the step optimiser -----


def test_potential_examples():
    delta = delta_for_layer({(0,), (1,)})
    x = configuration_from_leaves({(0,): F(1, 2), (1,): F(1, 2)})
    # at z = x every node has z + delta - 2x = delta - x = 0
    assert potential_D(delta, x, x) == 0
    z = point_mass((0,))
    assert potential_D(delta, x, z) == F(1, 2)
    assert z_objective(x, x, delta, z) == (F(1, 2) + F(1, 2), F(1, 2))


def test_z_step_tie_break_prefers_upward_movement():
    # z = x and z = 2x - delta both score 1/6; the tie goes to the one
    # that moves mass up out of /0
    layer = {(0,), (1,)}
    x = configuration_from_leaves({(0,): F(1, 3), (1,): F(2, 3)})
    z = z_step(x, x, delta_for_layer(layer), layer)
    assert leaf_masses(z) == {(0,): F(1, 6), (1,): F(5, 6)}
    assert z_objective(x, x, delta_for_layer(layer), z) == (F(1, 6), F(1, 6))


def test_z_step_after_a_deletion():
    layer = {(1,)}
    prev = configuration_from_leaves({(0,): F(1, 2), (1,): F(1, 2)})
    z = z_step(prev, point_mass((1,)), delta_for_layer(layer), layer)
    assert z == point_mass((1,))


def test_z_step_rejects_empty_layer():
    with pytest.raises(ValueError):
        z_step(point_mass(ROOT), point_mass(ROOT), {ROOT: 1}, set())


def test_z_step_matches_grid_oracle():
    for seed in range(150):
        z_prev, x, delta, layer = random_step(seed)
        z = z_step(z_prev, x, delta, layer)
        assert in_layer_polytope(z, layer)
        val, up = z_objective(z_prev, x, delta, z)
        best_val, best_up, _ = grid_minimum(z_prev, x, delta, layer, 12)
        assert val == best_val
        assert up >= best_up


def lp_two_stage(z_prev, x, delta, layer):
    """Float oracle: the step as two linear programs with positive-part
    variables.  Returns (optimum, largest upward movement among optima)."""
    tree = sorted(active_tree(layer))
    idx = {u: i for i, u in enumerate(tree)}
    n = len(tree)
    outside = set(z_prev) | set(x) | set(delta)
    const = 0.0
    for u in outside - set(tree):
        const += max(float(z_prev.get(u, 0)), 0) + max(float(delta.get(u, 0) - 2 * x.get(u, 0)), 0)
    # variables: z (n), p (n) >= z_prev - z, q (n) >= z + delta - 2x
    A_ub, b_ub = [], []
    for u, i in idx.items():
        row = np.zeros(3 * n); row[i] = -1; row[n + i] = -1
        A_ub.append(row); b_ub.append(-float(z_prev.get(u, 0)))
        row = np.zeros(3 * n); row[i] = 1; row[2 * n + i] = -1
        A_ub.append(row); b_ub.append(float(2 * x.get(u, 0) - delta.get(u, 0)))
    A_eq, b_eq = [], []
    row = np.zeros(3 * n); row[idx[ROOT]] = 1
    A_eq.append(row); b_eq.append(1.0)
    for u, i in idx.items():
        if u in layer:
            continue
        row = np.zeros(3 * n); row[i] = 1
        for c in tree:
            if c and c[:-1] == u:
                row[idx[c]] = -1
        A_eq.append(row); b_eq.append(0.0)
    bounds = [(0, None)] * (3 * n)
    cost = np.r_[np.zeros(n), np.ones(2 * n)]
    first = linprog(cost, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=np.array(A_eq), b_eq=b_eq, bounds=bounds)
    opt = first.fun
    # among optima, minimise the potential part, i.e. maximise upward movement
    A2 = np.vstack([A_ub, cost]); b2 = b_ub + [opt + 1e-9]
    second = linprog(np.r_[np.zeros(2 * n), np.ones(n)], A_ub=A2, b_ub=b2,
                     A_eq=np.array(A_eq), b_eq=b_eq, bounds=bounds)
    return opt + const, opt - second.fun + const_up(z_prev, tree)


def const_up(z_prev, tree):
    return sum(float(m) for u, m in z_prev.items() if u not in set(tree))


def test_z_step_matches_two_stage_lp():
    for seed in range(60):
        z_prev, x, delta, layer = random_step(seed, width=4, depth=6)
        z = z_step(z_prev, x, delta, layer)
        val, up = z_objective(z_prev, x, delta, z)
        lp_val, lp_up = lp_two_stage(z_prev, x, delta, layer)
        assert float(val) == pytest.approx(lp_val, abs=1e-7)
        assert float(up) >= lp_up - 1e-7


# ----- traces and certificates -----


def test_synthetic_traces_live_on_layers():
    inst = random_instance(7, max_width=4, max_depth=5)
    for lazy in (True, False):
        xs = synthetic_trace(inst, 7, grain=12, lazy=lazy).configs
        assert len(xs) == len(inst.layers)
        for x, layer in zip(xs, inst.layers):
            assert in_layer_polytope(x, layer)
            assert all((m * 12).denominator == 1 for m in x.values())


def test_costs_of_a_simple_trace():
    xs = [point_mass(ROOT), point_mass((0,)), point_mass((0, 0)), point_mass((1,))]
    assert fractional_costs(xs) == {"cost": 5, "up": 2, "down": 3}
    assert mean_depth(configuration_from_leaves({(0,): F(1, 2), (1, 0): F(1, 2)})) == F(3, 2)


def test_reduction_puts_every_robot_on_each_layer():
    inst = random_instance(11, max_width=3, max_depth=5)
    run = acte_to_fractional(DacteAgent(), inst, 3)
    assert len(run.trace) == len(inst.layers)
    for t, x in enumerate(run.trace.configs):
        assert in_layer_polytope(x, inst.layers[t])
        assert all((m * 3).denominator == 1 for m in x.values())
    assert sum(run.phase_moves) == run.state.move_count
    assert run.phase_moves[0] == 0


def test_reduction_rejects_rootless_start_and_stalls_on_tiny_budget():
    inst = LgtInstance((frozenset({(0,)}), frozenset({(0, 0)})))
    with pytest.raises(ValueError):
        acte_to_fractional(DacteAgent(), inst, 2)
    deep = LgtInstance.from_updates([ElementaryUpdate("fork", (0,) * d, ((0,) * (d + 1),)) for d in range(5)])
    with pytest.raises(PhaseStall):
        acte_to_fractional(DacteAgent(), deep, 2, phase_budget=0)


def test_shift_panel_moves_mass_between_leaves():
    layer = {(0, 0), (1,)}
    z = configuration_from_leaves({(0, 0): F(1, 2), (1,): F(1, 2)})
    shifts = list(shift_panel(z, layer))
    assert len(shifts) == 6
    for src, dst, eps, changes in shifts:
        z2 = apply_shift(z, changes)
        validate_configuration(z2)
        assert ot_distance(z, z2) == eps * (len(src) + len(dst))


@pytest.mark.parametrize("seed", range(12))
def test_certificates_hold_except_literal_step(seed):
    inst = random_instance(seed, max_width=3, max_depth=5)
    for rep in (certify_instance(inst, seed=seed),
                certify_instance(inst, agent=DacteAgent(), k=3)):
        bad = {v.check for v in rep.violations}
        assert bad <= {"potential-step"}
        for check in ("leaf-domination", "stability", "potential-step-2ot",
                      "upward-cost", "total-cost"):
            assert rep.min_slack[check][0] >= 0


def test_certificates_need_elementary_updates():
    inst = LgtInstance((frozenset({ROOT}), frozenset({(0,)})))
    with pytest.raises(ValueError):
        verify_certificates(inst, [point_mass(ROOT), point_mass((0,))])


COUNTEREXAMPLE = """\
width=3
fork / -> /0,/1
fork /1 -> /1/0,/1/1
fork /1/0 -> /1/0/0
delete /1/0/0
"""


def test_single_transport_per_step_bound_fails_on_a_deletion():
    # x sends 1/4 from the deleted leaf /1/0/0 to /0; z must follow with
    # twice that weight because x enters the potential as 2x
    inst = parse_instance(COUNTEREXAMPLE)
    q = F(1, 4)
    x3 = configuration_from_leaves({(0,): q, (1, 0, 0): q, (1, 1): 2 * q})
    x4 = configuration_from_leaves({(0,): 2 * q, (1, 1): 2 * q})
    z3 = configuration_from_leaves({(1, 0, 0): q, (1, 1): 3 * q})
    d3, d4 = delta_of(inst, 3), delta_of(inst, 4)
    z4 = z_step(z3, x4, d4, inst.layers[4])
    assert leaf_masses(z4) == {(0,): 2 * q, (1, 1): 2 * q}
    lhs = ot_up(z3, z4) + potential_D(d4, x4, z4) - potential_D(d3, x3, z3)
    rest = z3[(1, 0, 0)] + sum(d4.values()) - sum(d3.values())
    moved = ot_distance(x3, x4)
    assert (lhs, moved, rest) == (F(5, 4), 1, 0)
    assert lhs - (moved + rest) == q  # single transport term: violated
    assert lhs <= 2 * moved + rest  # doubled transport term: holds


def test_run_z_starts_at_root():
    inst = random_instance(2, max_width=2, max_depth=4)
    xs = synthetic_trace(inst, 2).configs
    zs = run_z(inst, xs)
    assert zs[0] == point_mass(ROOT)
    assert all(in_layer_polytope(z, l) for z, l in zip(zs, inst.layers))


# ----- product bound -----


def test_max_product_small_values():
    assert [max_product(w) for w in range(6)] == [1, 2, 4, 8, 16, 32]


@pytest.mark.parametrize("w", range(11))
def test_product_bound(w):
    assert product_bound_check(w)


def test_product_bound_range():
    with pytest.raises(ValueError):
        product_bound_check(13)
