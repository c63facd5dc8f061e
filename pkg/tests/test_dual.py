import math

import numpy as np
import pytest

from allelopathy.dual import (DualTree, build_dual_tree, determine_color,
                              distinguished_path, dual_ancestors,
                              ensure_states, favorability_rate_check,
                              lower_trees)
from allelopathy.forward import make_initial, run
from allelopathy.graphical import GraphicalRep, build_events
from allelopathy.lattice import Lattice, Params, build_neighborhood


def rep_from_log(lines, lam1=1.0, lam2=1.0, gamma=0.5, n=6, T=10.0, seed=0):
    p = Params(lambda1=lam1, lambda2=lam2, gamma=gamma, dim=1)
    rep = GraphicalRep.from_log_lines(
        lines, seed=seed, horizon=T, lattice=Lattice((n,)),
        neigh=build_neighborhood(1, "l1", 1), build_rate=max(lam1, lam2),
        dot_rates=(gamma,))
    rep.params = p
    return rep


def random_instance(seed, n=20, T=5.0, equal_rates=False):
    gen = np.random.default_rng(seed)
    lam2 = gen.uniform(0.3, 2.0)
    lam1 = lam2 if equal_rates else gen.uniform(lam2, 2.5)
    gamma = float(np.exp(gen.uniform(np.log(0.05), np.log(5.0))))
    p = Params(lambda1=lam1, lambda2=lam2, gamma=gamma, dim=1)
    lat = Lattice((n,))
    rep = build_events(seed, p, lat, T)
    probs = gen.dirichlet(np.ones(4))
    probs = np.round(probs, 6)
    probs[0] = 1.0 - probs[1:].sum()
    init = "product:" + ",".join(repr(float(v)) for v in probs)
    cfg = make_initial(init, seed, lat)
    return rep, cfg, p, lat, T


# ---------------------------------------------------------------------
# ancestors
# ---------------------------------------------------------------------

def test_ancestors_zero_depth():
    rep, cfg, *_ = random_instance(1)
    assert dual_ancestors(rep, 5, 4.0, 0.0) == [5]


def test_ancestors_quiet_column():
    rep = rep_from_log([], T=10.0)
    assert dual_ancestors(rep, 2, 8.0, 8.0) == [2]


def test_ancestors_cut_by_cross():
    # a death mark strictly inside the window and no arrows above it:
    # no valid dual path remains
    rep = rep_from_log(["5 cross 2"], T=10.0)
    assert dual_ancestors(rep, 2, 8.0, 8.0) == []
    # above the cross the column is still its own ancestor
    assert dual_ancestors(rep, 2, 8.0, 2.0) == [2]


def test_ancestors_order_on_handbuilt_tree():
    # root 0 dies at 8; bounce arrow from 1 at 8.5, later arrow from 4
    # at 9; the subtree of site 1 carries its own feeder from 2 at 4.0
    lines = [
        "8 cross 0",
        "8.5 arrow 1 0 0.9",
        "9 arrow 4 5 0.9",      # unrelated arrow elsewhere
        "9.2 arrow 4 0 0.9",
        "4 arrow 2 1 0.9",
    ]
    rep = rep_from_log(lines)
    anc = dual_ancestors(rep, 0, 10.0, 10.0)
    # depth first: site-1 branch (entered 8.5) before site-4 (9.2);
    # within the branch, the landing precedes the feeder subtree
    assert anc == [1, 2, 4]


def test_hierarchy_head_is_distinguished_walk():
    for seed in (3, 11, 27):
        rep, cfg, p, lat, T = random_instance(seed)
        _, states = run(cfg, rep, [T], record_transitions=True)
        path = distinguished_path(rep, 4, T, states)
        # walk position between consecutive death marks
        positions = [(0.0, 4)]
        for hop, sig in zip(path.hops, path.cross_dual):
            positions.append((hop.dual_time, hop.site))
        end = path.died_at if path.died_at is not None else T
        for s in np.linspace(0.01, float(end) - 0.01, 7):
            site = [q for d, q in positions if d <= s][-1]
            anc = dual_ancestors(rep, 4, T, float(s))
            assert anc[0] == site


# ---------------------------------------------------------------------
# distinguished path
# ---------------------------------------------------------------------

def test_path_without_deaths_lands_at_root():
    rep = rep_from_log(["3 arrow 1 0 0.9"])
    states = ensure_states(rep, np.zeros(6, dtype=np.uint8))
    path = distinguished_path(rep, 0, 10.0, states)
    assert path.hops == [] and path.landing_site == 0
    assert path.visit_count == 0


def test_path_single_bounce_frozen_visit():
    # blue at 1 freezes at t=1; the walk from (0, 5) bounces at the
    # t=3 death mark on 0 across the t=4 arrow into the frozen site
    lines = ["1 cross 1", "3 cross 0", "4 arrow 1 0 0.9"]
    rep = rep_from_log(lines, T=5.0)
    cfg = np.zeros(6, dtype=np.uint8)
    cfg[1] = 1
    states = ensure_states(rep, cfg)
    path = distinguished_path(rep, 0, 5.0, states)
    assert [h.site for h in path.hops] == [1]
    assert path.hops[0].start_frozen and path.visit_count == 1
    assert path.cross_dual == [5.0 - 1.0]
    assert path.died_at == 5.0 - 1.0          # no arrows into 1 below t=1
    assert path.hops[0].dual_time == 1.0      # arrow at t=4


def test_path_dies_when_no_arrow_above_cross():
    rep = rep_from_log(["6 cross 3"])
    states = ensure_states(rep, np.zeros(6, dtype=np.uint8))
    path = distinguished_path(rep, 3, 10.0, states)
    assert path.hops == [] and path.died_at == 4.0


def test_instant_thaw_never_visits_frozen():
    p = Params(lambda1=1.8, lambda2=1.5, gamma=math.inf, dim=1)
    lat = Lattice((20,))
    rep = build_events(5, p, lat, 6.0)
    cfg = make_initial("product:0.0,0.5,0.5,0.0", 5, lat)
    _, states = run(cfg, rep, [6.0], record_transitions=True)
    for x in range(0, 20, 4):
        path = distinguished_path(rep, x, 6.0, states)
        assert path.visit_count == 0


def test_path_invariants_random():
    for seed in range(8):
        rep, cfg, p, lat, T = random_instance(100 + seed, equal_rates=True)
        _, states = run(cfg, rep, [T], record_transitions=True)
        path = distinguished_path(rep, 7, T, states)
        duals = [h.dual_time for h in path.hops]
        assert all(a < b for a, b in zip(duals, duals[1:]))
        for hop, sig in zip(path.hops, path.cross_dual):
            assert sig is None or sig >= hop.dual_time
        # frozen-visit profile is monotone along the walk
        profile = [path.visit_profile(s) for s in np.linspace(0, T, 30)]
        assert all(a <= b for a, b in zip(profile, profile[1:]))


# ---------------------------------------------------------------------
# lower trees
# ---------------------------------------------------------------------

def test_lower_tree_skipped_without_death_mark():
    # the hop's start column has no death mark below: no tree recorded
    lines = ["3 cross 0", "4 arrow 1 0 0.9"]
    rep = rep_from_log(lines, T=5.0)
    states = ensure_states(rep, np.zeros(6, dtype=np.uint8))
    path = distinguished_path(rep, 0, 5.0, states)
    assert path.cross_dual == [None]
    assert lower_trees(rep, path) == []


def test_lower_tree_dies_at_first_cross():
    lines = ["0.5 cross 1", "1 cross 1", "3 cross 0", "4 arrow 1 0 0.9"]
    rep = rep_from_log(lines, T=5.0)
    states = ensure_states(rep, np.zeros(6, dtype=np.uint8))
    path = distinguished_path(rep, 0, 5.0, states)
    trees = lower_trees(rep, path)
    assert len(trees) == 1
    assert not trees[0].survives and not trees[0].favorable


def test_lower_tree_dot_free_flag():
    lines = ["1 cross 1", "2.5 dot 1 0.1", "3 cross 0", "4 arrow 1 0 0.9"]
    rep = rep_from_log(lines, T=5.0)
    states = ensure_states(rep, np.zeros(6, dtype=np.uint8))
    path = distinguished_path(rep, 0, 5.0, states)
    trees = lower_trees(rep, path)
    assert len(trees) == 1
    assert not trees[0].dot_free        # thaw mark inside (1, 4)
    assert trees[0].survives            # no further deaths below t=1
    assert not trees[0].favorable


def test_lower_tree_favorable():
    lines = ["1 cross 1", "3 cross 0", "4 arrow 1 0 0.9"]
    rep = rep_from_log(lines, T=5.0)
    states = ensure_states(rep, np.zeros(6, dtype=np.uint8))
    path = distinguished_path(rep, 0, 5.0, states)
    trees = lower_trees(rep, path)
    assert trees[0].favorable and trees[0].root_site == 1


def test_dot_free_probability_small_gamma():
    # across seeds, the fraction of dot-free lower trees approaches
    # 1/(1+gamma) for small gamma (Exp(1) death wait vs Exp(gamma) dot)
    gamma = 0.1
    p = Params(lambda1=1.8, lambda2=1.8, gamma=gamma, dim=1)
    lat = Lattice((30,))
    free = total = 0
    for seed in range(120):
        rep = build_events(seed, p, lat, 8.0)
        cfg = make_initial("product:0.0,0.6,0.4,0.0", seed, lat)
        _, states = run(cfg, rep, [8.0], record_transitions=True)
        path = distinguished_path(rep, 3, 8.0, states)
        for tree in lower_trees(rep, path):
            total += 1
            free += int(tree.dot_free)
    expect = 1.0 / (1.0 + gamma)
    sigma = math.sqrt(expect * (1 - expect) / total)
    assert total > 100
    assert abs(free / total - expect) < 4 * sigma


def test_favorability_rate_check():
    out = favorability_rate_check(2.0, 1.0, 200_000)
    assert abs(out["empirical"] - 0.5) < 3 * math.sqrt(0.25 / 200_000)
    out = favorability_rate_check(2.0, 0.05, 200_000)
    expect = 1 / 1.05
    assert abs(out["empirical"] - expect) < 3 * math.sqrt(
        expect * (1 - expect) / 200_000)
    out = favorability_rate_check(2.0, 20.0, 200_000)
    assert out["empirical"] < 0.06
    # closed forms reported; the printed expression is reference-only
    # and exceeds 1 at small gamma
    bad = favorability_rate_check(2.0, 0.05, 1000)
    assert bad["printed_expression"] > 1.0
    with pytest.raises(ValueError):
        favorability_rate_check(1.0, 1.0, 10)


# ---------------------------------------------------------------------
# color determination
# ---------------------------------------------------------------------

def test_color_blue_first_ancestor():
    rep = rep_from_log([])
    cfg = np.zeros(6, dtype=np.uint8)
    cfg[2] = 1
    assert determine_color(rep, cfg, 2, 9.0) == 1


def test_color_all_free_no_events():
    rep = rep_from_log([])
    assert determine_color(rep, np.zeros(6, dtype=np.uint8), 1, 9.0) == 0


def test_color_red_blocked_by_frozen_target_then_blue_paints():
    # red ancestor's arrow points at a frozen site (blue died at t=8);
    # its subtree is discarded and the later blue ancestor paints
    lines = ["8 cross 0", "8.5 arrow 1 0 0.7", "9 arrow 4 0 0.7"]
    rep = rep_from_log(lines, T=10.0)
    cfg = np.zeros(6, dtype=np.uint8)
    cfg[0] = 1   # blue, frozen from t=8
    cfg[1] = 2   # red claimant
    cfg[4] = 1   # blue claimant
    assert determine_color(rep, cfg, 0, 10.0) == 1
    traj = run(cfg, rep, [10.0],)
    assert traj.final[0] == 1


def test_color_red_blocked_by_blue_only_label():
    # lambda1 > lambda2: coin 0.2 is below the 0.5 blue-only threshold
    lines = ["8.5 arrow 1 0 0.2", "9 arrow 4 0 0.7"]
    rep = rep_from_log(lines, lam1=2.0, lam2=1.0, T=10.0)
    cfg = np.zeros(6, dtype=np.uint8)
    cfg[1] = 2
    cfg[4] = 1
    assert determine_color(rep, cfg, 0, 10.0) == 1
    assert run(cfg, rep, [10.0]).final[0] == 1


def test_color_red_paints_through_usable_arrow():
    lines = ["8.5 arrow 1 0 0.7"]
    rep = rep_from_log(lines, lam1=2.0, lam2=1.0, T=10.0)
    cfg = np.zeros(6, dtype=np.uint8)
    cfg[1] = 2
    assert determine_color(rep, cfg, 0, 10.0) == 2


def test_color_rejects_red_dominant():
    rep = rep_from_log([], lam1=1.0, lam2=2.0)
    with pytest.raises(ValueError):
        determine_color(rep, np.zeros(6, dtype=np.uint8), 0, 5.0)


def test_color_matches_forward_randomized():
    total = 0
    for seed in range(40):
        rep, cfg, p, lat, T = random_instance(7000 + seed,
                                              equal_rates=(seed % 3 == 0))
        traj, states = run(cfg, rep, [T], record_transitions=True)
        for x in range(0, 20, 2):
            c = determine_color(rep, cfg, x, T, states=states)
            assert c == traj.final[x], (seed, x)
            total += 1
    assert total == 400


# ---------------------------------------------------------------------
# tree export
# ---------------------------------------------------------------------

def test_tree_export_roundtrip():
    lines = ["8 cross 0", "8.5 arrow 1 0 0.9", "9.2 arrow 4 0 0.9",
             "4 arrow 2 1 0.9"]
    rep = rep_from_log(lines)
    tree = build_dual_tree(rep, 0, 10.0)
    assert tree.sites == [0, 1, 2, 4]
    assert tree.parents == [-1, 0, 1, 0]
    out = tree.export_lines()
    back = DualTree.parse_lines(out)
    assert back.sites == tree.sites and back.parents == tree.parents
    assert np.allclose(back.entry_dual, tree.entry_dual)
