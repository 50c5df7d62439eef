import math

import numpy as np
import pytest

from ortsmooth.lattice import LatticeError, LatticeField, PointSet, coord_to_nearest_index
from ortsmooth.smoother import SmootherConfig
from ortsmooth.synth import NoiseModel, add_noise, region_labels, render, triangle_spec, two_region_spec
from ortsmooth.tree import (
    InvalidSplitError,
    NodeStats,
    SplitRule,
    TreeConfig,
    audit_leaves,
    best_split,
    format_split_log,
    grow_tree,
    impurity_gain,
    locate_leaf,
    parse_split_log,
    partition_from_split_log,
    simplified_gain,
)

from .oracles import best_gain_degree_sweep, gain_by_definition

ONE_D = LatticeField((4,), [0.0, 0.0, 1.0, 1.0])


def diagonal_field(n=32):
    """0 below the line x + y = 1, 1 above it."""
    return render(two_region_spec(alpha=(1.0, 1.0), c=1.0, low=1.0, high=0.0), (n, n))


# --- gains -----------------------------------------------------------------


@pytest.mark.parametrize("left, right, expected", [
    (NodeStats(2, 0.0, 0.0), NodeStats(2, 2.0, 2.0), 0.25),
    (NodeStats(1, 3.0, 9.0), NodeStats(3, 3.0, 3.0), 0.75),
    (NodeStats(3, 6.0, 14.0), NodeStats(5, 10.0, 30.0), 0.0),
])
def test_simplified_gain_examples(left, right, expected):
    assert simplified_gain(left, right) == pytest.approx(expected, abs=1e-15)


def test_simplified_gain_needs_both_children():
    with pytest.raises(InvalidSplitError):
        simplified_gain(NodeStats(0, 0.0, 0.0), NodeStats(2, 1.0, 1.0))


def test_impurity_gain_examples():
    const = LatticeField((2, 2), [5.0] * 4)
    assert impurity_gain(const, PointSet.of(const), SplitRule([1.0, 0.0], 0.6)) == 0.0
    assert impurity_gain(ONE_D, PointSet.of(ONE_D), SplitRule([1.0], 0.6)) == pytest.approx(0.25, abs=1e-15)


def test_impurity_gain_matches_definition_and_means():
    rng = np.random.default_rng(3)
    f = LatticeField((10, 10), rng.standard_normal(100))
    for _ in range(50):
        idx = np.sort(rng.choice(100, 50, replace=False))
        node = PointSet(idx, f.dims)
        coords = f.coords(idx)
        a = rng.standard_normal(2)
        a = a if a[0] > 0 else -a
        proj = coords @ (a / np.linalg.norm(a))
        c = float(np.median(proj))
        rule = SplitRule(a, c)
        left = rule.goes_left(coords)
        if left.all() or not left.any():
            continue
        g = impurity_gain(f, node, rule)
        s = simplified_gain(NodeStats.of(f.values[idx][left]), NodeStats.of(f.values[idx][~left]))
        assert abs(g - s) <= 1e-10
        assert abs(g - gain_by_definition(f.values[idx], left)) <= 1e-12


def test_impurity_gain_empty_child():
    with pytest.raises(InvalidSplitError):
        impurity_gain(ONE_D, PointSet.of(ONE_D), SplitRule([1.0], 5.0))


def test_split_rule_canonical_form():
    r = SplitRule([3.0, 4.0], 5.0)
    np.testing.assert_allclose(r.alpha, [0.6, 0.8])
    assert r.c == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SplitRule([-1.0, 0.0], 0.5)
    with pytest.raises(ValueError):
        SplitRule([0.0, 0.0], 0.5)
    assert SplitRule([0.0, 1.0], 0.5).goes_left(np.array([[0.1, 0.5], [0.1, 0.51]])).tolist() == [True, False]


# --- best_split ------------------------------------------------------------


def test_best_split_one_d():
    rule, gain = best_split(ONE_D, PointSet.of(ONE_D), TreeConfig())
    assert 0.5 < rule.c < 0.75
    assert gain == pytest.approx(0.25, abs=1e-15)


def test_best_split_constant_field():
    f = LatticeField((6, 6), np.full(36, 0.4))
    found = best_split(f, PointSet.of(f), TreeConfig())
    assert found is not None and found[1] == 0.0


def test_best_split_oblique_matches_exhaustive_sweep():
    f = diagonal_field(32)
    rule, gain = best_split(f, PointSet.of(f), TreeConfig())
    coords = f.coords()
    optimum = best_gain_degree_sweep(coords, f.values)
    assert gain >= optimum - 1e-9
    truth_left = f.values == 0.0
    agree = np.mean(rule.goes_left(coords) == truth_left)
    assert max(agree, 1 - agree) >= 0.99


def test_best_split_respects_min_leaf():
    f = LatticeField((8,), [0, 1, 1, 1, 1, 1, 1, 1])
    rule, gain = best_split(f, PointSet.of(f), TreeConfig(min_leaf=3))
    left = rule.goes_left(f.coords())
    assert 3 <= left.sum() <= 5
    assert best_split(f, PointSet.of(f, range(5)), TreeConfig(min_leaf=3)) is None


def test_best_split_is_reproducible():
    f = add_noise(render(triangle_spec(), (30, 30)), NoiseModel(0.2, 4))
    a = best_split(f, PointSet.of(f), TreeConfig(seed=9))
    b = best_split(f, PointSet.of(f), TreeConfig(seed=9))
    assert a[0] == b[0] and a[1] == b[1]


# --- grow_tree -------------------------------------------------------------


def test_constant_field_single_leaf():
    f = LatticeField((16, 16), np.full(256, 0.3))
    part = grow_tree(f, TreeConfig(r_n=1e-9))
    assert part.leaf_count == 1
    assert locate_leaf(part, 77) == 0


def test_noiseless_oblique_two_region_is_pure():
    spec = two_region_spec()
    f = render(spec, (64, 64))
    part = grow_tree(f, TreeConfig(r_n=1e-6))
    assert part.leaf_count <= 8
    labels = region_labels(spec, f.dims)
    for k in range(part.leaf_count):
        assert np.unique(labels[part.members(k)]).size == 1


def test_noisy_triangle_tree_passes_audit():
    sigma = 0.3
    f = add_noise(render(triangle_spec(), (100, 100)), NoiseModel(sigma, 2))
    cfg = SmootherConfig(sigma=sigma).resolve(f).tree
    assert cfg.r_n == pytest.approx(1e-4 * sigma ** 2)
    part = grow_tree(f, cfg)
    assert part.leaf_count >= 4
    assert audit_leaves(f, part, cfg) == []
    assert all(g > cfg.r_n for _, _, g in part.split_log)


def test_partition_validity_and_convexity():
    f = add_noise(render(triangle_spec(), (40, 40)), NoiseModel(0.2, 1))
    part = grow_tree(f, TreeConfig(r_n=1e-4 * 0.04, min_leaf=20))
    sizes = part.leaf_sizes()
    assert sizes.sum() == f.size and np.all(sizes >= 20)
    assert set(np.unique(part.leaf_id)) == set(range(part.leaf_count))
    coords = f.coords()
    rng = np.random.default_rng(0)
    for k in range(part.leaf_count):
        # members are exactly the lattice points inside the ancestors' half-spaces
        np.testing.assert_array_equal(np.flatnonzero(part.inside(k, coords)), part.members(k))
        mem = part.members(k)
        for _ in range(100):
            a, b = rng.choice(mem, 2)
            mid = 0.5 * (coords[a] + coords[b])
            q = coord_to_nearest_index(f, mid)
            if part.inside(k, coords[q])[0]:
                assert part.leaf_id[q] == k


def test_locate_leaf():
    part = grow_tree(ONE_D, TreeConfig())
    assert part.leaf_count == 2
    assert locate_leaf(part, 0) == locate_leaf(part, 1) != locate_leaf(part, 3)
    assert all(locate_leaf(part, i) < part.leaf_count for i in range(4))
    with pytest.raises(LatticeError):
        locate_leaf(part, 4)


def test_min_leaf_and_max_leaves():
    f = add_noise(render(triangle_spec(), (40, 40)), NoiseModel(0.3, 5))
    part = grow_tree(f, TreeConfig(r_n=1e-9, min_leaf=30, max_leaves=7))
    assert part.leaf_count <= 7
    assert np.all(part.leaf_sizes() >= 30)
    assert "max_leaves" in part.leaf_reason


def test_growth_is_deterministic_across_threads():
    f = add_noise(render(triangle_spec(), (50, 50)), NoiseModel(0.2, 3))
    cfg = TreeConfig(r_n=4e-6, min_leaf=40, seed=11)
    logs = [format_split_log(grow_tree(f, cfg, threads=t).split_log) for t in (1, 2, 4)]
    assert logs[0] == logs[1] == logs[2]
    assert len(logs[0].splitlines()) > 1


def test_split_log_round_trip_and_replay():
    f = add_noise(render(triangle_spec(), (40, 40)), NoiseModel(0.2, 6))
    part = grow_tree(f, TreeConfig(r_n=4e-6, min_leaf=25))
    text = format_split_log(part.split_log)
    back = parse_split_log(text)
    assert [r.node_id for r in back] == [r.node_id for r in part.split_log]
    assert all(a.rule == b.rule and a.gain == b.gain for a, b in zip(back, part.split_log))
    assert format_split_log(back) == text
    node_of = partition_from_split_log(f, back)
    for k in range(part.leaf_count):
        assert np.all(node_of[part.members(k)] == part.leaf_node[k])


def test_parse_split_log_rejects_garbage():
    with pytest.raises(ValueError):
        parse_split_log("3 0.5\n")


def test_median_leaf_size_grows_with_resolution():
    spec = triangle_spec()
    med = {}
    for n in (100, 200):
        truth = render(spec, (n, n))
        sizes = []
        for seed in range(5):
            f = add_noise(truth, NoiseModel(0.3, seed))
            cfg = SmootherConfig(sigma=0.3).resolve(f).tree
            sizes.append(np.median(grow_tree(f, cfg).leaf_sizes()))
        med[n] = np.mean(sizes)
    assert med[200] > med[100]


def test_tree_config_validation():
    for kwargs in [dict(r_n=0.0), dict(min_leaf=0), dict(n_random_dirs=-1),
                   dict(refine_steps=-2), dict(max_leaves=0), dict(seed=-1)]:
        with pytest.raises(ValueError):
            TreeConfig(**kwargs)
    assert TreeConfig().random_dirs_for(2) == 64
    assert TreeConfig().random_dirs_for(3) == 128
    assert TreeConfig().random_dirs_for(1) == 0
    assert math.isclose(TreeConfig().r_n, 1e-6)
