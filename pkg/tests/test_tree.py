"""Tree module: split finding against an exact greedy oracle, the three
growth strategies, and prediction routing."""

import numpy as np
import pytest

from histoboost.data import LabeledDataset, bin_features, compute_bins
from histoboost.tree import (
    Tree,
    TreeParams,
    best_split_histogram,
    grow_leaf_wise,
    grow_level_wise,
    grow_oblivious,
    leaf_weight,
    predict_tree,
    predict_tree_matrix,
    split_gain,
)


def make_binned(features, max_bins=256):
    features = np.asarray(features, dtype=np.float64)
    labels = np.zeros(len(features), dtype=np.int8)
    labels[0] = 1
    ds = LabeledDataset(
        ids=tuple(f"r{i}" for i in range(len(features))),
        labels=labels,
        features=features,
    )
    bins = compute_bins(ds, max_bins)
    return bin_features(ds, bins), ds


def exact_best_split(features, g, h, params):
    """Brute-force greedy scan over sorted raw values; the oracle against
    which histogram splitting is checked. Scans features then midpoints in
    ascending order with a strict > comparison, i.e. the same tie-break."""
    features = np.asarray(features, dtype=np.float64)
    best = None
    for j in range(features.shape[1]):
        column = features[:, j]
        distinct = np.unique(column)
        for lo, hi in zip(distinct[:-1], distinct[1:]):
            thr = (lo + hi) / 2.0
            left = column < thr
            nl, nr = int(left.sum()), int((~left).sum())
            gl, hl = float(g[left].sum()), float(h[left].sum())
            gr, hr = float(g[~left].sum()), float(h[~left].sum())
            if nl < params.min_samples_leaf or nr < params.min_samples_leaf:
                continue
            if hl < params.min_child_weight or hr < params.min_child_weight:
                continue
            gain = split_gain(gl, hl, gr, hr, params.lam, params.gamma)
            if gain > 0 and (best is None or gain > best[0]):
                best = (gain, j, thr)
    return best


class TestLeafWeight:
    def test_zero_gradient(self):
        assert leaf_weight(0.0, 5.0, 1.0) == 0.0

    def test_known_values(self):
        assert leaf_weight(2.0, 3.0, 1.0) == -0.5
        assert leaf_weight(-4.0, 1.0, 1.0) == 2.0

    def test_quadratic_optimality(self):
        # w* must beat perturbed weights on g*w + 0.5*(h+lam)*w^2
        rng = np.random.default_rng(17)
        for _ in range(200):
            g = float(rng.normal(scale=3))
            h = float(rng.uniform(0, 4))
            lam = float(rng.uniform(0, 2))
            if h + lam <= 1e-9:
                continue
            w = leaf_weight(g, h, lam)
            obj = lambda x: g * x + 0.5 * (h + lam) * x * x
            for eps in (1e-3, 1e-2):
                assert obj(w) <= obj(w + eps)
                assert obj(w) <= obj(w - eps)

    def test_degenerate_denominator(self):
        with pytest.raises(ValueError):
            leaf_weight(1.0, 0.0, 0.0)


class TestBestSplitHistogram:
    def test_two_cluster_example(self):
        binned, _ = make_binned([[1.0], [1.0], [9.0], [9.0]])
        g = np.array([-0.5, -0.5, 0.5, 0.5])
        h = np.full(4, 0.25)
        cand = best_split_histogram(binned, np.arange(4), g, h, TreeParams(lam=1.0))
        assert cand.feature == 0 and cand.bin_index == 0
        assert cand.threshold == 5.0
        assert cand.gain == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert (cand.g_left, cand.h_left) == (-1.0, 0.5)
        assert (cand.g_right, cand.h_right) == (1.0, 0.5)

    def test_zero_gradients_no_split(self):
        binned, _ = make_binned([[1.0], [2.0], [3.0], [4.0]])
        g = np.zeros(4)
        h = np.full(4, 0.25)
        assert best_split_histogram(binned, np.arange(4), g, h, TreeParams()) is None

    def test_gamma_dominates(self):
        binned, _ = make_binned([[1.0], [1.0], [9.0], [9.0]])
        g = np.array([-0.5, -0.5, 0.5, 0.5])
        h = np.full(4, 0.25)
        cand = best_split_histogram(
            binned, np.arange(4), g, h, TreeParams(lam=1.0, gamma=10.0)
        )
        assert cand is None

    def test_matches_exact_oracle(self):
        rng = np.random.default_rng(23)
        params = TreeParams(lam=1.0, gamma=0.0, min_child_weight=0.0)
        for _ in range(40):
            n = int(rng.integers(4, 40))
            d = int(rng.integers(1, 4))
            features = np.round(rng.normal(size=(n, d)), 2)
            g = rng.normal(size=n)
            h = rng.uniform(0.05, 1.0, size=n)
            binned, _ = make_binned(features, max_bins=256)
            cand = best_split_histogram(binned, np.arange(n), g, h, params)
            oracle = exact_best_split(features, g, h, params)
            if oracle is None:
                assert cand is None
                continue
            gain, feature, thr = oracle
            assert cand.feature == feature
            assert cand.threshold == thr
            assert cand.gain == pytest.approx(gain, abs=1e-10)

    def test_thread_count_does_not_change_result(self):
        rng = np.random.default_rng(29)
        features = rng.normal(size=(64, 6))
        g = rng.normal(size=64)
        h = rng.uniform(0.1, 1.0, size=64)
        binned, _ = make_binned(features)
        params = TreeParams()
        base = best_split_histogram(binned, np.arange(64), g, h, params, n_threads=1)
        for n_threads in (2, 8):
            other = best_split_histogram(binned, np.arange(64), g, h, params, n_threads=n_threads)
            assert other == base


class TestLevelWise:
    def test_depth_zero_single_leaf(self):
        binned, _ = make_binned([[1.0], [2.0], [3.0]])
        g = np.array([1.0, -2.0, 0.5])
        h = np.array([0.5, 0.5, 0.5])
        tree = grow_level_wise(binned, np.arange(3), g, h, TreeParams(max_depth=0))
        assert tree.nodes == {} and list(tree.leaves) == [0]
        assert tree.leaves[0] == leaf_weight(g.sum(), h.sum(), 1.0)

    def test_xor_pattern_fits_at_depth_two(self):
        # One duplicated corner makes every level's split gain positive; the
        # perfectly symmetric 4-point pattern has zero gain everywhere.
        features = np.array(
            [[0.0, 0.0]] * 3 + [[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        )
        y = np.array([0, 0, 0, 1, 1, 0])
        g = 0.5 - y
        h = np.full(6, 0.25)
        binned, ds = make_binned(features)
        params = TreeParams(lam=0.0, max_depth=2, min_child_weight=0.0)
        tree = grow_level_wise(binned, np.arange(6), g, h, params)
        assert tree.n_leaves == 4
        # one full-weight Newton step classifies every point correctly
        raw = predict_tree_matrix(tree, features)
        assert np.array_equal((raw > 0).astype(int), y)

    def test_separable_first_split_at_class_boundary(self):
        features = np.arange(10, dtype=float)[:, None]
        y = (features.ravel() >= 5).astype(int)
        g = 0.5 - y
        h = np.full(10, 0.25)
        binned, _ = make_binned(features)
        params = TreeParams(lam=1.0, max_depth=3, min_child_weight=0.0)
        tree = grow_level_wise(binned, np.arange(10), g, h, params)
        oracle = exact_best_split(features, g, h, params)
        assert tree.split_log[0].threshold == oracle[2] == 4.5

    def test_accepted_splits_had_positive_gain(self):
        rng = np.random.default_rng(31)
        features = rng.normal(size=(50, 3))
        g = rng.normal(size=50)
        h = rng.uniform(0.1, 1.0, size=50)
        binned, _ = make_binned(features)
        tree = grow_level_wise(binned, np.arange(50), g, h, TreeParams(max_depth=4))
        assert all(rec.gain > 0 for rec in tree.split_log)


class TestLeafWise:
    def params(self, **kw):
        defaults = dict(lam=1.0, gamma=0.0, max_depth=6, min_child_weight=0.0)
        defaults.update(kw)
        return TreeParams(**defaults)

    def test_single_leaf_budget(self):
        binned, _ = make_binned([[1.0], [2.0], [9.0]])
        g = np.array([-1.0, -1.0, 2.0])
        h = np.ones(3)
        tree = grow_leaf_wise(binned, np.arange(3), g, h, self.params(max_leaves=1))
        assert tree.n_leaves == 1 and tree.nodes == {}

    def test_two_leaves_equals_best_root_split(self):
        rng = np.random.default_rng(37)
        features = rng.normal(size=(30, 2))
        g = rng.normal(size=30)
        h = rng.uniform(0.1, 1.0, size=30)
        binned, _ = make_binned(features)
        leafwise = grow_leaf_wise(binned, np.arange(30), g, h, self.params(max_leaves=2))
        levelwise = grow_level_wise(binned, np.arange(30), g, h, self.params(max_depth=1))
        assert leafwise.nodes[0].feature == levelwise.nodes[0].feature
        assert leafwise.nodes[0].threshold == levelwise.nodes[0].threshold
        assert sorted(leafwise.leaves.values()) == sorted(levelwise.leaves.values())

    def test_richer_child_splits_first(self):
        # left child of the root carries more residual gain than the right,
        # so the third leaf appears under the left child
        features = np.arange(6, dtype=float)[:, None]
        g = np.array([-4.0, -4.0, -1.0, -1.0, 2.0, 8.0])
        h = np.ones(6)
        binned, _ = make_binned(features)
        tree = grow_leaf_wise(binned, np.arange(6), g, h, self.params(max_leaves=3))
        assert [rec.node_id for rec in tree.split_log] == [0, tree.nodes[0].left]
        assert tree.nodes[0].right in tree.leaves
        gains = [rec.gain for rec in tree.split_log]
        assert gains == sorted(gains, reverse=True)
        assert gains[0] == pytest.approx(80.0 / 3.0, abs=1e-12)
        assert gains[1] == pytest.approx(4.0 / 3.0, abs=1e-12)
        # independent check that the left child really is the richer one
        left = exact_best_split(features[:4], g[:4], h[:4], self.params())
        right = exact_best_split(features[4:], g[4:], h[4:], self.params())
        assert left[0] > right[0]

    def test_budget_and_frontier_maxima(self):
        rng = np.random.default_rng(41)
        features = rng.normal(size=(60, 3))
        g = rng.normal(size=60)
        h = rng.uniform(0.1, 1.0, size=60)
        binned, _ = make_binned(features)
        params = self.params(max_leaves=8)
        tree = grow_leaf_wise(binned, np.arange(60), g, h, params)
        assert tree.n_leaves <= 8
        # replay: each committed split's gain must equal the best gain among
        # the leaves present at that moment (recomputed from scratch)
        frontier = {0: np.arange(60)}
        for rec in tree.split_log:
            best = max(
                (c.gain for pos in frontier.values()
                 if (c := best_split_histogram(binned, pos, g[pos], h[pos], params)) is not None),
                default=None,
            )
            assert best is not None and rec.gain == pytest.approx(best, abs=1e-12)
            pos = frontier.pop(rec.node_id)
            node = tree.nodes[rec.node_id]
            mask = features[pos, rec.feature] < rec.threshold
            frontier[node.left] = pos[mask]
            frontier[node.right] = pos[~mask]


class TestOblivious:
    def test_depth_one_equals_root_split(self):
        rng = np.random.default_rng(43)
        features = rng.normal(size=(30, 2))
        g = rng.normal(size=30)
        h = rng.uniform(0.1, 1.0, size=30)
        binned, _ = make_binned(features)
        params = TreeParams(max_depth=1, min_child_weight=0.0)
        tree = grow_oblivious(binned, np.arange(30), g, h, params)
        cand = best_split_histogram(binned, np.arange(30), g, h, params)
        assert tree.level_splits == ((cand.feature, cand.threshold),)

    def test_shared_split_maximizes_summed_gain(self):
        # f0 separates rows 0-3 from 4-7; f1 only helps the left node, f2 only
        # the right, f3 is second-best in both but wins on the sum
        features = np.array(
            [
                [0.0, 0.0, 9.0, 0.0],
                [0.0, 0.0, 9.0, 1.0],
                [0.0, 1.0, 9.0, 1.0],
                [0.0, 1.0, 9.0, 1.0],
                [1.0, 9.0, 0.0, 0.0],
                [1.0, 9.0, 0.0, 1.0],
                [1.0, 9.0, 1.0, 1.0],
                [1.0, 9.0, 1.0, 1.0],
            ]
        )
        g = np.array([-15.0, -11.0, -9.0, -5.0, 5.0, 9.0, 11.0, 15.0])
        h = np.ones(8)
        params = TreeParams(lam=0.0, max_depth=2, min_child_weight=0.0)
        binned, _ = make_binned(features)
        tree = grow_oblivious(binned, np.arange(8), g, h, params)
        assert tree.level_splits == ((0, 0.5), (3, 0.5))
        # individual bests at depth 1 differ from the shared choice
        left_best = exact_best_split(features[:4], g[:4], h[:4], params)
        right_best = exact_best_split(features[4:], g[4:], h[4:], params)
        assert left_best[1] == 1 and right_best[1] == 2
        # exhaustive check: f3's summed gain beats every other (feature, thr)
        def summed_gain(j, thr):
            total = 0.0
            for rows in (np.arange(4), np.arange(4, 8)):
                col = features[rows, j]
                left = col < thr
                if left.sum() == 0 or (~left).sum() == 0:
                    continue
                total += split_gain(
                    g[rows][left].sum(), h[rows][left].sum(),
                    g[rows][~left].sum(), h[rows][~left].sum(),
                    params.lam, params.gamma,
                )
            return total
        best = max(
            (summed_gain(j, (lo + hi) / 2), j)
            for j in range(4)
            for lo, hi in zip(np.unique(features[:, j])[:-1], np.unique(features[:, j])[1:])
        )
        assert best[1] == 3

    def test_levels_share_identical_splits(self):
        rng = np.random.default_rng(47)
        for _ in range(10):
            features = rng.normal(size=(40, 3))
            g = rng.normal(size=40)
            h = rng.uniform(0.1, 1.0, size=40)
            binned, _ = make_binned(features)
            tree = grow_oblivious(binned, np.arange(40), g, h, TreeParams(max_depth=3))
            by_depth = {}
            def walk(node_id, depth):
                if node_id in tree.leaves:
                    return
                node = tree.nodes[node_id]
                by_depth.setdefault(depth, set()).add((node.feature, node.threshold))
                walk(node.left, depth + 1)
                walk(node.right, depth + 1)
            walk(0, 0)
            assert all(len(v) == 1 for v in by_depth.values())
            assert tree.n_leaves <= 2 ** 3

    def test_empty_leaves_weight_zero(self):
        # second level split leaves some quadrants empty
        features = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
        g = np.array([-3.0, 1.0, 2.0, 2.0])
        h = np.ones(4)
        binned, _ = make_binned(features)
        tree = grow_oblivious(
            binned, np.arange(4), g, h, TreeParams(lam=1.0, max_depth=2, min_child_weight=0.0)
        )
        if len(tree.level_splits) == 2:
            routed = {predict_tree(tree, row) for row in features}
            empties = [w for w in tree.leaves.values() if w == 0.0]
            assert len(tree.leaves) == 4
            assert len(empties) >= 4 - len(routed)


class TestPredict:
    def test_single_leaf(self):
        tree = Tree(flavor="level_wise", nodes={}, leaves={0: 0.7})
        assert predict_tree(tree, np.array([123.0])) == 0.7

    def test_depth_one_routing(self):
        from histoboost.tree import TreeNode

        tree = Tree(
            flavor="level_wise",
            nodes={0: TreeNode(0, 2.5, 1, 2)},
            leaves={1: -1.0, 2: 1.0},
        )
        assert predict_tree(tree, np.array([1.0])) == -1.0
        assert predict_tree(tree, np.array([9.0])) == 1.0

    def test_equality_routes_right(self):
        from histoboost.tree import TreeNode

        tree = Tree(
            flavor="level_wise",
            nodes={0: TreeNode(0, 2.5, 1, 2)},
            leaves={1: -1.0, 2: 1.0},
        )
        assert predict_tree(tree, np.array([2.5])) == 1.0

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(53)
        features = rng.normal(size=(40, 3))
        g = rng.normal(size=40)
        h = rng.uniform(0.1, 1.0, size=40)
        binned, _ = make_binned(features)
        tree = grow_level_wise(binned, np.arange(40), g, h, TreeParams(max_depth=3))
        batch = predict_tree_matrix(tree, features)
        singles = np.array([predict_tree(tree, row) for row in features])
        assert np.array_equal(batch, singles)

    def test_dimension_mismatch(self):
        from histoboost.tree import TreeNode

        tree = Tree(
            flavor="level_wise",
            nodes={0: TreeNode(1, 0.5, 1, 2)},
            leaves={1: 0.0, 2: 1.0},
        )
        with pytest.raises(ValueError, match="feature"):
            predict_tree(tree, np.array([1.0]))


class TestDeterminism:
    def test_identical_trees_across_runs_and_threads(self):
        rng = np.random.default_rng(59)
        features = rng.normal(size=(80, 4))
        g = rng.normal(size=80)
        h = rng.uniform(0.1, 1.0, size=80)
        binned, _ = make_binned(features)
        params = TreeParams(max_depth=4)
        for grower in (grow_level_wise, grow_leaf_wise, grow_oblivious):
            reference = grower(binned, np.arange(80), g, h, params, 1)
            for n_threads in (1, 2, 8):
                again = grower(binned, np.arange(80), g, h, params, n_threads)
                assert again.nodes == reference.nodes
                assert again.leaves == reference.leaves
                assert again.split_log == reference.split_log
