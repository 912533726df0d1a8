"""Decision trees: histogram split finding and the three growth strategies.

All growers share one split criterion. With G, H the gradient/hessian sums of
a node and lambda/gamma the L2 and per-split penalties:

    leaf weight  w*(G, H) = -G / (H + lambda)
    gain(split)  = 0.5 * [ GL^2/(HL+lambda) + GR^2/(HR+lambda)
                           - (GL+GR)^2/(HL+HR+lambda) ] - gamma

Ties between candidate splits break toward the lowest feature index, then the
lowest threshold index, so results are identical across platforms and worker
counts. Histograms accumulate in row order via ``np.bincount``; threading only
partitions the feature axis, with blocks merged in feature order, which keeps
every gain bit-identical to the serial computation.

Thresholds are midpoints between distinct training values, so no training
value ever equals a threshold. Prediction routes ``value < threshold`` left
and equality (reachable only on unseen data) right.
"""

from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import BinnedMatrix, FeatureBins

LEVEL_WISE = "level_wise"
LEAF_WISE = "leaf_wise"
OBLIVIOUS = "oblivious"
FLAVORS = (LEVEL_WISE, LEAF_WISE, OBLIVIOUS)


@dataclass(frozen=True)
class TreeParams:
    """Structural and regularization knobs shared by all growers."""

    lam: float = 1.0
    gamma: float = 0.0
    max_depth: int = 6
    max_leaves: int = 31
    min_child_weight: float = 1e-3
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("lam, gamma and min_child_weight must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_leaves < 1:
            raise ValueError("max_leaves must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    bin_index: int
    threshold: float
    gain: float
    g_left: float
    h_left: float
    g_right: float
    h_right: float
    n_left: int
    n_right: int


@dataclass(frozen=True)
class TreeNode:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class SplitRecord:
    """Replay-log entry: one committed split, in commit order. Oblivious
    levels use node_id -1 (the split belongs to the whole level)."""

    node_id: int
    depth: int
    feature: int
    bin_index: int
    threshold: float
    gain: float


@dataclass(frozen=True, eq=False)
class Tree:
    """One grown tree. Node/leaf ids share a namespace; the root is id 0.

    A tree with no internal nodes is the single leaf id 0. Oblivious trees
    additionally carry one (feature, threshold) per depth level; their node
    structure is the expanded perfect tree.
    """

    flavor: str
    nodes: dict[int, TreeNode]
    leaves: dict[int, float]
    level_splits: tuple[tuple[int, float], ...] | None = None
    split_log: tuple[SplitRecord, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)


def leaf_weight(g_sum: float, h_sum: float, lam: float) -> float:
    """Closed-form minimizer of g*w + 0.5*(h+lam)*w^2."""
    denom = h_sum + lam
    if denom <= 0:
        raise ValueError("hessian sum plus lambda must be positive")
    return -g_sum / denom


def split_gain(
    g_left: float, h_left: float, g_right: float, h_right: float, lam: float, gamma: float
) -> float:
    parent_g = g_left + g_right
    parent_h = h_left + h_right
    return 0.5 * (
        g_left * g_left / (h_left + lam)
        + g_right * g_right / (h_right + lam)
        - parent_g * parent_g / (parent_h + lam)
    ) - gamma


def _node_histograms(codes, pos, g, h, n_bins, lo, hi):
    """(G, H, count) histograms for features [lo, hi) over positions ``pos``.

    bincount walks the flattened (row-major) codes, so accumulation order is
    the row order — fixed and independent of how features are blocked.
    """
    width = hi - lo
    sub = codes[pos, lo:hi].astype(np.int64)
    flat = (sub + np.arange(width, dtype=np.int64) * n_bins).ravel()
    size = width * n_bins
    gp = g[pos]
    hp = h[pos]
    hist_g = np.bincount(flat, weights=np.repeat(gp, width), minlength=size)
    hist_h = np.bincount(flat, weights=np.repeat(hp, width), minlength=size)
    hist_n = np.bincount(flat, minlength=size)
    return (
        hist_g.reshape(width, n_bins),
        hist_h.reshape(width, n_bins),
        hist_n.reshape(width, n_bins).astype(np.int64),
    )


def _feature_blocks(n_features: int, n_threads: int) -> list[tuple[int, int]]:
    n_blocks = max(1, min(n_threads, n_features))
    bounds = np.linspace(0, n_features, n_blocks + 1, dtype=int)
    return [
        (int(bounds[i]), int(bounds[i + 1]))
        for i in range(n_blocks)
        if bounds[i] < bounds[i + 1]
    ]


def _full_histograms(codes, pos, g, h, n_bins, n_features, n_threads):
    blocks = _feature_blocks(n_features, n_threads)
    if len(blocks) == 1:
        return _node_histograms(codes, pos, g, h, n_bins, 0, n_features)
    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        parts = list(
            pool.map(lambda b: _node_histograms(codes, pos, g, h, n_bins, b[0], b[1]), blocks)
        )
    return tuple(np.concatenate([p[i] for p in parts], axis=0) for i in range(3))


def _gain_matrix(hist_g, hist_h, hist_n, params: TreeParams):
    """Gain at every (feature, boundary) cell; invalid candidates are -inf.

    Boundary b means left = bins 0..b. Cells at or beyond a feature's last
    real threshold leave the right child empty and fail min_samples_leaf.
    """
    gl = np.cumsum(hist_g[:, :-1], axis=1)
    hl = np.cumsum(hist_h[:, :-1], axis=1)
    nl = np.cumsum(hist_n[:, :-1], axis=1)
    g_tot = gl[:, -1:] + hist_g[:, -1:]
    h_tot = hl[:, -1:] + hist_h[:, -1:]
    n_tot = nl[:, -1:] + hist_n[:, -1:]
    gr = g_tot - gl
    hr = h_tot - hl
    nr = n_tot - nl
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (
            gl * gl / (hl + params.lam)
            + gr * gr / (hr + params.lam)
            - g_tot * g_tot / (h_tot + params.lam)
        ) - params.gamma
    valid = (
        (nl >= params.min_samples_leaf)
        & (nr >= params.min_samples_leaf)
        & (hl >= params.min_child_weight)
        & (hr >= params.min_child_weight)
    )
    return np.where(valid, gain, -np.inf)


def _candidate_from_gains(gains, bins: FeatureBins, hists, n_rows: int):
    """First arg-max over the (feature, boundary) grid = the tie-break order."""
    flat_idx = int(np.argmax(gains))
    n_boundaries = gains.shape[1]
    feature, boundary = divmod(flat_idx, n_boundaries)
    best_gain = gains[feature, boundary]
    if not np.isfinite(best_gain) or best_gain <= 0:
        return None
    hist_g, hist_h, hist_n = hists
    g_left = float(np.sum(hist_g[feature, : boundary + 1]))
    h_left = float(np.sum(hist_h[feature, : boundary + 1]))
    n_left = int(np.sum(hist_n[feature, : boundary + 1]))
    g_right = float(np.sum(hist_g[feature])) - g_left
    h_right = float(np.sum(hist_h[feature])) - h_left
    return SplitCandidate(
        feature=int(feature),
        bin_index=int(boundary),
        threshold=float(bins.thresholds[feature][boundary]),
        gain=float(best_gain),
        g_left=g_left,
        h_left=h_left,
        g_right=g_right,
        h_right=h_right,
        n_left=n_left,
        n_right=n_rows - n_left,
    )


class _NodeSet:
    """A grower's working set: node codes plus gradients, addressed by
    position so recursive partitions never re-index the parent matrix."""

    def __init__(self, binned: BinnedMatrix, rows, g, h):
        rows = np.asarray(rows, dtype=np.intp)
        self.codes = binned.codes[rows]
        self.bins = binned.bins
        self.g = np.asarray(g, dtype=np.float64)
        self.h = np.asarray(h, dtype=np.float64)
        if len(self.g) != len(rows) or len(self.h) != len(rows):
            raise ValueError("g and h must align with rows")
        self.n_bins = binned.bins.max_bins
        self.n_features = binned.n_features

    def best_split(self, pos, params, n_threads) -> SplitCandidate | None:
        if len(pos) < 2:
            return None
        hists = _full_histograms(
            self.codes, pos, self.g, self.h, self.n_bins, self.n_features, n_threads
        )
        gains = _gain_matrix(*hists, params)
        return _candidate_from_gains(gains, self.bins, hists, len(pos))

    def gain_and_hists(self, pos, params, n_threads):
        hists = _full_histograms(
            self.codes, pos, self.g, self.h, self.n_bins, self.n_features, n_threads
        )
        return _gain_matrix(*hists, params), hists

    def partition(self, pos, feature, boundary):
        mask = self.codes[pos, feature] <= boundary
        return pos[mask], pos[~mask]

    def weight(self, pos, lam) -> float:
        return leaf_weight(float(np.sum(self.g[pos])), float(np.sum(self.h[pos])), lam)


def best_split_histogram(
    binned: BinnedMatrix,
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TreeParams,
    n_threads: int = 1,
) -> SplitCandidate | None:
    """Best positive-gain candidate over all histogram boundaries, or None.

    g and h are aligned with ``rows`` (already multiplied by any sampling
    weights).
    """
    ns = _NodeSet(binned, rows, g, h)
    return ns.best_split(np.arange(len(ns.g), dtype=np.intp), params, n_threads)


class _IdAllocator:
    def __init__(self):
        self.next_id = 1  # root is 0

    def pair(self) -> tuple[int, int]:
        left, right = self.next_id, self.next_id + 1
        self.next_id += 2
        return left, right


def grow_level_wise(
    binned: BinnedMatrix,
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TreeParams,
    n_threads: int = 1,
) -> Tree:
    """Breadth-first growth: split every node with a positive-gain candidate
    until max_depth."""
    ns = _NodeSet(binned, rows, g, h)
    nodes: dict[int, TreeNode] = {}
    leaves: dict[int, float] = {}
    log: list[SplitRecord] = []
    alloc = _IdAllocator()

    level = [(0, np.arange(len(ns.g), dtype=np.intp))]
    for depth in range(params.max_depth):
        next_level = []
        for node_id, pos in level:
            cand = ns.best_split(pos, params, n_threads)
            if cand is None:
                leaves[node_id] = ns.weight(pos, params.lam)
                continue
            left_id, right_id = alloc.pair()
            nodes[node_id] = TreeNode(cand.feature, cand.threshold, left_id, right_id)
            log.append(
                SplitRecord(node_id, depth, cand.feature, cand.bin_index, cand.threshold, cand.gain)
            )
            left_pos, right_pos = ns.partition(pos, cand.feature, cand.bin_index)
            next_level.append((left_id, left_pos))
            next_level.append((right_id, right_pos))
        level = next_level
        if not level:
            break
    for node_id, pos in level:
        leaves[node_id] = ns.weight(pos, params.lam)
    return Tree(flavor=LEVEL_WISE, nodes=nodes, leaves=leaves, split_log=tuple(log))


def grow_leaf_wise(
    binned: BinnedMatrix,
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TreeParams,
    n_threads: int = 1,
) -> Tree:
    """Always split the frontier leaf with the globally largest gain, under
    max_leaves and a max_depth cap. Equal gains break toward the leaf created
    earliest."""
    ns = _NodeSet(binned, rows, g, h)
    nodes: dict[int, TreeNode] = {}
    leaves: dict[int, float] = {}
    log: list[SplitRecord] = []
    alloc = _IdAllocator()

    heap: list[tuple[float, int, int, int, np.ndarray, SplitCandidate]] = []
    seq = 0  # leaf creation order, the frontier tie-break

    def consider(node_id, pos, depth):
        nonlocal seq
        cand = ns.best_split(pos, params, n_threads) if depth < params.max_depth else None
        if cand is None:
            leaves[node_id] = ns.weight(pos, params.lam)
        else:
            heapq.heappush(heap, (-cand.gain, seq, node_id, depth, pos, cand))
        seq += 1

    n_leaves = 1
    consider(0, np.arange(len(ns.g), dtype=np.intp), 0)
    while heap and n_leaves < params.max_leaves:
        _, _, node_id, depth, pos, cand = heapq.heappop(heap)
        left_id, right_id = alloc.pair()
        nodes[node_id] = TreeNode(cand.feature, cand.threshold, left_id, right_id)
        log.append(
            SplitRecord(node_id, depth, cand.feature, cand.bin_index, cand.threshold, cand.gain)
        )
        left_pos, right_pos = ns.partition(pos, cand.feature, cand.bin_index)
        consider(left_id, left_pos, depth + 1)
        consider(right_id, right_pos, depth + 1)
        n_leaves += 1
    while heap:
        _, _, node_id, _, pos, _ = heapq.heappop(heap)
        leaves[node_id] = ns.weight(pos, params.lam)
    return Tree(flavor=LEAF_WISE, nodes=nodes, leaves=leaves, split_log=tuple(log))


def grow_oblivious(
    binned: BinnedMatrix,
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TreeParams,
    n_threads: int = 1,
) -> Tree:
    """Per level, one shared (feature, threshold) maximizing the summed gain
    over all current nodes; applied to every node, producing a perfect tree.

    A node whose children would violate min_child_weight/min_samples_leaf
    contributes 0 to the sum (its rows still route through the shared split;
    empty leaves get weight 0). The level is accepted only if the sum is > 0.
    """
    ns = _NodeSet(binned, rows, g, h)
    level_nodes: list[np.ndarray] = [np.arange(len(ns.g), dtype=np.intp)]
    level_splits: list[tuple[int, float]] = []
    log: list[SplitRecord] = []
    n_boundaries = ns.n_bins - 1

    for depth in range(params.max_depth):
        total = np.zeros((ns.n_features, n_boundaries))
        any_candidate = False
        for pos in level_nodes:
            if len(pos) < 2:
                continue
            gains, _ = ns.gain_and_hists(pos, params, n_threads)
            finite = np.isfinite(gains)
            if np.any(finite):
                any_candidate = True
            total += np.where(finite, gains, 0.0)
        if not any_candidate:
            break
        flat_idx = int(np.argmax(total))
        feature, boundary = divmod(flat_idx, n_boundaries)
        if total[feature, boundary] <= 0:
            break
        threshold = float(ns.bins.thresholds[feature][boundary])
        level_splits.append((int(feature), threshold))
        log.append(
            SplitRecord(-1, depth, int(feature), int(boundary), threshold,
                        float(total[feature, boundary]))
        )
        next_nodes = []
        for pos in level_nodes:
            left_pos, right_pos = ns.partition(pos, feature, boundary)
            next_nodes.append(left_pos)
            next_nodes.append(right_pos)
        level_nodes = next_nodes

    depth = len(level_splits)
    nodes: dict[int, TreeNode] = {}
    leaves: dict[int, float] = {}
    # perfect-tree ids: level d starts at 2^d - 1; leaves follow the internals
    n_internal = (1 << depth) - 1
    for d in range(depth):
        feature, threshold = level_splits[d]
        start = (1 << d) - 1
        child_start = (1 << (d + 1)) - 1
        for k in range(1 << d):
            node_id = start + k
            if d + 1 < depth:
                left_id = child_start + 2 * k
                right_id = child_start + 2 * k + 1
            else:
                left_id = n_internal + 2 * k
                right_id = n_internal + 2 * k + 1
            nodes[node_id] = TreeNode(feature, threshold, left_id, right_id)
    for k, pos in enumerate(level_nodes):
        leaf_id = n_internal + k if depth > 0 else 0
        leaves[leaf_id] = ns.weight(pos, params.lam) if len(pos) else 0.0
    return Tree(
        flavor=OBLIVIOUS,
        nodes=nodes,
        leaves=leaves,
        level_splits=tuple(level_splits),
        split_log=tuple(log),
    )


def predict_tree(tree: Tree, row: np.ndarray) -> float:
    """Route one raw feature vector to its leaf weight (equality goes right)."""
    row = np.asarray(row, dtype=np.float64)
    node_id = 0
    while node_id in tree.nodes:
        node = tree.nodes[node_id]
        if node.feature >= len(row):
            raise ValueError(
                f"row has {len(row)} features, tree tests feature {node.feature}"
            )
        node_id = node.left if row[node.feature] < node.threshold else node.right
    return tree.leaves[node_id]


def predict_tree_matrix(tree: Tree, features: np.ndarray) -> np.ndarray:
    """Leaf weight per row of a (n, D) matrix, vectorized by subtree masking."""
    features = np.asarray(features, dtype=np.float64)
    out = np.zeros(features.shape[0])
    if not tree.nodes:
        out[:] = tree.leaves[0]
        return out
    stack = [(0, np.arange(features.shape[0], dtype=np.intp))]
    while stack:
        node_id, idx = stack.pop()
        if len(idx) == 0:
            continue
        if node_id in tree.leaves:
            out[idx] = tree.leaves[node_id]
            continue
        node = tree.nodes[node_id]
        if node.feature >= features.shape[1]:
            raise ValueError(
                f"rows have {features.shape[1]} features, tree tests feature {node.feature}"
            )
        mask = features[idx, node.feature] < node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


GROWERS = {
    LEVEL_WISE: grow_level_wise,
    LEAF_WISE: grow_leaf_wise,
    OBLIVIOUS: grow_oblivious,
}
