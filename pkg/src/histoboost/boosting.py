"""Gradient-boosting driver: logistic Newton boosting over binned features.

A model is base_score f0 = ln(P/N) plus n_trees trees of one growth flavor;
the predicted probability of the positive (malignant) class is

    p(x) = sigmoid(f0 + learning_rate * sum_t tree_t(x))

Gradients use the stable piecewise forms g = sigmoid(f) for y=0 and
g = -sigmoid(-f) for y=1 so the tails keep full relative precision, and
h = sigmoid(f) * sigmoid(-f).

Model files are JSON with floats at full round-trip precision; saving the
same model twice yields identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data import (
    DEFAULT_MAX_BINS,
    BinnedMatrix,
    LabeledDataset,
    _atomic_write_bytes,
    bin_features,
    compute_bins,
)
from .rng import SplitMix64
from .tree import (
    FLAVORS,
    GROWERS,
    LEAF_WISE,
    OBLIVIOUS,
    Tree,
    TreeNode,
    TreeParams,
    predict_tree_matrix,
)

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Model file is malformed, truncated or of an unsupported version."""


class GradPair(NamedTuple):
    g: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class GossParams:
    """Gradient-based one-side sampling: keep the ceil(a*n) largest-|g| rows,
    sample ceil(b*n) of the rest with weight (1-a)/b."""

    a: float = 0.2
    b: float = 0.1

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.a + self.b <= 1):
            raise ValueError("goss requires a > 0, b > 0 and a + b <= 1")


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 100
    learning_rate: float = 0.1
    flavor: str = "level_wise"
    tree: TreeParams = field(default_factory=TreeParams)
    goss: GossParams | None = None
    seed: int = 0
    max_bins: int = DEFAULT_MAX_BINS

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if not (0 < self.learning_rate <= 1):
            raise ValueError("learning_rate must be in (0, 1]")
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.goss is not None and self.flavor != LEAF_WISE:
            raise ValueError("goss is only valid for the leaf_wise flavor")
        if self.max_bins < 2:
            raise ValueError("max_bins must be >= 2")


@dataclass(frozen=True, eq=False)
class BoostedModel:
    base_score: float
    trees: tuple[Tree, ...]
    learning_rate: float
    flavor: str
    n_features: int
    metadata: dict = field(default_factory=dict)

    def predict_proba(self, features: np.ndarray, n_threads: int = 1) -> np.ndarray:
        return predict_proba(self, features, n_threads=n_threads)


def _sigmoid(f: np.ndarray) -> np.ndarray:
    out = np.empty_like(f)
    pos = f >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-f[pos]))
    ef = np.exp(f[~pos])
    out[~pos] = ef / (1.0 + ef)
    return out


def logistic_grad_hess(y, f) -> GradPair:
    """First and second derivatives of binary logloss at raw score f.

    Accepts scalars or arrays; g = p - y and h = p(1-p) with p = sigmoid(f),
    evaluated so that both stay accurate deep in the tails.
    """
    y_arr = np.asarray(y)
    f_arr = np.asarray(f, dtype=np.float64)
    scalar = f_arr.ndim == 0 and y_arr.ndim == 0
    y_arr = np.atleast_1d(y_arr)
    f_arr = np.atleast_1d(f_arr)
    if not np.all(np.isfinite(f_arr)):
        raise ValueError("raw scores must be finite")
    p = _sigmoid(f_arr)
    q = _sigmoid(-f_arr)  # 1 - p without cancellation
    g = np.where(y_arr == 1, -q, p)
    h = p * q
    if scalar:
        return GradPair(float(g[0]), float(h[0]))
    return GradPair(g, h)


def logloss(y, f) -> float:
    """Mean binary logloss from raw scores, overflow-safe."""
    y_arr = np.asarray(y, dtype=np.float64)
    f_arr = np.asarray(f, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, (1.0 - 2.0 * y_arr) * f_arr)))


def initial_score(labels) -> float:
    """Prior log-odds ln(P/N)."""
    labels = np.asarray(labels)
    pos = int(np.sum(labels == 1))
    neg = int(np.sum(labels == 0))
    if pos == 0 or neg == 0:
        raise ValueError("training set must contain both classes")
    return math.log(pos / neg)


def goss_sample(
    g: np.ndarray, a: float, b: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Select rows for one-side sampling.

    Returns (row indices, per-row multipliers). The ceil(a*n) rows with the
    largest |g| keep multiplier 1 (ties break toward the lower row index);
    ceil(b*n) of the remainder are drawn uniformly with multiplier (1-a)/b.
    Output indices are sorted so downstream histogram accumulation keeps its
    fixed row order.
    """
    g = np.asarray(g, dtype=np.float64)
    n = len(g)
    if n < 1:
        raise ValueError("need at least one row")
    # b == 0 is the degenerate a = 1 corner: nothing left to sample
    if not (a > 0 and b >= 0 and a + b <= 1):
        raise ValueError("goss requires a > 0, b >= 0 and a + b <= 1")
    n_top = min(n, math.ceil(a * n))
    order = np.lexsort((np.arange(n), -np.abs(g)))
    top = order[:n_top]
    rest = np.sort(order[n_top:])
    n_sample = min(len(rest), math.ceil(b * n))
    rng = SplitMix64(seed)
    pool = list(rest)
    rng.shuffle(pool)
    sampled = np.array(sorted(pool[:n_sample]), dtype=np.intp)
    idx = np.concatenate([top, sampled]).astype(np.intp)
    sort = np.argsort(idx, kind="stable")
    idx = idx[sort]
    sample_weight = (1.0 - a) / b if n_sample > 0 else 1.0
    mult = np.concatenate([np.ones(n_top), np.full(n_sample, sample_weight)])[sort]
    return idx, mult


def train_gbdt(
    train: LabeledDataset, params: BoostParams, n_threads: int = 1
) -> BoostedModel:
    """Fit an additive model of params.n_trees trees of the configured flavor.

    Feature bins come from the training data only. Raw scores accumulate in
    float64 in a fixed order; the recorded per-iteration training logloss is
    recomputed from those scores after every tree.
    """
    labels = train.labels.astype(np.float64)
    f0 = initial_score(train.labels)
    bins = compute_bins(train, params.max_bins)
    binned = bin_features(train, bins)
    raw = np.full(train.n_rows, f0, dtype=np.float64)
    grower = GROWERS[params.flavor]
    all_rows = np.arange(train.n_rows, dtype=np.intp)
    trees: list[Tree] = []
    history: list[float] = [logloss(labels, raw)]
    for t in range(params.n_trees):
        g, h = logistic_grad_hess(labels, raw)
        if params.goss is not None and t > 0:
            rows, mult = goss_sample(g, params.goss.a, params.goss.b, params.seed + t)
            g_used = g[rows] * mult
            h_used = h[rows] * mult
        else:
            rows, g_used, h_used = all_rows, g, h
        tree = grower(binned, rows, g_used, h_used, params.tree, n_threads)
        raw = raw + params.learning_rate * predict_tree_matrix(tree, train.features)
        trees.append(tree)
        history.append(logloss(labels, raw))
    metadata = {
        "seed": params.seed,
        "params": _params_to_json(params),
        "train_logloss": history,
    }
    return BoostedModel(
        base_score=f0,
        trees=tuple(trees),
        learning_rate=params.learning_rate,
        flavor=params.flavor,
        n_features=train.n_features,
        metadata=metadata,
    )


def predict_proba(
    model: BoostedModel, data: LabeledDataset | np.ndarray, n_threads: int = 1
) -> np.ndarray:
    """P(malignant) per row: sigmoid(f0 + lr * sum of tree outputs).

    Tree contributions accumulate in tree order; rows are independent, so
    blocking them across threads cannot change any output bit.
    """
    features = data.features if isinstance(data, LabeledDataset) else np.asarray(data, float)
    if features.ndim != 2:
        raise ValueError("expected a 2-D feature matrix")
    if features.shape[1] != model.n_features:
        raise ValueError(
            f"model expects {model.n_features} features, got {features.shape[1]}"
        )

    def block(rows: np.ndarray) -> np.ndarray:
        raw = np.full(len(rows), model.base_score, dtype=np.float64)
        sub = features[rows]
        for tree in model.trees:
            raw += model.learning_rate * predict_tree_matrix(tree, sub)
        return raw

    n = features.shape[0]
    if n_threads <= 1 or n < 2:
        raw = block(np.arange(n, dtype=np.intp))
    else:
        from concurrent.futures import ThreadPoolExecutor

        bounds = np.linspace(0, n, min(n_threads, n) + 1, dtype=int)
        chunks = [np.arange(bounds[i], bounds[i + 1], dtype=np.intp) for i in range(len(bounds) - 1)]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            raw = np.concatenate(list(pool.map(block, chunks)))
    return _sigmoid(raw)


def _params_to_json(params: BoostParams) -> dict:
    out = {
        "n_trees": params.n_trees,
        "learning_rate": params.learning_rate,
        "flavor": params.flavor,
        "lambda": params.tree.lam,
        "gamma": params.tree.gamma,
        "max_depth": params.tree.max_depth,
        "max_leaves": params.tree.max_leaves,
        "min_child_weight": params.tree.min_child_weight,
        "min_samples_leaf": params.tree.min_samples_leaf,
        "seed": params.seed,
        "max_bins": params.max_bins,
    }
    if params.goss is not None:
        out["goss"] = {"a": params.goss.a, "b": params.goss.b}
    return out


def params_from_json(config: dict) -> BoostParams:
    """Build BoostParams from a config mapping; omitted fields keep defaults."""
    known = {
        "n_trees", "learning_rate", "flavor", "lambda", "gamma", "max_depth",
        "max_leaves", "min_child_weight", "min_samples_leaf", "seed",
        "max_bins", "goss",
    }
    unknown = set(config) - known
    if unknown:
        raise ModelFormatError(f"unknown config fields: {sorted(unknown)}")
    tree_kwargs = {}
    for src, dst in (
        ("lambda", "lam"), ("gamma", "gamma"), ("max_depth", "max_depth"),
        ("max_leaves", "max_leaves"), ("min_child_weight", "min_child_weight"),
        ("min_samples_leaf", "min_samples_leaf"),
    ):
        if src in config:
            tree_kwargs[dst] = config[src]
    boost_kwargs = {}
    for key in ("n_trees", "learning_rate", "flavor", "seed", "max_bins"):
        if key in config:
            boost_kwargs[key] = config[key]
    goss = config.get("goss")
    if goss is not None:
        boost_kwargs["goss"] = GossParams(a=goss.get("a", 0.2), b=goss.get("b", 0.1))
    return BoostParams(tree=TreeParams(**tree_kwargs), **boost_kwargs)


def _tree_to_json(tree: Tree) -> dict:
    doc: dict = {
        "nodes": [
            {
                "id": node_id,
                "feature": node.feature,
                "threshold": node.threshold,
                "left": node.left,
                "right": node.right,
            }
            for node_id, node in sorted(tree.nodes.items())
        ],
        "leaves": [
            {"id": leaf_id, "weight": weight}
            for leaf_id, weight in sorted(tree.leaves.items())
        ],
    }
    if tree.flavor == OBLIVIOUS:
        doc["level_splits"] = [
            {"feature": f, "threshold": t} for f, t in (tree.level_splits or ())
        ]
    return doc


def _tree_from_json(doc: dict, flavor: str) -> Tree:
    try:
        nodes = {
            int(n["id"]): TreeNode(
                int(n["feature"]), float(n["threshold"]), int(n["left"]), int(n["right"])
            )
            for n in doc["nodes"]
        }
        leaves = {int(l["id"]): float(l["weight"]) for l in doc["leaves"]}
        level_splits = None
        if flavor == OBLIVIOUS:
            level_splits = tuple(
                (int(s["feature"]), float(s["threshold"]))
                for s in doc.get("level_splits", [])
            )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed tree record: {exc}") from None
    if not leaves:
        raise ModelFormatError("tree has no leaves")
    return Tree(flavor=flavor, nodes=nodes, leaves=leaves, level_splits=level_splits)


def save_model(model: BoostedModel, path: str) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "flavor": model.flavor,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "n_features": model.n_features,
        "trees": [_tree_to_json(t) for t in model.trees],
        "metadata": model.metadata,
    }
    _atomic_write_bytes(path, (json.dumps(doc, indent=2) + "\n").encode("utf-8"))


def load_model(path: str) -> BoostedModel:
    if not os.path.exists(path):
        raise ModelFormatError(f"model file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not a valid model file ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: not a model document")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format_version {version!r}")
    try:
        flavor = doc["flavor"]
        if flavor not in FLAVORS:
            raise ModelFormatError(f"{path}: unknown flavor {flavor!r}")
        trees = tuple(_tree_from_json(t, flavor) for t in doc["trees"])
        return BoostedModel(
            base_score=float(doc["base_score"]),
            trees=trees,
            learning_rate=float(doc["learning_rate"]),
            flavor=flavor,
            n_features=int(doc["n_features"]),
            metadata=doc.get("metadata", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: malformed model document ({exc})") from None
