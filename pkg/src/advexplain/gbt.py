"""Gradient-boosted decision trees for binary classification (logistic loss).

Trees are grown level by level with an exact greedy scan over midpoints of
sorted unique feature values, maximising the second-order gain

    0.5 * (GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2))

and leaves carry ``-G/(H+l2) * learning_rate``. The model output is an
additive margin (log-odds); probabilities are the logistic of the margin.
Node ``cover`` is the number of training samples that reached the node.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _backend
from .dataset import LabeledDataset
from .errors import DegenerateTrainingError, ModelFormatError

MODEL_FORMAT = "advexplain-gbt"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    n_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    min_child_cover: float = 1.0
    l2_leaf_penalty: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n_rounds) < 1:
            raise ValueError("n_rounds must be >= 1")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.min_child_cover < 0 or self.l2_leaf_penalty < 0:
            raise ValueError("min_child_cover and l2_leaf_penalty must be >= 0")


@dataclass(frozen=True, eq=False)
class Tree:
    """One regression tree in flat-array form; node 0 is the root.

    ``feature[k] == -1`` marks a leaf. Internal nodes send ``x[feature] <
    threshold`` to ``left``, everything else to ``right``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    def __post_init__(self):
        for name, dtype in (
            ("feature", np.int64),
            ("threshold", np.float64),
            ("left", np.int64),
            ("right", np.int64),
            ("value", np.float64),
            ("cover", np.float64),
        ):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.feature.shape[0]
        if n == 0:
            raise ValueError("a tree needs at least one node")
        if any(getattr(self, a).shape != (n,) for a in ("threshold", "left", "right", "value", "cover")):
            raise ValueError("tree arrays must have equal length")

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        def rec(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(rec(self.left[k]), rec(self.right[k]))

        return rec(0)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def validate(self, n_features: int) -> None:
        n = self.n_nodes
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        while stack:
            k = stack.pop()
            if seen[k]:
                raise ValueError(f"node {k} is reachable twice")
            seen[k] = True
            if not self.cover[k] > 0:
                raise ValueError(f"node {k} has non-positive cover {self.cover[k]}")
            f = self.feature[k]
            if f >= 0:
                if f >= n_features:
                    raise ValueError(f"node {k} splits on feature {f} >= n_features {n_features}")
                lo, hi = self.left[k], self.right[k]
                if not (0 <= lo < n and 0 <= hi < n):
                    raise ValueError(f"node {k} has child index out of range")
                if self.cover[lo] + self.cover[hi] != self.cover[k]:
                    raise ValueError(f"node {k} cover differs from the sum of its children")
                stack.extend((hi, lo))
        if not seen.all():
            raise ValueError("tree has unreachable nodes")

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            r = rows[internal]
            k = node[internal]
            go_left = X[r, f[internal]] < self.threshold[k]
            node[r] = np.where(go_left, self.left[k], self.right[k])


@dataclass(frozen=True)
class PackedTrees:
    """All trees concatenated, child indices global; the layout the kernels take."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    roots: np.ndarray
    max_depth: int


def _sigmoid(m):
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class TreeEnsemble:
    """Additive tree model: ``margin(x) = base_score + sum_t leaf_t(x)``."""

    def __init__(self, trees, base_score, learning_rate, n_features, feature_names=None, config=None):
        self.trees = tuple(trees)
        if not self.trees:
            raise ValueError("an ensemble needs at least one tree")
        self.base_score = float(base_score)
        self.learning_rate = float(learning_rate)
        self.n_features = int(n_features)
        self.feature_names = tuple(feature_names) if feature_names is not None else None
        if self.feature_names is not None and len(self.feature_names) != self.n_features:
            raise ValueError("feature_names length differs from n_features")
        self.config = config
        for t in self.trees:
            t.validate(self.n_features)
        self._packed = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def packed(self) -> PackedTrees:
        if self._packed is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])[:-1]
            left = []
            right = []
            for off, t in zip(offsets, self.trees):
                left.append(np.where(t.left >= 0, t.left + off, -1))
                right.append(np.where(t.right >= 0, t.right + off, -1))
            cat = lambda attr: np.ascontiguousarray(np.concatenate([getattr(t, attr) for t in self.trees]))
            self._packed = PackedTrees(
                feature=cat("feature"),
                threshold=cat("threshold"),
                left=np.ascontiguousarray(np.concatenate(left), dtype=np.int64),
                right=np.ascontiguousarray(np.concatenate(right), dtype=np.int64),
                value=cat("value"),
                cover=cat("cover"),
                roots=np.ascontiguousarray(offsets, dtype=np.int64),
                max_depth=max(t.depth() for t in self.trees),
            )
        return self._packed

    def _check_input(self, x):
        X = np.asarray(x, dtype=np.float64)
        single = X.ndim == 1
        X = np.ascontiguousarray(X.reshape(1, -1) if single else X)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {np.shape(x)}")
        return X, single

    def predict_margin(self, x, backend=None):
        """Margin (log-odds) for one feature vector (returns float) or a matrix (returns array)."""
        X, single = self._check_input(x)
        k = _backend.kernels if backend is None else _backend.get(backend)
        p = self.packed()
        out = k.predict_margin(p.feature, p.threshold, p.left, p.right, p.value, p.roots, X, self.base_score)
        return float(out[0]) if single else out

    def predict_proba(self, x):
        m = self.predict_margin(x)
        out = _sigmoid(m)
        return float(out) if np.ndim(m) == 0 else out

    def predict_class(self, x, threshold: float = 0.5):
        if not 0.0 < threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {threshold}")
        p = self.predict_proba(x)
        if np.ndim(p) == 0:
            return int(p >= threshold)
        return (p >= threshold).astype(np.int8)

    def leaf_values(self, x) -> np.ndarray:
        """Per-tree routed leaf values, shape (n_rows, n_trees)."""
        X, _ = self._check_input(x)
        return np.stack([t.value[t.apply(X)] for t in self.trees], axis=1)

    # ---- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        trees = []
        for t in self.trees:
            nodes = []
            for k in range(t.n_nodes):
                if t.feature[k] < 0:
                    nodes.append({"leaf": float(t.value[k]), "cover": float(t.cover[k])})
                else:
                    nodes.append(
                        {
                            "feature": int(t.feature[k]),
                            "threshold": float(t.threshold[k]),
                            "left": int(t.left[k]),
                            "right": int(t.right[k]),
                            "cover": float(t.cover[k]),
                        }
                    )
            trees.append(nodes)
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names) if self.feature_names is not None else None,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "config": asdict(self.config) if self.config is not None else None,
            "trees": trees,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, doc) -> "TreeEnsemble":
        if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not an advexplain model file")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"model version {doc.get('version')!r} is not supported (expected {MODEL_VERSION})")
        try:
            trees = []
            for nodes in doc["trees"]:
                n = len(nodes)
                feature = np.full(n, -1, dtype=np.int64)
                threshold = np.zeros(n)
                left = np.full(n, -1, dtype=np.int64)
                right = np.full(n, -1, dtype=np.int64)
                value = np.zeros(n)
                cover = np.zeros(n)
                for k, nd in enumerate(nodes):
                    cover[k] = nd["cover"]
                    if "leaf" in nd:
                        value[k] = nd["leaf"]
                    else:
                        feature[k] = nd["feature"]
                        threshold[k] = nd["threshold"]
                        left[k] = nd["left"]
                        right[k] = nd["right"]
                trees.append(Tree(feature, threshold, left, right, value, cover))
            config = TrainConfig(**doc["config"]) if doc.get("config") else None
            return cls(
                trees,
                doc["base_score"],
                doc["learning_rate"],
                doc["n_features"],
                doc.get("feature_names"),
                config,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"corrupt model file: {exc}") from exc

    @classmethod
    def loads(cls, text: str) -> "TreeEnsemble":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"corrupt model file: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def logloss(y, margin) -> float:
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(margin, dtype=np.float64)
    # log(1 + exp(-m)) for y=1, log(1 + exp(m)) for y=0
    return float(np.mean(np.logaddexp(0.0, np.where(y == 1, -m, m))))


def _leaf_value(G, H, config):
    denom = H + config.l2_leaf_penalty
    if denom <= 0:
        return 0.0
    return -G / denom * config.learning_rate


def _node_totals(node_of, n_nodes, g, h):
    G = np.zeros(n_nodes)
    H = np.zeros(n_nodes)
    C = np.zeros(n_nodes)
    for node in range(n_nodes):
        idx = np.flatnonzero(node_of == node)
        if idx.size:
            G[node] = np.cumsum(g[idx])[-1]
            H[node] = np.cumsum(h[idx])[-1]
            C[node] = float(idx.size)
    return G, H, C


def _grow_tree(X, sorted_idx, g, h, config, kernels):
    n = X.shape[0]
    feature, threshold, left, right, value, cover = [-1], [0.0], [-1], [-1], [0.0], [float(n)]
    tree_node = np.zeros(n, dtype=np.int64)  # tree node currently holding each sample
    frontier = [0]
    for depth in range(config.max_depth + 1):
        if not frontier:
            break
        local = np.full(len(feature), -1, dtype=np.int64)
        local[frontier] = np.arange(len(frontier))
        node_of = np.ascontiguousarray(local[tree_node])
        if depth == config.max_depth:
            G, H, C = _node_totals(node_of, len(frontier), g, h)
            bf = np.full(len(frontier), -1)
        else:
            bf, bt, _, G, H, C = kernels.level_best_splits(
                X, sorted_idx, node_of, len(frontier), g, h,
                float(config.l2_leaf_penalty), float(config.min_child_cover),
            )
        next_frontier = []
        for j, node in enumerate(frontier):
            cover[node] = float(C[j])
            if bf[j] < 0:
                value[node] = _leaf_value(G[j], H[j], config)
                continue
            f, thr = int(bf[j]), float(bt[j])
            lo, hi = len(feature), len(feature) + 1
            feature[node], threshold[node], left[node], right[node] = f, thr, lo, hi
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                cover.append(0.0)
            members = node_of == j
            go_left = members & (X[:, f] < thr)
            tree_node[go_left] = lo
            tree_node[members & ~go_left] = hi
            next_frontier.extend((lo, hi))
        frontier = next_frontier
    tree = Tree(feature, threshold, left, right, value, cover)
    return tree, tree_node


def train(data: LabeledDataset, config: TrainConfig | None = None, backend: str | None = None) -> TreeEnsemble:
    """Fit ``config.n_rounds`` trees by Newton boosting on logistic loss.

    Deterministic: no sampling is involved, ``config.seed`` is only echoed.
    """
    config = config or TrainConfig()
    kernels = _backend.kernels if backend is None else _backend.get(backend)
    if len(data) < 2:
        raise DegenerateTrainingError("training needs at least 2 samples")
    n_neg, n_pos = data.class_counts()
    if n_neg == 0 or n_pos == 0:
        raise DegenerateTrainingError("training data contains a single class")

    X = np.ascontiguousarray(data.x, dtype=np.float64)
    y = data.y.astype(np.float64)
    rate = n_pos / len(data)
    base_score = math.log(rate / (1.0 - rate))
    sorted_idx = np.ascontiguousarray(
        np.stack([np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]), dtype=np.int64
    )

    margin = np.full(len(data), base_score)
    trees = []
    for _ in range(config.n_rounds):
        p = _sigmoid(margin)
        g = np.ascontiguousarray(p - y)
        h = np.ascontiguousarray(p * (1.0 - p))
        tree, leaf_of = _grow_tree(X, sorted_idx, g, h, config, kernels)
        trees.append(tree)
        margin = margin + tree.value[leaf_of]
    return TreeEnsemble(trees, base_score, config.learning_rate, X.shape[1], data.schema.names, config)
