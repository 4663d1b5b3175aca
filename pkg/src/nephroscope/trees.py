"""Axis-aligned CART trees: Gini classification and SSE regression variants.

Splits send value <= threshold left, > threshold right; binary features use
a 0.5 threshold so 0 goes left and 1 right. Numeric split candidates are the
midpoints between consecutive distinct sorted values.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


@dataclass
class TreeNode:
    """Internal node (feature >= 0) or leaf (feature == -1)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    n_neg: int = 0
    n_pos: int = 0
    value: float = 0.0  # leaf payload: P(CKD) for classifiers, increment for boosters

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"n0": self.n_neg, "n1": self.n_pos, "v": self.value}
        return {
            "f": self.feature,
            "t": self.threshold,
            "l": self.left.to_dict(),
            "r": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "f" not in d:
            return cls(n_neg=d["n0"], n_pos=d["n1"], value=d["v"])
        return cls(
            feature=d["f"],
            threshold=d["t"],
            left=cls.from_dict(d["l"]),
            right=cls.from_dict(d["r"]),
        )


def _best_split_gini(X, y, rows, feats, msl):
    """Lowest weighted Gini over midpoint candidates; ties go to the lowest
    feature index then lowest threshold. Returns (impurity, feat, thr)."""

    m = rows.size
    best = (np.inf, -1, 0.0)
    yr = y[rows]
    for f in feats:
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sy = yr[order]
        pos_prefix = np.cumsum(sy)
        left_n = np.arange(1, m)
        valid = (sv[:-1] != sv[1:]) & (left_n >= msl) & (m - left_n >= msl)
        if not valid.any():
            continue
        nl = left_n[valid].astype(float)
        nr = m - nl
        pl = pos_prefix[:-1][valid].astype(float)
        pr = pos_prefix[-1] - pl
        gl = 1.0 - (pl / nl) ** 2 - ((nl - pl) / nl) ** 2
        gr = 1.0 - (pr / nr) ** 2 - ((nr - pr) / nr) ** 2
        w = (nl * gl + nr * gr) / m
        i = int(np.argmin(w))
        if w[i] < best[0] - _EPS:
            pos = np.flatnonzero(valid)[i]
            best = (float(w[i]), int(f), float((sv[pos] + sv[pos + 1]) / 2.0))
    return best


def _best_split_sse(X, g, rows, feats, msl):
    """Maximal SSE reduction split for regression targets g."""

    m = rows.size
    gr_all = g[rows]
    total = gr_all.sum()
    best_gain = _EPS
    best = (-1, 0.0)
    for f in feats:
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sg = gr_all[order]
        csum = np.cumsum(sg)
        left_n = np.arange(1, m)
        valid = (sv[:-1] != sv[1:]) & (left_n >= msl) & (m - left_n >= msl)
        if not valid.any():
            continue
        nl = left_n[valid].astype(float)
        nr = m - nl
        ls = csum[:-1][valid]
        rs = total - ls
        gain = ls * ls / nl + rs * rs / nr - total * total / m
        i = int(np.argmax(gain))
        if gain[i] > best_gain + _EPS:
            best_gain = float(gain[i])
            pos = np.flatnonzero(valid)[i]
            best = (int(f), float((sv[pos] + sv[pos + 1]) / 2.0))
    return best


def _pick_features(n_features: int, max_features: int | None, rng) -> np.ndarray:
    if max_features is None or max_features >= n_features:
        return np.arange(n_features)
    picked = rng.choice(n_features, size=max_features, replace=False)
    return np.sort(picked)


def fit_classification_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> TreeNode:
    """Grow a Gini CART tree; leaves carry class counts and P(positive)."""

    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if min_samples_leaf > X.shape[0]:
        raise ValueError(
            f"min_samples_leaf={min_samples_leaf} exceeds dataset size {X.shape[0]}"
        )
    rng = rng or np.random.default_rng(0)
    n_features = X.shape[1]

    root_rows = np.arange(X.shape[0])
    root = TreeNode()
    stack = [(root, root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        pos = int(y[rows].sum())
        n = rows.size
        node.n_neg, node.n_pos, node.value = n - pos, pos, pos / n
        if (
            pos == 0
            or pos == n
            or n < 2 * min_samples_leaf
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        feats = _pick_features(n_features, max_features, rng)
        p = pos / n
        parent_gini = 1.0 - p * p - (1.0 - p) ** 2
        imp, f, thr = _best_split_gini(X, y, rows, feats, min_samples_leaf)
        if f < 0 or imp >= parent_gini - _EPS:
            continue
        mask = X[rows, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.left, rows[mask], depth + 1))
        stack.append((node.right, rows[~mask], depth + 1))
    return root


def fit_regression_tree(
    X: np.ndarray,
    target: np.ndarray,
    leaf_value: callable,
    max_depth: int = 3,
    min_samples_leaf: int = 1,
) -> TreeNode:
    """Grow an SSE regression tree; each leaf's value is leaf_value(rows)."""

    root = TreeNode()
    stack = [(root, np.arange(X.shape[0]), 0)]
    feats = np.arange(X.shape[1])
    while stack:
        node, rows, depth = stack.pop()
        node.n_neg = 0
        node.n_pos = rows.size
        node.value = float(leaf_value(rows))
        if depth >= max_depth or rows.size < 2 * min_samples_leaf:
            continue
        f, thr = _best_split_sse(X, target, rows, feats, min_samples_leaf)
        if f < 0:
            continue
        mask = X[rows, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.left, rows[mask], depth + 1))
        stack.append((node.right, rows[~mask], depth + 1))
    return root


def predict_one(root: TreeNode, x: np.ndarray) -> float:
    node = root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


@dataclass
class FlatTree:
    """Array form of a tree for vectorized batch traversal."""

    feature: np.ndarray  # int32, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_node(cls, root: TreeNode) -> "FlatTree":
        feature, threshold, left, right, value = [], [], [], [], []

        def visit(node: TreeNode) -> int:
            i = len(feature)
            feature.append(node.feature)
            threshold.append(node.threshold)
            left.append(-1)
            right.append(-1)
            value.append(node.value)
            if not node.is_leaf:
                left[i] = visit(node.left)
                right[i] = visit(node.right)
            return i

        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 10000))
        try:
            visit(root)
        finally:
            sys.setrecursionlimit(old)
        return cls(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=float),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value, dtype=float),
        )

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        cur = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[cur]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            nodes = cur[active]
            go_left = X[active, feat[active]] <= self.threshold[nodes]
            cur[active] = np.where(go_left, self.left[nodes], self.right[nodes])
        return self.value[cur]


@dataclass(frozen=True)
class LeafPath:
    """One root-to-leaf path with per-feature merged intervals (lo, hi]."""

    value: float
    features: np.ndarray
    lows: np.ndarray
    highs: np.ndarray


def leaf_paths(root: TreeNode) -> list[LeafPath]:
    """Enumerate leaves with their merged per-feature admission intervals."""

    out: list[LeafPath] = []
    stack: list[tuple[TreeNode, dict[int, tuple[float, float]]]] = [(root, {})]
    while stack:
        node, box = stack.pop()
        if node.is_leaf:
            feats = np.fromiter(sorted(box), dtype=np.int64, count=len(box))
            lows = np.array([box[f][0] for f in feats], dtype=float)
            highs = np.array([box[f][1] for f in feats], dtype=float)
            out.append(LeafPath(value=node.value, features=feats, lows=lows, highs=highs))
            continue
        f, t = node.feature, node.threshold
        lo, hi = box.get(f, (-np.inf, np.inf))
        lbox = dict(box)
        lbox[f] = (lo, min(hi, t))
        rbox = dict(box)
        rbox[f] = (max(lo, t), hi)
        stack.append((node.left, lbox))
        stack.append((node.right, rbox))
    return out


def tree_features(root: TreeNode) -> set[int]:
    """Indices of features the tree actually splits on."""

    seen: set[int] = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if not node.is_leaf:
            seen.add(node.feature)
            stack.append(node.left)
            stack.append(node.right)
    return seen
