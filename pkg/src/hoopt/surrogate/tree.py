"""CART regression trees stored as flat node arrays.

One builder serves both plain CART (``l2_lambda == 0``: leaf = mean,
split gain = variance reduction) and second-order boosting trees
(``l2_lambda > 0``: targets are negative gradients, leaf = S / (n + lambda),
gain = S_L^2/(n_L+lambda) + S_R^2/(n_R+lambda) - S^2/(n+lambda)).

Splits send ``x <= threshold`` left, and thresholds are always training
values, so a strictly increasing rescaling of a feature maps the fitted tree
onto the tree fitted on the rescaled data.
"""

from __future__ import annotations

import numpy as np

LEAF = -1


class RegressionTree:
    def __init__(self, max_depth: int = 8, min_leaf: int = 5, l2_lambda: float = 0.0,
                 max_features: int | None = None):
        if max_depth < 0 or min_leaf < 1 or l2_lambda < 0:
            raise ValueError("max_depth >= 0, min_leaf >= 1 and l2_lambda >= 0 required")
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.l2_lambda = l2_lambda
        self.max_features = max_features
        self.feature = np.empty(0, dtype=np.int64)
        self.threshold = np.empty(0)
        self.left = np.empty(0, dtype=np.int64)
        self.right = np.empty(0, dtype=np.int64)
        self.value = np.empty(0)
        self.n_samples = np.empty(0, dtype=np.int64)
        self.depth = 0

    # -- fitting ------------------------------------------------------------------------

    def fit(self, X, y, rng: np.random.Generator | None = None) -> "RegressionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
            raise ValueError("X must be (n, p) and y (n,) with n > 0")
        n, p = X.shape
        n_try = p if self.max_features is None else min(self.max_features, p)
        uniq = []
        codes = np.empty((p, n), dtype=np.int64)
        for j in range(p):
            u, inv = np.unique(X[:, j], return_inverse=True)
            uniq.append(u)
            codes[j] = inv

        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def new_node(idx) -> int:
            feature.append(LEAF)
            threshold.append(np.nan)
            left.append(LEAF)
            right.append(LEAF)
            value.append(self._leaf_value(y[idx]))
            count.append(len(idx))
            return len(feature) - 1

        root = new_node(np.arange(n))
        stack = [(root, np.arange(n), 0)]
        max_seen = 0
        while stack:
            node, idx, depth = stack.pop()
            max_seen = max(max_seen, depth)
            if depth >= self.max_depth or len(idx) < 2 * self.min_leaf:
                continue
            feats = np.arange(p)
            if n_try < p:
                feats = np.sort(rng.choice(p, size=n_try, replace=False))
            split = self._best_split(y[idx], codes[:, idx], [len(u) for u in uniq], feats)
            if split is None:
                continue
            j, b = split
            mask = codes[j, idx] <= b
            li, ri = idx[mask], idx[~mask]
            feature[node] = int(j)
            threshold[node] = float(uniq[j][b])
            left[node] = new_node(li)
            right[node] = new_node(ri)
            # right pushed first so the left subtree gets the lower node ids
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold, dtype=float)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=float)
        self.n_samples = np.array(count, dtype=np.int64)
        self.depth = max_seen
        return self

    def _leaf_value(self, y: np.ndarray) -> float:
        if self.l2_lambda == 0:
            return float(np.mean(y))
        return float(np.sum(y) / (len(y) + self.l2_lambda))

    def _best_split(self, y, codes, n_bins, feats):
        lam = self.l2_lambda
        if lam == 0:
            if np.ptp(y) == 0:
                return None
            r = y - np.mean(y)
        else:
            r = y
        n = len(r)
        s_tot = float(np.sum(r))
        parent = s_tot * s_tot / (n + lam)
        best_gain, best = 0.0, None
        for j in feats:
            cnt = np.bincount(codes[j], minlength=n_bins[j])
            sums = np.bincount(codes[j], weights=r, minlength=n_bins[j])
            n_l = np.cumsum(cnt)[:-1]
            s_l = np.cumsum(sums)[:-1]
            n_r = n - n_l
            s_r = s_tot - s_l
            ok = (n_l >= self.min_leaf) & (n_r >= self.min_leaf)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = s_l * s_l / (n_l + lam) + s_r * s_r / (n_r + lam) - parent
            gain = np.where(ok, gain, -np.inf)
            b = int(np.argmax(gain))
            if gain[b] > best_gain:
                best_gain, best = float(gain[b]), (int(j), b)
        # gains at round-off level are not real improvements
        scale = float(np.sum(r * r)) if lam == 0 else parent + float(np.sum(r * r))
        if best is None or best_gain <= 1e-12 * scale:
            return None
        return best

    # -- inference ----------------------------------------------------------------------

    def apply(self, X) -> np.ndarray:
        """Index of the leaf reached by every row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        for _ in range(self.depth):
            f = self.feature[node]
            internal = f != LEAF
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    # -- persistence --------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "l2_lambda": self.l2_lambda,
            "max_features": self.max_features,
            "depth": self.depth,
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        t = cls(d["max_depth"], d["min_leaf"], d["l2_lambda"], d["max_features"])
        t.depth = int(d["depth"])
        t.feature = np.array(d["feature"], dtype=np.int64)
        t.threshold = np.array([np.nan if v is None else v for v in d["threshold"]], dtype=float)
        t.left = np.array(d["left"], dtype=np.int64)
        t.right = np.array(d["right"], dtype=np.int64)
        t.value = np.array(d["value"], dtype=float)
        t.n_samples = np.array(d["n_samples"], dtype=np.int64)
        return t

    @classmethod
    def from_arrays(cls, feature, threshold, left, right, value) -> "RegressionTree":
        """Build a tree directly from node arrays (used for synthetic trees)."""
        t = cls(max_depth=len(feature))
        t.feature = np.asarray(feature, dtype=np.int64)
        t.threshold = np.asarray(threshold, dtype=float)
        t.left = np.asarray(left, dtype=np.int64)
        t.right = np.asarray(right, dtype=np.int64)
        t.value = np.asarray(value, dtype=float)
        t.n_samples = np.zeros(len(feature), dtype=np.int64)
        t.depth = _depth(t.left, t.right)
        return t


def _depth(left, right, node: int = 0) -> int:
    if left[node] == LEAF:
        return 0
    return 1 + max(_depth(left, right, left[node]), _depth(left, right, right[node]))
