"""Exact interventional SHAP values for the tree surrogates.

For a single tree, an instance ``x`` and one background row ``z``, the
hybrid input ``(x_S, z_rest)`` reaches leaf ``l`` iff every feature on the
leaf's path is satisfied by whichever of ``x``/``z`` supplies it. Features
satisfied only by ``x`` must be in ``S`` (set A), those satisfied only by
``z`` must be outside (set B). The Shapley value of that indicator game is
``+v (|A|-1)!|B|!/(|A|+|B|)!`` for members of A and ``-v |A|!(|B|-1)!/(|A|+|B|)!``
for members of B. Satisfaction patterns are bitmasks, so each leaf reduces
to a small ``(x pattern, z pattern)`` table weighted by background counts.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientDataError, UnsupportedModelError
from .handover import CopVector
from .seeding import substream
from .surrogate import FEATURES, TREE_KINDS, TrainedModel, features
from .surrogate.tree import LEAF, RegressionTree

BACKGROUND_SIZE = 200


@dataclass(frozen=True)
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    instance: CopVector | np.ndarray
    prediction: float


def leaf_boxes(tree: RegressionTree, n_features: int):
    """Leaf ids with the ``(lo, hi]`` box each leaf covers, per feature."""
    leaves, los, his = [], [], []
    stack = [(0, np.full(n_features, -np.inf), np.full(n_features, np.inf))]
    while stack:
        node, lo, hi = stack.pop()
        f = tree.feature[node]
        if f == LEAF:
            leaves.append(node)
            los.append(lo)
            his.append(hi)
            continue
        thr = tree.threshold[node]
        lhi = hi.copy()
        lhi[f] = min(hi[f], thr)
        rlo = lo.copy()
        rlo[f] = max(lo[f], thr)
        stack.append((tree.right[node], rlo, hi))
        stack.append((tree.left[node], lo, lhi))
    return np.array(leaves, dtype=np.int64), np.array(los), np.array(his)


@lru_cache(maxsize=16)
def _weight_table(n_features: int) -> np.ndarray:
    """``T[px, pz, i]``: Shapley value of feature i for a unit leaf, given patterns."""
    m = 1 << n_features
    full = m - 1
    T = np.zeros((m, m, n_features))
    for px in range(m):
        for pz in range(m):
            if ~px & ~pz & full:
                continue
            a_set = px & ~pz & full
            b_set = ~px & pz & full
            a, b = bin(a_set).count("1"), bin(b_set).count("1")
            if a + b == 0:
                continue
            denom = factorial(a + b)
            for i in range(n_features):
                bit = 1 << i
                if a_set & bit:
                    T[px, pz, i] = factorial(a - 1) * factorial(b) / denom
                elif b_set & bit:
                    T[px, pz, i] = -factorial(a) * factorial(b - 1) / denom
    T.setflags(write=False)
    return T


def _patterns(X: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    inside = (X[:, None, :] > lo[None]) & (X[:, None, :] <= hi[None])
    weights = 1 << np.arange(X.shape[1])
    return inside.astype(np.int64) @ weights


def tree_shap(tree: RegressionTree, X, background) -> tuple[float, np.ndarray]:
    """Exact interventional SHAP of one tree; returns ``(base, phi[n, p])``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(background, dtype=float))
    p = X.shape[1]
    full = (1 << p) - 1
    leaves, lo, hi = leaf_boxes(tree, p)
    vals = tree.value[leaves]
    px = _patterns(X, lo, hi)  # (n, L)
    pz = _patterns(Z, lo, hi)  # (m, L)
    n_leaves = len(leaves)
    cnt = np.zeros((n_leaves, full + 1))
    np.add.at(cnt, (np.broadcast_to(np.arange(n_leaves), pz.shape), pz), 1.0)
    cnt /= len(Z)
    base = float(vals @ cnt[:, full])
    M = np.einsum("lz,xzi->lxi", cnt, _weight_table(p))  # (L, 2^p, p)
    phi = np.einsum("l,nli->ni", vals, M[np.arange(n_leaves)[None, :], px])
    return base, phi


def _check_kind(model_or_reg):
    kind = getattr(model_or_reg, "kind", None)
    if isinstance(kind, str) and kind not in TREE_KINDS and kind != "linear":
        raise UnsupportedModelError(f"SHAP is not implemented for model kind {kind!r}")


def regressor_shap(reg, X, background) -> tuple[float, np.ndarray]:
    """SHAP for a fitted tree-family or linear regressor; ``(base, phi[n, p])``."""
    _check_kind(reg)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(background, dtype=float))
    if reg.kind == "linear":
        w = reg.raw_weights()
        mu = Z.mean(axis=0)
        return float(reg.predict(mu[None])[0]), (X - mu) * w
    base = float(reg.offset)
    phi = np.zeros_like(X)
    for weight, tree in reg.members():
        b, ph = tree_shap(tree, X, Z)
        base += weight * b
        phi += weight * ph
    return base, phi


def background_sample(rows_or_X, size: int = BACKGROUND_SIZE, seed: int = 0) -> np.ndarray:
    X = rows_or_X if isinstance(rows_or_X, np.ndarray) else features(rows_or_X)
    if len(X) <= size:
        return X
    idx = np.sort(substream(seed, "shap-background").choice(len(X), size=size, replace=False))
    return X[idx]


def shap_values(model: TrainedModel, instance: CopVector, background, target: str = "edge_rsrp") -> ShapExplanation:
    """Exact SHAP decomposition of ``model``'s ``target`` prediction at ``instance``."""
    if model.kind.name not in TREE_KINDS and model.kind.name != "linear":
        raise UnsupportedModelError(f"SHAP is not implemented for model kind {model.kind.name!r}")
    reg = model.regressors[target]
    Z = background if isinstance(background, np.ndarray) else features(background)
    x = instance.as_array()[None] if isinstance(instance, CopVector) else np.atleast_2d(instance)
    base, phi = regressor_shap(reg, x, Z)
    return ShapExplanation(base, phi[0], instance, float(reg.predict(x)[0]))


@dataclass(frozen=True)
class ImportanceSummary:
    """Mean |SHAP| per (kpi, feature)."""

    values: dict  # kpi -> np.ndarray over FEATURES

    def ranked(self, kpi: str) -> list[tuple[str, float]]:
        v = self.values[kpi]
        order = sorted(range(len(v)), key=lambda i: (-v[i], i))
        return [(FEATURES[i], float(v[i])) for i in order]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kpi", "feature", "mean_abs_shap"])
        for kpi in self.values:
            for feat, val in self.ranked(kpi):
                w.writerow([kpi, feat, repr(val)])
        return buf.getvalue()


def mean_abs_shap(model: TrainedModel, dataset, targets: Sequence[str] | None = None,
                  background=None, seed: int = 0) -> ImportanceSummary:
    """Mean absolute SHAP value of every feature over ``dataset``, per KPI."""
    X = dataset if isinstance(dataset, np.ndarray) else features(dataset)
    if len(X) == 0:
        raise InsufficientDataError("empty dataset")
    Z = background_sample(X if background is None else background, seed=seed)
    names = tuple(targets) if targets is not None else model.targets
    out = {}
    for name in names:
        _, phi = regressor_shap(model.regressors[name], X, Z)
        out[name] = np.abs(phi).mean(axis=0)
    return ImportanceSummary(out)


def shapley_brute_force(f: Callable[[np.ndarray], np.ndarray], x, background) -> tuple[float, np.ndarray]:
    """Interventional Shapley values by enumerating every feature subset.

    ``f`` maps an ``(n, p)`` matrix to ``n`` predictions. Exponential in ``p``;
    kept as an independent check of :func:`tree_shap`.
    """
    x = np.asarray(x, dtype=float).ravel()
    Z = np.atleast_2d(np.asarray(background, dtype=float))
    p = len(x)
    value = {}
    for r in range(p + 1):
        for S in itertools.combinations(range(p), r):
            H = Z.copy()
            H[:, list(S)] = x[list(S)]
            value[frozenset(S)] = float(np.mean(f(H)))
    phi = np.zeros(p)
    for i in range(p):
        others = [j for j in range(p) if j != i]
        for r in range(p):
            w = factorial(r) * factorial(p - r - 1) / factorial(p)
            for S in itertools.combinations(others, r):
                s = frozenset(S)
                phi[i] += w * (value[s | {i}] - value[s])
    return value[frozenset()], phi
