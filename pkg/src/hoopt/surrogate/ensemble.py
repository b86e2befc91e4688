"""Bagged CART forests and second-order gradient-boosted trees."""

from __future__ import annotations

import numpy as np

from .tree import RegressionTree


class DecisionTreeRegressor:
    kind = "tree"

    def __init__(self, max_depth: int = 8, min_leaf: int = 5, seed: int = 0):
        self.params = {"max_depth": max_depth, "min_leaf": min_leaf}
        self.seed = seed
        self.tree: RegressionTree | None = None

    def fit(self, X, y):
        rng = np.random.default_rng(self.seed)
        self.tree = RegressionTree(**self.params).fit(X, y, rng)
        return self

    def predict(self, X) -> np.ndarray:
        return self.tree.predict(np.atleast_2d(X))

    def members(self):
        """``(weight, tree)`` pairs whose weighted sum plus ``offset`` is the prediction."""
        return [(1.0, self.tree)]

    offset = 0.0

    def to_dict(self) -> dict:
        return {"params": self.params, "seed": self.seed, "trees": [self.tree.to_dict()]}

    @classmethod
    def from_dict(cls, d):
        m = cls(**d["params"], seed=d["seed"])
        m.tree = RegressionTree.from_dict(d["trees"][0])
        return m


class RandomForestRegressor:
    """Average of CART trees on bootstrap resamples with per-split feature sampling."""

    kind = "forest"

    def __init__(self, n_trees: int = 100, max_features: int = 3, bootstrap: bool = True,
                 max_depth: int = 8, min_leaf: int = 5, seed: int = 0):
        if n_trees < 1 or max_features < 1:
            raise ValueError("n_trees and max_features must be positive")
        self.params = {
            "n_trees": n_trees, "max_features": max_features, "bootstrap": bootstrap,
            "max_depth": max_depth, "min_leaf": min_leaf,
        }
        self.seed = seed
        self.trees: list[RegressionTree] = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        p = self.params
        seeds = np.random.SeedSequence(self.seed).spawn(p["n_trees"])
        self.trees = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            idx = rng.integers(0, n, size=n) if p["bootstrap"] else np.arange(n)
            tree = RegressionTree(p["max_depth"], p["min_leaf"], 0.0, p["max_features"])
            self.trees.append(tree.fit(X[idx], y[idx], rng))
        return self

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def members(self):
        w = 1.0 / len(self.trees)
        return [(w, t) for t in self.trees]

    offset = 0.0

    def to_dict(self) -> dict:
        return {"params": self.params, "seed": self.seed, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        m = cls(**d["params"], seed=d["seed"])
        m.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return m


class GradientBoostingRegressor:
    """Squared-loss boosting with shrinkage and L2-regularised leaf weights -G/(H+lambda)."""

    kind = "gbt"

    def __init__(self, n_rounds: int = 200, max_depth: int = 4, learning_rate: float = 0.1,
                 l2_lambda: float = 1.0, min_leaf: int = 1, seed: int = 0):
        if n_rounds < 0 or not learning_rate > 0 or l2_lambda < 0:
            raise ValueError("n_rounds >= 0, learning_rate > 0, l2_lambda >= 0 required")
        self.params = {
            "n_rounds": n_rounds, "max_depth": max_depth, "learning_rate": learning_rate,
            "l2_lambda": l2_lambda, "min_leaf": min_leaf,
        }
        self.seed = seed
        self.base_score = 0.0
        self.trees: list[RegressionTree] = []
        self.train_loss: list[float] = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        p = self.params
        self.base_score = float(np.mean(y))
        pred = np.full(len(y), self.base_score)
        self.trees = []
        self.train_loss = [float(np.mean((y - pred) ** 2))]
        for _ in range(p["n_rounds"]):
            # residuals are the negative gradients; hessians are all one
            tree = RegressionTree(p["max_depth"], p["min_leaf"], p["l2_lambda"]).fit(X, y - pred)
            pred = pred + p["learning_rate"] * tree.predict(X)
            self.trees.append(tree)
            self.train_loss.append(float(np.mean((y - pred) ** 2)))
        return self

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), self.base_score)
        lr = self.params["learning_rate"]
        for t in self.trees:
            out += lr * t.predict(X)
        return out

    def members(self):
        lr = self.params["learning_rate"]
        return [(lr, t) for t in self.trees]

    @property
    def offset(self) -> float:
        return self.base_score

    def to_dict(self) -> dict:
        return {
            "params": self.params, "seed": self.seed, "base_score": self.base_score,
            "trees": [t.to_dict() for t in self.trees], "train_loss": self.train_loss,
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(**d["params"], seed=d["seed"])
        m.base_score = float(d["base_score"])
        m.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        m.train_loss = list(d.get("train_loss", []))
        return m
