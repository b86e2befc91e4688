"""Ordinary least squares on raw features or their full degree-2 expansion."""

from __future__ import annotations

import itertools
import warnings

import numpy as np


def poly2_terms(n_features: int) -> list[tuple[int, ...]]:
    """Monomials of the degree-2 expansion: linear, pairwise products, squares."""
    linear = [(j,) for j in range(n_features)]
    pairs = list(itertools.combinations(range(n_features), 2))
    squares = [(j, j) for j in range(n_features)]
    return linear + pairs + squares


class LinearRegressor:
    """OLS with intercept. Features are standardised before solving.

    ``degree=2`` fits the 5 + 10 + 5 term quadratic expansion. A rank-deficient
    design is solved by the minimum-norm (pseudo-inverse) solution and flagged
    in ``rank_deficient``.
    """

    def __init__(self, degree: int = 1, seed: int = 0):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        self.degree = degree
        self.seed = seed
        self.mean = np.empty(0)
        self.scale = np.empty(0)
        self.coef = np.empty(0)
        self.intercept = 0.0
        self.rank_deficient = False

    @property
    def kind(self) -> str:
        return "linear" if self.degree == 1 else "poly2"

    def _design(self, X) -> np.ndarray:
        Z = (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) / self.scale
        if self.degree == 1:
            return Z
        return np.column_stack([np.prod(Z[:, list(t)], axis=1) for t in poly2_terms(Z.shape[1])])

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        A = np.column_stack([np.ones(len(X)), self._design(X)])
        sol, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        self.rank_deficient = bool(rank < A.shape[1])
        if self.rank_deficient:
            warnings.warn(
                f"{self.kind}: design matrix rank {rank} < {A.shape[1]}; using pseudo-inverse",
                RuntimeWarning,
                stacklevel=2,
            )
        self.intercept = float(sol[0])
        self.coef = sol[1:]
        return self

    def predict(self, X) -> np.ndarray:
        return self.intercept + self._design(X) @ self.coef

    def raw_weights(self) -> np.ndarray:
        """Per-feature slopes in original units (degree 1 only)."""
        if self.degree != 1:
            raise ValueError("raw weights exist only for the linear model")
        return self.coef / self.scale

    def to_dict(self) -> dict:
        return {
            "degree": self.degree, "seed": self.seed, "mean": self.mean.tolist(),
            "scale": self.scale.tolist(), "coef": self.coef.tolist(),
            "intercept": self.intercept, "rank_deficient": self.rank_deficient,
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(d["degree"], d["seed"])
        m.mean = np.array(d["mean"], dtype=float)
        m.scale = np.array(d["scale"], dtype=float)
        m.coef = np.array(d["coef"], dtype=float)
        m.intercept = float(d["intercept"])
        m.rank_deficient = bool(d["rank_deficient"])
        return m
