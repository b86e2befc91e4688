"""Surrogate regressors mapping the five handover parameters to each KPI."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import InsufficientDataError, ParseError
from ..handover import CopVector
from ..io import atomic_write_text
from .ensemble import DecisionTreeRegressor, GradientBoostingRegressor, RandomForestRegressor
from .linear import LinearRegressor
from .tree import RegressionTree

FEATURES = CopVector.field_names()
KPI_TARGETS = ("edge_rsrp", "hosr", "load_factor")
BAND_TARGETS = ("load_1700", "load_2100", "load_3500")
MODEL_KINDS = ("linear", "poly2", "tree", "forest", "gbt")
TREE_KINDS = ("tree", "forest", "gbt")

DEFAULT_PARAMS = {
    "linear": {},
    "poly2": {},
    "tree": {"max_depth": 8, "min_leaf": 5},
    "forest": {"n_trees": 100, "max_features": 3, "bootstrap": True, "max_depth": 8, "min_leaf": 5},
    "gbt": {"n_rounds": 200, "max_depth": 4, "learning_rate": 0.1, "l2_lambda": 1.0, "min_leaf": 1},
}

MODEL_FORMAT = "hoopt-model/1"


@dataclass(frozen=True)
class ModelKind:
    name: str
    params: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.name not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.name!r}; expected one of {MODEL_KINDS}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.name])
        if unknown:
            raise ValueError(f"{self.name}: unknown hyperparameters {sorted(unknown)}")
        merged = {**DEFAULT_PARAMS[self.name], **self.params}
        for k, v in merged.items():
            if isinstance(v, bool):
                continue
            if not v > 0 and not (k == "n_rounds" and v == 0):
                raise ValueError(f"{self.name}: hyperparameter {k} must be positive")
        if merged.get("max_features", 1) > len(FEATURES):
            raise ValueError(f"max_features must be <= {len(FEATURES)}")
        object.__setattr__(self, "params", merged)

    def build(self, seed: int = 0):
        p = self.params
        if self.name == "linear":
            return LinearRegressor(1, seed)
        if self.name == "poly2":
            return LinearRegressor(2, seed)
        if self.name == "tree":
            return DecisionTreeRegressor(seed=seed, **p)
        if self.name == "forest":
            return RandomForestRegressor(seed=seed, **p)
        return GradientBoostingRegressor(seed=seed, **p)


def features(rows_or_cops) -> np.ndarray:
    """Feature matrix in CopVector field order."""
    cops = [getattr(r, "cop", r) for r in rows_or_cops]
    if not cops:
        return np.empty((0, len(FEATURES)))
    return np.array([c.as_array() for c in cops])


def targets(rows, name: str) -> np.ndarray:
    return np.array([r.target(name) for r in rows], dtype=float)


@dataclass
class TrainedModel:
    kind: ModelKind
    regressors: dict
    seed: int = 0
    feature_names: tuple[str, ...] = FEATURES
    train_index: list[int] | None = None
    test_index: list[int] | None = None

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(self.regressors)

    def predict_matrix(self, X, target: str) -> np.ndarray:
        return self.regressors[target].predict(np.atleast_2d(np.asarray(X, dtype=float)))


def split_dataset(rows: Sequence, test_fraction: float = 0.2, seed: int = 0):
    """Seeded shuffle then split; returns ``(train, test, train_idx, test_idx)``."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    n = len(rows)
    if n < 10:
        raise InsufficientDataError(f"need at least 10 rows to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    test_idx = sorted(perm[:n_test].tolist())
    train_idx = sorted(perm[n_test:].tolist())
    return [rows[i] for i in train_idx], [rows[i] for i in test_idx], train_idx, test_idx


def fit(kind: ModelKind | str, train_rows: Sequence, target_kpi: str | Iterable[str] = KPI_TARGETS,
        seed: int = 0) -> TrainedModel:
    """Fit one independent regressor per target on ``train_rows``."""
    if isinstance(kind, str):
        kind = ModelKind(kind)
    if not train_rows:
        raise InsufficientDataError("empty training set")
    names = (target_kpi,) if isinstance(target_kpi, str) else tuple(target_kpi)
    X = features(train_rows)
    regs = {}
    for name in names:
        regs[name] = kind.build(seed).fit(X, targets(train_rows, name))
    return TrainedModel(kind, regs, seed)


def predict(model: TrainedModel, cop: CopVector | Sequence[CopVector]) -> dict[str, float] | dict[str, np.ndarray]:
    """Predictions for one CopVector (floats) or a sequence (arrays), keyed by target."""
    single = isinstance(cop, CopVector)
    X = features([cop] if single else cop)
    out = {name: reg.predict(X) for name, reg in model.regressors.items()}
    if single:
        return {k: float(v[0]) for k, v in out.items()}
    return out


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


@dataclass(frozen=True)
class EvalEntry:
    kind: str
    kpi: str
    rmse: float


def evaluate(model: TrainedModel, test_rows: Sequence) -> list[EvalEntry]:
    if not test_rows:
        raise InsufficientDataError("empty test set")
    X = features(test_rows)
    return [
        EvalEntry(model.kind.name, name, rmse(reg.predict(X), targets(test_rows, name)))
        for name, reg in model.regressors.items()
    ]


# --- persistence ---------------------------------------------------------------------

_REGRESSOR_TYPES = {
    "linear": LinearRegressor,
    "poly2": LinearRegressor,
    "tree": DecisionTreeRegressor,
    "forest": RandomForestRegressor,
    "gbt": GradientBoostingRegressor,
}


def model_to_dict(model: TrainedModel, extra: dict | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "kind": model.kind.name,
        "params": model.kind.params,
        "features": list(model.feature_names),
        "seed": model.seed,
        "train_index": model.train_index,
        "test_index": model.test_index,
        "regressors": {k: r.to_dict() for k, r in model.regressors.items()},
        **(extra or {}),
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != MODEL_FORMAT:
        raise ParseError(f"unsupported model format {d.get('format')!r}")
    try:
        kind = ModelKind(d["kind"], dict(d["params"]))
        if tuple(d["features"]) != FEATURES:
            raise ParseError(f"feature order {d['features']} does not match {list(FEATURES)}")
        cls = _REGRESSOR_TYPES[kind.name]
        regs = {k: cls.from_dict(v) for k, v in d["regressors"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed model file: {exc}") from exc
    return TrainedModel(kind, regs, int(d.get("seed", 0)), FEATURES, d.get("train_index"), d.get("test_index"))


def save_model(model: TrainedModel, path, extra: dict | None = None) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model, extra), sort_keys=True) + "\n")


def load_model(path) -> tuple[TrainedModel, dict]:
    """Load a model file; also returns the raw document for extra fields."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    return model_from_dict(doc), doc


__all__ = [
    "BAND_TARGETS", "FEATURES", "KPI_TARGETS", "MODEL_KINDS", "TREE_KINDS", "EvalEntry",
    "ModelKind", "RegressionTree", "TrainedModel", "evaluate", "features", "fit", "load_model",
    "model_from_dict", "model_to_dict", "predict", "rmse", "save_model", "split_dataset", "targets",
]
