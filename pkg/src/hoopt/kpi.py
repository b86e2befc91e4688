"""KPI formulas: edge-user RSRP, handover success rate, band load and load factor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputDomainError, InsufficientDataError

EDGE_PERCENTILE = 25.0


@dataclass(frozen=True)
class KpiVector:
    edge_rsrp: float  # dBm
    hosr: float  # percent
    band_loads: tuple[float, ...]  # fraction per band
    load_factor: float  # percent

    def __post_init__(self):
        if not 0.0 <= self.hosr <= 100.0:
            raise InputDomainError(f"hosr {self.hosr} outside [0, 100]")
        if not 0.0 <= self.load_factor <= 100.0:
            raise InputDomainError(f"load_factor {self.load_factor} outside [0, 100]")
        if any(not 0.0 <= v <= 1.0 for v in self.band_loads):
            raise InputDomainError(f"band loads {self.band_loads} outside [0, 1]")


def nearest_rank(sorted_values: np.ndarray, pct: float):
    """Nearest-rank percentile of an ascending array."""
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def edge_rsrp_mean(rsrp_samples) -> float:
    """Mean of the serving-RSRP samples at or below the 25th percentile."""
    x = np.sort(np.asarray(rsrp_samples, dtype=float).ravel())
    if x.size == 0:
        raise InsufficientDataError("no RSRP samples")
    if x.size < 4:
        raise InsufficientDataError(f"need at least 4 RSRP samples, got {x.size}")
    cut = nearest_rank(x, EDGE_PERCENTILE)
    return float(np.mean(x[x <= cut]))


def hosr(hos: int, hof: int) -> float:
    """Handover success rate in percent; a run without attempts scores 100."""
    if hos < 0 or hof < 0:
        raise InputDomainError("handover counts must be non-negative")
    total = hos + hof
    if total == 0:
        return 100.0
    return 100.0 * hos / total


def band_load(cells: Sequence) -> float:
    """Average PRB utilisation over the cells of one band."""
    if not cells:
        raise InputDomainError("band_load needs at least one cell")
    band_ids = {c.band_id for c in cells}
    if len(band_ids) != 1:
        raise InputDomainError(f"cells span several bands: {sorted(band_ids)}")
    return float(np.mean([c.allocated_prbs / c.band.total_prbs for c in cells]))


def load_factor(band_loads: Sequence[float]) -> float:
    """Geometric mean of the per-band idle fractions, in percent."""
    loads = np.asarray(band_loads, dtype=float)
    if loads.size == 0:
        raise InputDomainError("no band loads")
    if np.any(~np.isfinite(loads)) or np.any(loads < 0) or np.any(loads > 1):
        raise InputDomainError(f"band loads {loads.tolist()} outside [0, 1]")
    return 100.0 * float(np.prod(1.0 - loads)) ** (1.0 / loads.size)


@dataclass(frozen=True)
class NormBounds:
    """Min/max used to scale one KPI into [0, 1]."""

    lo: float
    hi: float

    def scale(self, values):
        """Min-max scale; a constant column maps to 0."""
        v = np.asarray(values, dtype=float)
        if self.hi == self.lo:
            return np.zeros_like(v)
        return (v - self.lo) / (self.hi - self.lo)


def normalize(values) -> tuple[np.ndarray, NormBounds]:
    """Min-max normalize one KPI column over a dataset."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InsufficientDataError("cannot normalize an empty column")
    bounds = NormBounds(float(v.min()), float(v.max()))
    return bounds.scale(v), bounds


@dataclass(frozen=True)
class NormalizedKpis:
    m_tilde: float
    h_tilde: float
    l_tilde: float
    bounds: tuple[NormBounds, NormBounds, NormBounds]


def normalize_kpis(kpis: Sequence[KpiVector]) -> list[NormalizedKpis]:
    """Min-max normalize edge RSRP, HOSR and load factor jointly over a dataset."""
    if not kpis:
        raise InsufficientDataError("cannot normalize an empty dataset")
    cols = [normalize([getattr(k, f) for k in kpis]) for f in ("edge_rsrp", "hosr", "load_factor")]
    bounds = tuple(b for _, b in cols)
    return [
        NormalizedKpis(float(cols[0][0][i]), float(cols[1][0][i]), float(cols[2][0][i]), bounds)
        for i in range(len(kpis))
    ]
