"""Synthetic datasets for surrogate, explain and optimizer tests."""

import numpy as np

from hoopt.handover import TTT_SET_MS, CopVector
from hoopt.kpi import KpiVector
from hoopt.sweep import DatasetRow


def random_cops(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        out.append(CopVector(
            int(rng.choice(TTT_SET_MS)), float(rng.integers(0, 11) * 2 - 116),
            float(rng.integers(0, 11) * 2 - 116), int(rng.choice(TTT_SET_MS)), float(rng.integers(0, 6) * 2),
        ))
    return out


def synthetic_rows(n, fn, seed=0):
    """Rows whose KPIs come from ``fn(x) -> (edge, hosr, loads(3), load_factor)``."""
    rows = []
    for cop in random_cops(n, seed):
        edge, hosr, loads, lf = fn(cop.as_array())
        rows.append(DatasetRow(cop, 0, KpiVector(edge, hosr, tuple(loads), lf), 0, 0))
    return rows


def linear_kpis(x):
    t5, h1, h2, t3, off = x
    edge = -100.0 + 0.002 * t5 + 0.3 * h1 - 0.1 * h2 + 0.001 * t3 + 0.5 * off
    hosr = 50.0 + 0.01 * t5 + 0.2 * (h1 + 116) + 0.1 * (h2 + 116) + 2.0 * off
    loads = (0.3 + 0.01 * (h1 + 116), 0.2, 0.1 + 0.005 * off)
    lf = 100.0 * float(np.cbrt(np.prod([1 - v for v in loads])))
    return edge, hosr, loads, lf
