"""COP grid enumeration, seeded sweeps and the dataset CSV format."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ParseError
from .handover import TTT_SET_MS, CopVector, HandoverConfig
from .kpi import KpiVector
from .radio import NetworkConfig, PropagationModel
from .seeding import derive_seed, substream
from .simulation import simulate

DATASET_HEADER = (
    "a5_ttt_ms", "a5_th1_dbm", "a5_th2_dbm", "a3_ttt_ms", "a3_off_db", "seed",
    "edge_rsrp_dbm", "hosr_pct", "load_1700_pct", "load_2100_pct", "load_3500_pct",
    "load_factor_pct", "hos_count", "hof_count",
)
SURFACE_HEADER = ("a5_th1_dbm", "a5_th2_dbm", "kpi_value")
SEED_POLICIES = ("common", "per-point")


def _values(lo: float, hi: float, step: float, name: str) -> tuple[float, ...]:
    if step <= 0 or hi < lo:
        raise ConfigurationError(f"{name}: need step > 0 and max >= min", name)
    n = (hi - lo) / step
    if abs(n - round(n)) > 1e-9:
        raise ConfigurationError(f"{name}: step {step} does not divide [{lo}, {hi}]", name)
    return tuple(float(lo + i * step) for i in range(int(round(n)) + 1))


@dataclass(frozen=True)
class SweepGrid:
    ttt_values: tuple[int, ...] = TTT_SET_MS
    th1_range: tuple[float, float, float] = (-116.0, -96.0, 2.0)
    th2_range: tuple[float, float, float] = (-116.0, -96.0, 2.0)
    off_range: tuple[float, float, float] = (0.0, 10.0, 2.0)
    # optional narrower TTT sets per event; default to ttt_values
    a5_ttt_values: tuple[int, ...] | None = None
    a3_ttt_values: tuple[int, ...] | None = None

    def axes(self) -> tuple[tuple[float, ...], ...]:
        """Per-field value lists in CopVector field order."""
        return (
            tuple(self.a5_ttt_values or self.ttt_values),
            _values(*self.th1_range, "th1_range"),
            _values(*self.th2_range, "th2_range"),
            tuple(self.a3_ttt_values or self.ttt_values),
            _values(*self.off_range, "off_range"),
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes())

    @property
    def cardinality(self) -> int:
        return math.prod(self.shape)

    def cop_at(self, index: Sequence[int]) -> CopVector:
        axes = self.axes()
        v = [axes[k][i] for k, i in enumerate(index)]
        return CopVector(int(v[0]), v[1], v[2], int(v[3]), v[4])


def build_grid(grid: SweepGrid) -> list[CopVector]:
    """Cartesian product of the grid axes, lexicographic in field order."""
    a5_ttt, th1, th2, a3_ttt, off = grid.axes()
    return [
        CopVector(int(t5), h1, h2, int(t3), o)
        for t5, h1, h2, t3, o in itertools.product(a5_ttt, th1, th2, a3_ttt, off)
    ]


@dataclass(frozen=True)
class DatasetRow:
    cop: CopVector
    seed: int
    kpis: KpiVector
    hos: int
    hof: int
    sim_duration: int = 0  # ms; 0 when unknown

    def target(self, name: str) -> float:
        """KPI value by surrogate target name; band loads are in percent."""
        k = self.kpis
        if name == "edge_rsrp":
            return k.edge_rsrp
        if name == "hosr":
            return k.hosr
        if name == "load_factor":
            return k.load_factor
        if name.startswith("load_"):
            idx = BAND_LABELS.index(name[len("load_"):])
            return 100.0 * k.band_loads[idx]
        raise KeyError(name)


BAND_LABELS = ("1700", "2100", "3500")


def run_point(
    cop: CopVector,
    net: NetworkConfig,
    seed: int,
    prop: PropagationModel | None = None,
    cfg: HandoverConfig | None = None,
) -> DatasetRow:
    """Simulate one grid point; deterministic in ``(cop, net, seed)``."""
    cop.validate()
    out = simulate(cop, net, seed, prop, cfg)
    return DatasetRow(cop, int(seed), out.kpis, out.ledger.hos, out.ledger.hof, net.sim_duration)


def point_seed(master_seed: int, grid_index: int, policy: str = "common") -> int:
    if policy == "common":
        return int(master_seed)
    if policy == "per-point":
        return derive_seed(master_seed, "grid-point", grid_index)
    raise ConfigurationError(f"unknown seed policy {policy!r}; expected one of {SEED_POLICIES}", "seed_policy")


def subsample_indices(cardinality: int, k: int | None, master_seed: int) -> np.ndarray:
    """Sorted, deterministic sample of ``k`` grid indices (all when ``k`` is None)."""
    if k is None or k >= cardinality:
        return np.arange(cardinality)
    if k <= 0:
        raise ConfigurationError("grid subsample must be positive", "grid_subsample")
    rng = substream(master_seed, "grid-subsample")
    return np.sort(rng.choice(cardinality, size=k, replace=False))


@dataclass
class SweepSpec:
    grid: SweepGrid = field(default_factory=SweepGrid)
    net: NetworkConfig = field(default_factory=NetworkConfig)
    prop: PropagationModel | None = None
    cfg: HandoverConfig | None = None
    master_seed: int = 0
    seed_policy: str = "common"
    subsample: int | None = None


def _run_chunk(args):
    spec, items = args
    return [
        (idx, run_point(cop, spec.net, seed, spec.prop, spec.cfg)) for idx, cop, seed in items
    ]


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[DatasetRow]:
    """Simulate every selected grid point; rows come back in grid order.

    With ``jobs > 1`` points are spread over worker processes. Results are
    merged by grid index, so the output does not depend on ``jobs``.
    """
    cops = build_grid(spec.grid)
    idx = subsample_indices(len(cops), spec.subsample, spec.master_seed)
    items = [(int(i), cops[i], point_seed(spec.master_seed, int(i), spec.seed_policy)) for i in idx]
    if jobs <= 1 or len(items) <= 1:
        results = _run_chunk((spec, items))
    else:
        n_chunks = min(len(items), jobs)
        chunks = [items[k::n_chunks] for k in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = [r for part in pool.map(_run_chunk, [(spec, c) for c in chunks]) for r in part]
    results.sort(key=lambda r: r[0])
    return [row for _, row in results]


# --- dataset CSV -------------------------------------------------------------------


def _num(x: float) -> str:
    """Shortest round-tripping text for a float; integral values without '.0'."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _pct(frac: float) -> str:
    # exact decimal shift keeps percent <-> fraction lossless
    return format(Decimal(repr(float(frac))).scaleb(2).normalize(), "f")


def _frac(pct: str) -> float:
    return float(Decimal(pct).scaleb(-2))


def format_metadata(meta: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items())


def parse_metadata(line: str) -> dict:
    out = {}
    for tok in line.lstrip("#").split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            out[k] = v
    return out


def dataset_to_text(rows: Iterable[DatasetRow], meta: dict | None = None) -> str:
    rows = list(rows)
    meta = dict(meta or {})
    durations = {r.sim_duration for r in rows}
    if len(durations) == 1:
        meta.setdefault("sim_duration_ms", durations.pop())
    buf = io.StringIO()
    if meta:
        buf.write(format_metadata(meta) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for r in rows:
        c, k = r.cop, r.kpis
        w.writerow([
            _num(c.a5_ttt), _num(c.a5_th1), _num(c.a5_th2), _num(c.a3_ttt), _num(c.a3_off), r.seed,
            repr(float(k.edge_rsrp)), repr(float(k.hosr)),
            *(_pct(v) for v in k.band_loads), repr(float(k.load_factor)), r.hos, r.hof,
        ])
    return buf.getvalue()


def write_dataset(rows: Iterable[DatasetRow], path, meta: dict | None = None) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, dataset_to_text(rows, meta))


def parse_dataset(text: str) -> tuple[list[DatasetRow], dict]:
    """Parse dataset CSV text; columns are matched by header name."""
    lines = text.splitlines()
    meta: dict = {}
    header = None
    rows: list[DatasetRow] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            meta.update(parse_metadata(line))
            continue
        cells = next(csv.reader([line]))
        if header is None:
            unknown = [h for h in cells if h not in DATASET_HEADER]
            missing = [h for h in DATASET_HEADER if h not in cells]
            if unknown or missing or len(set(cells)) != len(cells):
                raise ParseError(f"bad header (unknown={unknown}, missing={missing})", lineno)
            header = {name: i for i, name in enumerate(cells)}
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", lineno)
        f = {name: cells[i] for name, i in header.items()}
        try:
            cop = CopVector(
                int(f["a5_ttt_ms"]), float(f["a5_th1_dbm"]), float(f["a5_th2_dbm"]),
                int(f["a3_ttt_ms"]), float(f["a3_off_db"]),
            )
            kpis = KpiVector(
                float(f["edge_rsrp_dbm"]), float(f["hosr_pct"]),
                tuple(_frac(f[f"load_{b}_pct"]) for b in BAND_LABELS),
                float(f["load_factor_pct"]),
            )
            rows.append(DatasetRow(
                cop, int(f["seed"]), kpis, int(f["hos_count"]), int(f["hof_count"]),
                int(meta.get("sim_duration_ms", 0)),
            ))
        except (ValueError, InvalidOperation) as exc:
            raise ParseError(str(exc) or "malformed value", lineno) from exc
    if header is None:
        raise ParseError("missing header", len(lines) or 1)
    return rows, meta


def read_dataset(path) -> list[DatasetRow]:
    return parse_dataset(Path(path).read_text())[0]


def surface_to_text(th1: Sequence[float], th2: Sequence[float], values, meta: dict | None = None) -> str:
    """Surface CSV; ``values[i, j]`` belongs to ``(th1[i], th2[j])``."""
    buf = io.StringIO()
    if meta:
        buf.write(format_metadata(meta) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SURFACE_HEADER)
    values = np.asarray(values, dtype=float)
    for i, a in enumerate(th1):
        for j, b in enumerate(th2):
            w.writerow([_num(a), _num(b), repr(float(values[i, j]))])
    return buf.getvalue()


def dataset_surface(rows: Sequence[DatasetRow], kpi_name: str, a5_ttt: int, a3_ttt: int, a3_off: float,
                    grid: SweepGrid = SweepGrid()) -> np.ndarray:
    """Mean KPI per (th1, th2) cell of one slice; NaN where the dataset has no row."""
    _, th1, th2, _, _ = grid.axes()
    i1 = {v: i for i, v in enumerate(th1)}
    i2 = {v: i for i, v in enumerate(th2)}
    acc = np.zeros((len(th1), len(th2)))
    cnt = np.zeros_like(acc)
    for r in rows:
        c = r.cop
        if c.a5_ttt != a5_ttt or c.a3_ttt != a3_ttt or c.a3_off != a3_off:
            continue
        if c.a5_th1 in i1 and c.a5_th2 in i2:
            acc[i1[c.a5_th1], i2[c.a5_th2]] += r.target(kpi_name)
            cnt[i1[c.a5_th1], i2[c.a5_th2]] += 1
    with np.errstate(invalid="ignore"):
        return np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
