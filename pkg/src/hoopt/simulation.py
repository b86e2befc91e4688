"""Seeded system-level runs: scenario, RSRP trace and the compiled handover kernel.

Mobility and propagation do not depend on the handover parameters, so the
full ``(ticks, users, cells)`` RSRP trace of a scenario is computed once and
reused by every run that shares its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from numba import njit

from . import kpi
from .errors import ConfigurationError
from .handover import (
    CAUSE_TOO_EARLY,
    CAUSE_TOO_LATE,
    EVENT_A3,
    EVENT_A5,
    CopVector,
    EngineResult,
    HandoverConfig,
    HandoverLedger,
)
from .radio import (
    USER_HEIGHT_M,
    Cell,
    NetworkConfig,
    PropagationModel,
    User,
    build_cells,
    build_users,
    draw_waypoint,
    fspl_1m_db,
    mobility_rng,
    shadowing_map,
    trajectory,
)
from .seeding import derive_seed

EPOCH_MS = 100


@dataclass
class Scenario:
    net: NetworkConfig
    prop: PropagationModel
    seed: int
    cells: list[Cell]
    users: list[User]

    @property
    def cell_band(self) -> np.ndarray:
        return np.array([c.band_id for c in self.cells], dtype=np.int64)

    @property
    def cell_prbs(self) -> np.ndarray:
        return np.array([c.band.total_prbs for c in self.cells], dtype=np.int64)


def build_scenario(net: NetworkConfig, seed: int, prop: PropagationModel | None = None) -> Scenario:
    """Topology, users and propagation for one seed.

    The shadowing seed of ``prop`` is replaced by a sub-stream of ``seed``.
    """
    prop = replace(prop or PropagationModel(), shadowing_seed=derive_seed(seed, "shadowing"))
    cells = build_cells(net, seed)
    users = build_users(net, seed)
    if not cells or not users:
        raise ConfigurationError("scenario needs at least one cell and one user")
    return Scenario(net, prop, seed, cells, users)


def user_positions(scn: Scenario) -> np.ndarray:
    """Position of every user at the start of every tick, ``(ticks, users, 2)``."""
    net = scn.net
    out = np.empty((net.n_ticks, len(scn.users), 2))
    for u in scn.users:
        rng = mobility_rng(scn.seed, u.user_id)
        first = draw_waypoint(rng, net.area_side)
        out[:, u.user_id, :] = trajectory(
            u.position, first, u.speed, net.n_ticks, net.tti, net.area_side, rng
        )
    return out


@njit(cache=True)
def _trace_kernel(pos, cell_xy, cell_dh, cell_ptx, cell_gmax, cell_sector, cell_az, cell_fspl,
                  ple1, ple2, dth, shadow, res, area, out):
    n_t, n_u, _ = pos.shape
    n_c = cell_xy.shape[0]
    n_g = shadow.shape[1]
    for t in range(n_t):
        for u in range(n_u):
            x = pos[t, u, 0]
            y = pos[t, u, 1]
            fx = min(max(min(max(x, 0.0), area) / res, 0.0), n_g - 1.0)
            fy = min(max(min(max(y, 0.0), area) / res, 0.0), n_g - 1.0)
            i = min(int(fx), n_g - 2)
            j = min(int(fy), n_g - 2)
            tx = fx - i
            ty = fy - j
            for c in range(n_c):
                dx = x - cell_xy[c, 0]
                dy = y - cell_xy[c, 1]
                d = math.sqrt(dx * dx + dy * dy + cell_dh[c] * cell_dh[c])
                if d < 1.0:
                    d = 1.0
                pl = -cell_fspl[c] - 10.0 * ple1 * math.log10(d)
                if d > dth:
                    pl -= 10.0 * ple2 * math.log10(d / dth)
                g = cell_gmax[c]
                if cell_sector[c]:
                    theta = math.degrees(math.atan2(dy, dx)) - cell_az[c]
                    theta = (theta + 180.0) % 360.0 - 180.0
                    att = 12.0 * (theta / 65.0) ** 2
                    if att > 30.0:
                        att = 30.0
                    g -= att
                sh = (shadow[c, i, j] * (1 - tx) * (1 - ty) + shadow[c, i + 1, j] * tx * (1 - ty)
                      + shadow[c, i, j + 1] * (1 - tx) * ty + shadow[c, i + 1, j + 1] * tx * ty)
                out[t, u, c] = cell_ptx[c] + g + sh + pl


def compute_trace(scn: Scenario) -> np.ndarray:
    """RSRP (dBm, float32) for every tick, user and cell."""
    pos = user_positions(scn)
    cells = scn.cells
    n_c = len(cells)
    shadow = np.stack([shadowing_map(c.cell_id, scn.prop, float(scn.net.area_side)) for c in cells])
    out = np.empty((pos.shape[0], pos.shape[1], n_c), dtype=np.float32)
    _trace_kernel(
        pos,
        np.array([c.site_position for c in cells], dtype=float),
        np.array([c.band.antenna_height - USER_HEIGHT_M for c in cells]),
        np.array([c.band.tx_power for c in cells]),
        np.array([c.band.max_antenna_gain for c in cells]),
        np.array([c.band.antenna_kind == "tri-sector" for c in cells]),
        np.array([0.0 if math.isnan(c.azimuth) else c.azimuth for c in cells]),
        np.array([fspl_1m_db(c.band.carrier_frequency) for c in cells]),
        scn.prop.ple_near,
        scn.prop.ple_far,
        scn.prop.breakpoint_distance,
        np.ascontiguousarray(shadow),
        scn.prop.shadowing_grid_resolution,
        float(scn.net.area_side),
        out,
    )
    return out


@lru_cache(maxsize=1)
def environment(net: NetworkConfig, seed: int, prop: PropagationModel | None = None):
    """Cached ``(scenario, trace)`` for a seed; the trace dominates run cost."""
    scn = build_scenario(net, seed, prop)
    trace = compute_trace(scn)
    trace.setflags(write=False)
    return scn, trace


# --- handover kernel -----------------------------------------------------------------

_EVENT_NAMES = (EVENT_A3, EVENT_A5)
_CAUSE_NAMES = ("", CAUSE_TOO_LATE, CAUSE_TOO_EARLY)


@njit(cache=True)
def _handover_kernel(rsrp, cell_band, cell_prbs, cio, a3_ttt, a3_off, a5_ttt, th1, th2,
                     a3_hyst, a5_hyst, a2_ttt, a2_thr, a2_hyst, qout, exec_time, tti,
                     demand, epoch_ticks, log_cap):
    n_t, n_u, n_c = rsrp.shape
    serving = np.empty(n_u, np.int64)
    counts = np.zeros(n_c, np.int64)
    for u in range(n_u):
        serving[u] = np.argmax(rsrp[0, u])
        counts[serving[u]] += 1
    a2 = np.zeros(n_u, np.int64)
    a3 = np.zeros((n_u, n_c), np.int64)
    a5 = np.zeros((n_u, n_c), np.int64)
    inflight = np.zeros(n_u, np.bool_)
    exec_el = np.zeros(n_u, np.int64)
    target = np.zeros(n_u, np.int64)
    event = np.zeros(n_u, np.int64)
    alloc_sum = np.zeros(n_c)
    samples = np.empty((n_t // epoch_ticks, n_u))
    # a3 hos, a3 hof, a5 hos, a5 hof, too-late, too-early
    stats = np.zeros(6, np.int64)
    log = np.zeros((log_cap, 7), np.int64)
    n_log = 0

    for t in range(n_t):
        for u in range(n_u):
            s = serving[u]
            if inflight[u]:
                exec_el[u] += tti
                g = target[u]
                cause = -1
                if rsrp[t, u, s] < qout:
                    cause = 1
                elif exec_el[u] >= exec_time:
                    cause = 2 if rsrp[t, u, g] < qout else 0
                if cause >= 0:
                    ev = event[u]
                    if cause == 0:
                        stats[2 * ev] += 1
                        counts[s] -= 1
                        counts[g] += 1
                        serving[u] = g
                    else:
                        stats[2 * ev + 1] += 1
                        stats[3 + cause] += 1
                    if n_log < log_cap:
                        log[n_log, 0] = t * tti
                        log[n_log, 1] = u
                        log[n_log, 2] = ev
                        log[n_log, 3] = s
                        log[n_log, 4] = g
                        log[n_log, 5] = 1 if cause == 0 else 0
                        log[n_log, 6] = cause
                    n_log += 1
                    inflight[u] = False
                    a2[u] = 0
                    a3[u, :] = 0
                    a5[u, :] = 0
                continue

            ms = np.float64(rsrp[t, u, s])
            if ms + a2_hyst < a2_thr:
                a2[u] = min(a2[u] + tti, a2_ttt)
            else:
                a2[u] = 0
            gap = a2[u] >= a2_ttt
            bs = cell_band[s]
            best = -1
            best_r = -np.inf
            best_ev = 0
            for c in range(n_c):
                if c == s:
                    continue
                rc = np.float64(rsrp[t, u, c])
                fired = False
                if cell_band[c] == bs:
                    if rc + cio[s, c] - a3_hyst > ms + a3_off:
                        before = a3[u, c]
                        fired = before < a3_ttt and before + tti >= a3_ttt
                        a3[u, c] = min(before + tti, a3_ttt)
                    else:
                        a3[u, c] = 0
                    ev = 0
                else:
                    if gap and ms + a5_hyst < th1 and rc + cio[s, c] - a5_hyst > th2:
                        before = a5[u, c]
                        fired = before < a5_ttt and before + tti >= a5_ttt
                        a5[u, c] = min(before + tti, a5_ttt)
                    else:
                        a5[u, c] = 0
                    ev = 1
                if fired and rc > best_r:
                    best = c
                    best_r = rc
                    best_ev = ev
            if best >= 0:
                inflight[u] = True
                exec_el[u] = 0
                target[u] = best
                event[u] = best_ev

        for c in range(n_c):
            a = counts[c] * demand
            alloc_sum[c] += a if a < cell_prbs[c] else cell_prbs[c]
        if (t + 1) % epoch_ticks == 0:
            ep = (t + 1) // epoch_ticks - 1
            for u in range(n_u):
                samples[ep, u] = rsrp[t, u, serving[u]]

    return stats, samples, alloc_sum / n_t, serving, log[:min(n_log, log_cap)], n_log


def run_engine(
    rsrp: np.ndarray,
    cell_band: np.ndarray,
    cell_prbs: np.ndarray,
    cop: CopVector,
    cfg: HandoverConfig,
    prb_demand: int = 4,
    epoch_ticks: int = EPOCH_MS,
    tti: int = 1,
    log_capacity: int = 0,
) -> EngineResult:
    """Compiled equivalent of :func:`hoopt.handover.run_reference`."""
    n_c = rsrp.shape[2]
    stats, samples, alloc, serving, log, n_log = _handover_kernel(
        rsrp,
        np.asarray(cell_band, dtype=np.int64),
        np.asarray(cell_prbs, dtype=np.int64),
        cfg.cio_matrix(n_c),
        int(cop.a3_ttt), float(cop.a3_off), int(cop.a5_ttt), float(cop.a5_th1), float(cop.a5_th2),
        float(cfg.a3_hyst), float(cfg.a5_hyst), int(cfg.a2_ttt), float(cfg.a2_threshold),
        float(cfg.a2_hyst), float(cfg.qout), int(cfg.ho_execution_time), int(tti),
        int(prb_demand), int(epoch_ticks), int(log_capacity),
    )
    ledger = HandoverLedger(*(int(v) for v in stats))
    events = [
        (int(r[0]), int(r[1]), _EVENT_NAMES[r[2]], int(r[3]), int(r[4]),
         "success" if r[5] else "failure", _CAUSE_NAMES[r[6]])
        for r in log
    ]
    if n_log > log_capacity and log_capacity:
        raise RuntimeError(f"event log overflow: {n_log} events, capacity {log_capacity}")
    return EngineResult(ledger, samples, alloc, serving, events)


@dataclass
class RunOutput:
    kpis: kpi.KpiVector
    ledger: HandoverLedger
    events: list[tuple]


def kpis_from_engine(scn: Scenario, res: EngineResult) -> kpi.KpiVector:
    loads = []
    for band in scn.net.bands:
        band_cells = [
            Cell(c.cell_id, c.band, c.site_position, c.azimuth,
                 min(float(res.mean_allocated_prbs[c.cell_id]), c.band.total_prbs))
            for c in scn.cells
            if c.band_id == band.band_id
        ]
        loads.append(kpi.band_load(band_cells))
    return kpi.KpiVector(
        edge_rsrp=kpi.edge_rsrp_mean(res.edge_samples.ravel()),
        hosr=kpi.hosr(res.ledger.hos, res.ledger.hof),
        band_loads=tuple(loads),
        load_factor=kpi.load_factor(loads),
    )


def simulate(
    cop: CopVector,
    net: NetworkConfig,
    seed: int,
    prop: PropagationModel | None = None,
    cfg: HandoverConfig | None = None,
    log_events: bool = False,
) -> RunOutput:
    """One full seeded run: mobility, measurements, handovers and KPIs."""
    cfg = cfg or HandoverConfig()
    scn, trace = environment(net, seed, prop)
    epoch_ticks = max(1, EPOCH_MS // net.tti)
    if trace.shape[0] < epoch_ticks:
        raise ConfigurationError("sim_duration shorter than one measurement epoch", "sim_duration")
    res = run_engine(
        trace, scn.cell_band, scn.cell_prbs, cop, cfg,
        prb_demand=net.prb_demand, epoch_ticks=epoch_ticks, tti=net.tti,
        log_capacity=200_000 if log_events else 0,
    )
    return RunOutput(kpis_from_engine(scn, res), res.ledger, res.events)
