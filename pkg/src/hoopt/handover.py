"""Measurement events A2/A3/A5, time-to-trigger timers and handover execution.

The per-tick logic here is the readable reference. :mod:`hoopt.simulation`
runs the same state machine in a compiled kernel; the two are checked
against each other in the test-suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Mapping, MutableMapping, Sequence

import numpy as np

from .errors import HandoverLogicError, InputDomainError

TTT_SET_MS = (64, 128, 192, 256, 384, 512, 640)
THRESHOLD_RANGE_DBM = (-116.0, -96.0)
OFFSET_RANGE_DB = (0.0, 10.0)

EVENT_A3 = "A3"
EVENT_A5 = "A5"
CAUSE_TOO_LATE = "too-late"
CAUSE_TOO_EARLY = "too-early"


@dataclass(frozen=True, order=True)
class CopVector:
    """The five tunable handover parameters, in feature order."""

    a5_ttt: int
    a5_th1: float
    a5_th2: float
    a3_ttt: int
    a3_off: float

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_array(self) -> np.ndarray:
        return np.array([self.a5_ttt, self.a5_th1, self.a5_th2, self.a3_ttt, self.a3_off], dtype=float)

    def validate(self) -> "CopVector":
        """Raise :class:`InputDomainError` unless every field is in its allowed range."""
        for name in ("a5_ttt", "a3_ttt"):
            if getattr(self, name) not in TTT_SET_MS:
                raise InputDomainError(f"{name}={getattr(self, name)} not in {TTT_SET_MS}")
        lo, hi = THRESHOLD_RANGE_DBM
        for name in ("a5_th1", "a5_th2"):
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise InputDomainError(f"{name}={v} outside [{lo}, {hi}] dBm")
        lo, hi = OFFSET_RANGE_DB
        if not lo <= self.a3_off <= hi:
            raise InputDomainError(f"a3_off={self.a3_off} outside [{lo}, {hi}] dB")
        return self


@dataclass(frozen=True)
class HandoverConfig:
    a3_hyst: float = 1.0
    a5_hyst: float = 1.0
    a2_ttt: int = 64
    a2_threshold: float = -90.0
    a2_hyst: float = 1.0
    cio: Mapping[tuple[int, int], float] = field(default_factory=dict, hash=False)
    qout: float = -118.0
    ho_execution_time: int = 50

    def cio_for(self, serving: int, target: int) -> float:
        return self.cio.get((serving, target), 0.0)

    def cio_matrix(self, n_cells: int) -> np.ndarray:
        m = np.zeros((n_cells, n_cells))
        for (s, t), v in self.cio.items():
            m[s, t] = v
        return m


@dataclass(frozen=True)
class EventTimerState:
    elapsed: int = 0
    armed: bool = False


@dataclass
class HandoverLedger:
    a3_hos: int = 0
    a3_hof: int = 0
    a5_hos: int = 0
    a5_hof: int = 0
    too_late: int = 0
    too_early: int = 0

    @property
    def hos(self) -> int:
        return self.a3_hos + self.a5_hos

    @property
    def hof(self) -> int:
        return self.a3_hof + self.a5_hof

    def record(self, event: str, success: bool, cause: str | None = None) -> None:
        prefix = "a3" if event == EVENT_A3 else "a5"
        if success:
            setattr(self, f"{prefix}_hos", getattr(self, f"{prefix}_hos") + 1)
            return
        setattr(self, f"{prefix}_hof", getattr(self, f"{prefix}_hof") + 1)
        if cause == CAUSE_TOO_LATE:
            self.too_late += 1
        elif cause == CAUSE_TOO_EARLY:
            self.too_early += 1
        else:
            raise ValueError(f"unknown failure cause {cause!r}")

    def merge(self, other: "HandoverLedger") -> "HandoverLedger":
        return HandoverLedger(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))


@dataclass(frozen=True)
class HandoverOutcome:
    event: str
    source: int
    target: int
    start_tick: int
    end_tick: int
    success: bool
    cause: str | None = None


# --- trigger predicates ----------------------------------------------------------------


def a3_entering(m_target: float, m_serving: float, cio: float, hyst: float, offset: float) -> bool:
    """Intra-frequency entering condition (strict)."""
    return m_target + cio - hyst > m_serving + offset


def a5_entering(
    m_serving: float, m_target: float, cio: float, hyst: float, th1: float, th2: float
) -> bool:
    """Inter-frequency entering condition: serving below th1 and target above th2."""
    return m_serving + hyst < th1 and m_target + cio - hyst > th2


def tick_event(
    timer: EventTimerState, entering: bool, dt: int, ttt: int
) -> tuple[EventTimerState, bool]:
    """Advance one TTT timer by one tick.

    Returns the new state and whether the timer reached ``ttt`` on this tick.
    A timer that already reached ``ttt`` stays there without firing again.
    """
    if not entering:
        return EventTimerState(), False
    fired = timer.elapsed < ttt <= timer.elapsed + dt
    return EventTimerState(min(timer.elapsed + dt, ttt), True), fired


def a2_gap_active(
    m_serving: float, cfg: HandoverConfig, timer: EventTimerState, dt: int = 1
) -> tuple[EventTimerState, bool]:
    """Tick the A2 timer; the measurement gap is open once A2 has held for its TTT."""
    entering = m_serving + cfg.a2_hyst < cfg.a2_threshold
    timer, _ = tick_event(timer, entering, dt, cfg.a2_ttt)
    return timer, timer.elapsed >= cfg.a2_ttt


def execute_handover(
    user,
    target: int,
    trace: np.ndarray,
    start_tick: int,
    cfg: HandoverConfig,
    ledger: HandoverLedger,
    event: str,
    cells: Sequence | None = None,
    tti: int = 1,
) -> HandoverOutcome | None:
    """Run the execution window of a fired handover.

    ``trace`` holds the user's RSRP per tick and cell, shape ``(ticks, cells)``.
    The window covers ticks ``start_tick + 1`` onwards until
    ``ho_execution_time`` has elapsed. The serving link dropping below
    ``qout`` on any tick is a too-late failure; a target below ``qout`` at
    completion is a too-early failure. On success the user's PRBs move from
    the source to the target cell (when ``cells`` is given).

    Returns ``None`` if the trace ends before the outcome is decided; nothing
    is recorded in that case.
    """
    source = user.serving_cell
    if target == source:
        raise HandoverLogicError(f"user {user.user_id}: handover target equals serving cell {source}")
    n_ticks = trace.shape[0]
    elapsed = 0
    t = start_tick
    while True:
        t += 1
        if t >= n_ticks:
            return None
        elapsed += tti
        if float(trace[t, source]) < cfg.qout:
            outcome = HandoverOutcome(event, source, target, start_tick, t, False, CAUSE_TOO_LATE)
            break
        if elapsed >= cfg.ho_execution_time:
            if float(trace[t, target]) < cfg.qout:
                outcome = HandoverOutcome(event, source, target, start_tick, t, False, CAUSE_TOO_EARLY)
            else:
                outcome = HandoverOutcome(event, source, target, start_tick, t, True)
            break
    ledger.record(event, outcome.success, outcome.cause)
    if outcome.success:
        user.serving_cell = target
        if cells is not None:
            src, dst = cells[source], cells[target]
            src.allocated_prbs = max(0, src.allocated_prbs - user.prb_demand)
            dst.allocated_prbs = min(dst.band.total_prbs, dst.allocated_prbs + user.prb_demand)
    return outcome


# --- engine output ---------------------------------------------------------------------


@dataclass
class EngineResult:
    """Raw outcome of running the handover state machine over an RSRP trace."""

    ledger: HandoverLedger
    edge_samples: np.ndarray  # serving RSRP per (epoch, user)
    mean_allocated_prbs: np.ndarray  # per cell, time-averaged
    final_serving: np.ndarray
    events: list[tuple] = field(default_factory=list)


@dataclass
class _UserState:
    user_id: int
    serving_cell: int
    prb_demand: int
    a2: EventTimerState = EventTimerState()
    a3: MutableMapping[int, EventTimerState] = field(default_factory=dict)
    a5: MutableMapping[int, EventTimerState] = field(default_factory=dict)
    pending: HandoverOutcome | None = None
    busy_until: int = -1

    def reset_timers(self) -> None:
        self.a2 = EventTimerState()
        self.a3.clear()
        self.a5.clear()


def run_reference(
    rsrp: np.ndarray,
    cell_band: Sequence[int],
    cell_prbs: Sequence[int],
    cop: CopVector,
    cfg: HandoverConfig,
    prb_demand: int = 4,
    epoch_ticks: int = 100,
    tti: int = 1,
) -> EngineResult:
    """Pure-Python handover engine over a precomputed ``(ticks, users, cells)`` trace.

    Slow; intended for verification of the compiled kernel on small scenarios.
    """
    n_ticks, n_users, n_cells = rsrp.shape
    ledger = HandoverLedger()
    users = [
        _UserState(u, int(np.argmax(rsrp[0, u])), prb_demand) for u in range(n_users)
    ]
    counts = np.zeros(n_cells, dtype=np.int64)
    for st in users:
        counts[st.serving_cell] += 1
    alloc_sum = np.zeros(n_cells)
    prbs = np.asarray(cell_prbs, dtype=np.int64)
    samples = np.empty((n_ticks // epoch_ticks, n_users))
    events: list[tuple] = []

    for t in range(n_ticks):
        for st in users:
            if st.pending is not None:
                if t < st.busy_until:
                    continue
                out = st.pending
                if out.success:
                    counts[out.source] -= 1
                    counts[out.target] += 1
                events.append(
                    (t * tti, st.user_id, out.event, out.source, out.target,
                     "success" if out.success else "failure", out.cause or "")
                )
                st.pending = None
                st.reset_timers()
                continue
            if st.busy_until >= n_ticks:
                continue
            row = rsrp[t, st.user_id].tolist()
            s = st.serving_cell
            ms = row[s]
            st.a2, gap = a2_gap_active(ms, cfg, st.a2, tti)
            best, best_r, best_event = -1, -math.inf, ""
            for c in range(n_cells):
                if c == s:
                    continue
                rc = row[c]
                cio = cfg.cio_for(s, c)
                if cell_band[c] == cell_band[s]:
                    entering = a3_entering(rc, ms, cio, cfg.a3_hyst, cop.a3_off)
                    st.a3[c], fired = tick_event(st.a3.get(c, EventTimerState()), entering, tti, cop.a3_ttt)
                    ev = EVENT_A3
                else:
                    entering = gap and a5_entering(ms, rc, cio, cfg.a5_hyst, cop.a5_th1, cop.a5_th2)
                    st.a5[c], fired = tick_event(st.a5.get(c, EventTimerState()), entering, tti, cop.a5_ttt)
                    ev = EVENT_A5
                if fired and rc > best_r:
                    best, best_r, best_event = c, rc, ev
            if best >= 0:
                shadow_user = _UserProxy(st.user_id, s, prb_demand)
                out = execute_handover(
                    shadow_user, best, rsrp[:, st.user_id, :], t, cfg, ledger, best_event, tti=tti
                )
                if out is None:
                    st.busy_until = n_ticks
                else:
                    st.pending = out
                    st.busy_until = out.end_tick
                    if out.success:
                        st.serving_cell = best
        for c in range(n_cells):
            alloc_sum[c] += min(counts[c] * prb_demand, prbs[c])
        if (t + 1) % epoch_ticks == 0:
            ep = (t + 1) // epoch_ticks - 1
            for st in users:
                s = _serving_at(st, t)
                samples[ep, st.user_id] = rsrp[t, st.user_id, s]

    final = np.array([_serving_at(st, n_ticks) for st in users], dtype=np.int64)
    return EngineResult(ledger, samples, alloc_sum / n_ticks, final, events)


@dataclass
class _UserProxy:
    user_id: int
    serving_cell: int
    prb_demand: int


def _serving_at(st: _UserState, t: int) -> int:
    # a pending successful handover only takes effect at its end tick
    if st.pending is not None and st.pending.success and t < st.pending.end_tick:
        return st.pending.source
    return st.serving_cell
