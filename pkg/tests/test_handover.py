import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hoopt.errors import HandoverLogicError, InputDomainError
from hoopt.handover import (
    CAUSE_TOO_EARLY,
    CAUSE_TOO_LATE,
    EVENT_A3,
    EVENT_A5,
    CopVector,
    EventTimerState,
    HandoverConfig,
    HandoverLedger,
    a2_gap_active,
    a3_entering,
    a5_entering,
    execute_handover,
    run_reference,
    tick_event,
)
from hoopt.radio import DEFAULT_BANDS, USER_HEIGHT_M, NetworkConfig, fspl_1m_db
from hoopt.simulation import environment, run_engine

CFG = HandoverConfig()
finite = st.floats(-150, -40, allow_nan=False)


class TestA3:
    def test_truth_table(self):
        assert a3_entering(-88, -90, 0, 1, 0) is True
        assert a3_entering(-90, -95, 0, 1, 3) is True
        assert a3_entering(-89, -90, 0, 1, 0) is False  # -90 > -90 fails: strict
        assert a3_entering(-95, -90, 0, 1, 0) is False

    def test_cio_shifts_target(self):
        assert a3_entering(-90, -90, 2, 1, 0) is True
        assert a3_entering(-90, -90, 1, 1, 0) is False

    @given(finite, finite, st.floats(0, 10))
    def test_matches_inequality(self, mt, ms, off):
        assert a3_entering(mt, ms, 0.0, 1.0, off) == (mt - 1.0 > ms + off)


class TestA5:
    def test_truth_table(self):
        assert a5_entering(-100, -95, 0, 1, -98, -97) is True
        # serving + hyst == th1 exactly
        assert a5_entering(-99, -40, 0, 1, -98, -116) is False
        # target + cio - hyst == th2 exactly
        assert a5_entering(-110, -96, 0, 1, -98, -97) is False

    @given(st.floats(-150, -97.0001), finite)
    def test_loosest_grid_corner(self, ms, mt):
        # th1 = -96, th2 = -116, strong target
        assert a5_entering(ms, -80.0, 0, 1, -96, -116) is True

    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=200),
           st.floats(-116, -96), st.floats(0, 20), st.floats(-116, -96))
    def test_th1_monotone_entry_count(self, trace, th1, bump, th2):
        def entries(t1):
            return sum(a5_entering(ms, mt, 0.0, 1.0, t1, th2) for ms, mt in trace)

        assert entries(th1 + bump) >= entries(th1)


class TestTimers:
    def test_fires_on_tick_64(self):
        t = EventTimerState()
        fired_at = []
        for k in range(1, 100):
            t, fired = tick_event(t, True, 1, 64)
            if fired:
                fired_at.append(k)
        assert fired_at == [64]
        assert t.elapsed == 64 and t.armed

    def test_reset_blocks_firing(self):
        t = EventTimerState()
        seq = [True] * 63 + [False] + [True] * 63
        fired = []
        for e in seq:
            t, f = tick_event(t, e, 1, 64)
            fired.append(f)
            assert 0 <= t.elapsed <= 64
        assert not any(fired)

    def test_reset_state(self):
        t, _ = tick_event(EventTimerState(10, True), False, 1, 64)
        assert t == EventTimerState(0, False)

    def test_one_shot(self):
        t = EventTimerState()
        count = 0
        for _ in range(500):
            t, f = tick_event(t, True, 1, 128)
            count += f
        assert count == 1


class TestA2Gap:
    def test_opens_after_ttt(self):
        timer = EventTimerState()
        states = []
        for _ in range(70):
            timer, active = a2_gap_active(-95.0, CFG, timer)
            states.append(active)
        assert states.index(True) == 63  # active on the 64th tick
        assert all(states[63:])

    def test_never_opens_above_threshold(self):
        timer = EventTimerState()
        for _ in range(1000):
            timer, active = a2_gap_active(-85.0, CFG, timer)
            assert not active

    def test_boundary_is_strict(self):
        timer = EventTimerState()
        for _ in range(200):
            timer, active = a2_gap_active(-91.0, CFG, timer)  # -91 + 1 == -90
            assert not active

    def test_interrupted_at_63(self):
        timer = EventTimerState()
        for _ in range(63):
            timer, active = a2_gap_active(-95.0, CFG, timer)
            assert not active
        timer, active = a2_gap_active(-80.0, CFG, timer)
        assert not active and timer.elapsed == 0

    def test_gates_a5_in_engine(self):
        # serving drops to -100 at tick 100; a strong inter-frequency target is always present
        n = 400
        trace = np.full((n, 1, 2), -80.0)
        trace[:, 0, 0] = np.where(np.arange(n) < 100, -85.0, -100.0)
        trace[0, 0, 0] = -70.0  # start on cell 0
        cop = CopVector(64, -96, -116, 640, 10)
        res = run_reference(trace, [0, 1], [52, 78], cop, CFG, epoch_ticks=100)
        (ev,) = res.events
        # A2 opens on tick 100 + 63, A5 then needs 64 more ticks, execution 50 ms
        assert ev[2] == EVENT_A5
        assert ev[0] == 100 + 63 + 63 + 50


class TestExecution:
    @staticmethod
    def user(serving=0):
        return SimpleNamespace(user_id=0, serving_cell=serving, prb_demand=4)

    def test_success(self):
        trace = np.full((200, 2), -100.0)
        led = HandoverLedger()
        u = self.user()
        out = execute_handover(u, 1, trace, 10, CFG, led, EVENT_A3)
        assert out.success and out.end_tick == 60
        assert led.hos == 1 and led.hof == 0 and u.serving_cell == 1

    def test_too_late(self):
        trace = np.full((200, 2), -100.0)
        trace[30, 0] = -130.0
        led = HandoverLedger()
        u = self.user()
        out = execute_handover(u, 1, trace, 10, CFG, led, EVENT_A3)
        assert not out.success and out.cause == CAUSE_TOO_LATE and out.end_tick == 30
        assert led.hof == 1 and led.too_late == 1 and u.serving_cell == 0

    def test_too_early(self):
        trace = np.full((200, 2), -100.0)
        trace[60, 1] = -119.0
        led = HandoverLedger()
        out = execute_handover(self.user(), 1, trace, 10, CFG, led, EVENT_A5)
        assert out.cause == CAUSE_TOO_EARLY and led.a5_hof == 1 and led.too_early == 1

    def test_prbs_move(self):
        cells = [SimpleNamespace(allocated_prbs=8, band=DEFAULT_BANDS[0]),
                 SimpleNamespace(allocated_prbs=0, band=DEFAULT_BANDS[0])]
        trace = np.full((200, 2), -100.0)
        execute_handover(self.user(), 1, trace, 0, CFG, HandoverLedger(), EVENT_A3, cells)
        assert (cells[0].allocated_prbs, cells[1].allocated_prbs) == (4, 4)

    def test_target_equals_serving(self):
        with pytest.raises(HandoverLogicError):
            execute_handover(self.user(1), 1, np.zeros((10, 2)), 0, CFG, HandoverLedger(), EVENT_A3)

    def test_window_past_trace_end_not_counted(self):
        led = HandoverLedger()
        assert execute_handover(self.user(), 1, np.full((30, 2), -100.0), 5, CFG, led, EVENT_A3) is None
        assert led == HandoverLedger()


def test_cop_validation():
    CopVector(64, -116, -96, 640, 10).validate()
    for bad in (CopVector(65, -100, -100, 64, 0), CopVector(64, -117, -100, 64, 0),
                CopVector(64, -100, -95, 64, 0), CopVector(64, -100, -100, 64, 11)):
        with pytest.raises(InputDomainError):
            bad.validate()


def test_ledger_totals():
    led = HandoverLedger()
    led.record(EVENT_A3, True)
    led.record(EVENT_A5, False, CAUSE_TOO_LATE)
    led.record(EVENT_A5, True)
    assert (led.hos, led.hof) == (2, 1)
    merged = led.merge(led)
    assert (merged.hos, merged.hof, merged.too_late) == (4, 2, 2)


# --- two-cell crossover -------------------------------------------------------------------


def _gain(d, f_ghz=3.5, n1=2.9, n2=3.9, dth=150.0):
    g = -fspl_1m_db(f_ghz) - 10 * n1 * math.log10(d)
    if d > dth:
        g -= 10 * n2 * math.log10(d / dth)
    return g


def test_two_cell_crossover():
    """A user walking from cell A to cell B hands over once, where the closed form says."""
    band = DEFAULT_BANDS[2]
    dh = band.antenna_height - USER_HEIGHT_M
    xa, xb, x0, speed = 500.0, 900.0, 520.0, 60.0
    step = speed / 3600.0  # m per 1 ms tick
    n = int(360 / step)
    x = x0 + step * np.arange(n)

    def rsrp(site):
        d = np.sqrt((x - site) ** 2 + dh * dh)
        return np.array([band.tx_power + _gain(v) for v in d])

    trace = np.stack([rsrp(xa), rsrp(xb)], axis=1)[:, None, :]
    cop = CopVector(256, -116, -96, 128, 0)
    res = run_reference(trace, [2, 2], [106, 106], cop, CFG)
    kern = run_engine(trace.astype(np.float32), [2, 2], [106, 106], cop, CFG, log_capacity=100)
    assert (res.ledger.a3_hos, res.ledger.hof, res.ledger.a5_hos) == (1, 0, 0)
    assert kern.ledger == res.ledger

    # entering condition: 10 (n1 + n2) log10(dA / dB) > hyst + off = 1 dB (both beyond d_th);
    # bisect for the crossing with the gain function written out above
    lo, hi = 650.0, 850.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        da = math.hypot(mid - xa, dh)
        db = math.hypot(mid - xb, dh)
        if _gain(db) - 1.0 > _gain(da):
            hi = mid
        else:
            lo = mid
    first_tick = math.ceil((hi - x0) / step)
    (ev,) = res.events
    assert ev[2] == EVENT_A3 and ev[5] == "success" and ev[3:5] == (0, 1)
    # fired after a3_ttt ticks of entering, decided after the execution window
    assert abs(ev[0] - (first_tick + cop.a3_ttt - 1 + CFG.ho_execution_time)) <= 1


# --- whole-engine properties ------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_env():
    net = NetworkConfig(sim_duration=4000)
    scn, trace = environment(net, 3)
    return scn, trace


COPS = [
    CopVector(64, -96, -96, 64, 0),
    CopVector(128, -100, -110, 256, 2),
    CopVector(640, -116, -116, 640, 10),
]


@pytest.mark.parametrize("cop", COPS)
def test_kernel_matches_reference(small_env, cop):
    scn, trace = small_env
    sub = np.ascontiguousarray(trace[:, :20, :])
    ref = run_reference(sub.astype(float), scn.cell_band, scn.cell_prbs, cop, CFG)
    ker = run_engine(sub, scn.cell_band, scn.cell_prbs, cop, CFG, log_capacity=10_000)
    assert ker.ledger == ref.ledger
    assert np.array_equal(ker.final_serving, ref.final_serving)
    assert np.allclose(ker.edge_samples, ref.edge_samples, atol=0, rtol=0)
    assert np.allclose(ker.mean_allocated_prbs, ref.mean_allocated_prbs, rtol=1e-12)
    assert ker.events == ref.events


@pytest.mark.parametrize("cop", COPS)
def test_engine_invariants(small_env, cop):
    scn, trace = small_env
    res = run_engine(trace, scn.cell_band, scn.cell_prbs, cop, CFG, log_capacity=100_000)
    led = res.ledger
    assert led.hos + led.hof == len(res.events)
    assert led.hof == led.too_late + led.too_early
    last = {}
    for t, uid, ev, src, dst, outcome, cause in res.events:
        same_band = scn.cell_band[src] == scn.cell_band[dst]
        assert same_band == (ev == EVENT_A3)
        assert src != dst
        if uid in last:
            # one handover in flight per user: decisions are at least one window apart
            assert t - last[uid] >= CFG.ho_execution_time
        last[uid] = t


def test_unreachable_offset_blocks_a3(small_env):
    scn, trace = small_env
    cop = CopVector(64, -96, -96, 64, 1e9)
    res = run_engine(trace, scn.cell_band, scn.cell_prbs, cop, CFG, log_capacity=100_000)
    assert res.ledger.a3_hos == res.ledger.a3_hof == 0
    assert all(e[2] == EVENT_A5 for e in res.events)
