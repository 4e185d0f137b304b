import io
import json

import pytest
from hypothesis import given, strategies as st

from edflow.kernel import EventCalendar, EventLog, PastTimeError, run_until
from edflow.stochastic import ArrivalProfile, fork_stream


def test_single_event():
    cal = EventCalendar()
    cal.schedule(5.0, kind=1)
    assert len(cal) == 1
    assert cal.peek_time() == 5.0
    assert cal.pop_next().fire_time == 5.0


def test_tie_break_is_insertion_order():
    cal = EventCalendar()
    cal.schedule(5.0, kind=1, subject=100)
    cal.schedule(5.0, kind=1, subject=200)
    assert [cal.pop_next().subject for _ in range(2)] == [100, 200]


def test_past_time_rejected():
    cal = EventCalendar()
    cal.schedule(10.0, 0)
    cal.pop_next()
    with pytest.raises(PastTimeError):
        cal.schedule(9.0, 0)


def test_non_finite_rejected():
    with pytest.raises(PastTimeError):
        EventCalendar().schedule(float("inf"), 0)


def test_heap_order_and_clock():
    cal = EventCalendar()
    for t in (3.0, 1.0, 2.0):
        cal.schedule(t, 0)
    times = []
    while (rec := cal.pop_next()) is not None:
        times.append(rec.fire_time)
        assert cal.clock == rec.fire_time
    assert times == [1.0, 2.0, 3.0]


def test_empty_pop_returns_none():
    assert EventCalendar().pop_next() is None


def test_clock_after_pop():
    cal = EventCalendar()
    cal.schedule(7.0, 0)
    cal.pop_next()
    assert cal.clock == 7.0


@given(st.lists(st.floats(min_value=0, max_value=1e6, allow_nan=False), min_size=1, max_size=200))
def test_pop_order_total(times):
    cal = EventCalendar()
    for i, t in enumerate(times):
        cal.schedule(t, 0, subject=i)
    out = []
    while (rec := cal.pop_next()) is not None:
        out.append((rec.fire_time, rec.sequence))
    assert out == sorted(out)
    assert len(set(out)) == len(times)


def _arrival_run(horizon, seed=1, trace=None):
    cal = EventCalendar()
    profile = ArrivalProfile.constant(12.0)
    stream = fork_stream(seed, "arrivals")
    count = [0]

    def dispatch(rec):
        count[0] += 1
        cal.schedule(profile.next_arrival(cal.clock, stream), 0)

    cal.schedule(profile.next_arrival(0.0, stream), 0)
    return run_until(cal, dispatch, horizon, trace=trace), count[0]


def test_run_until_three_weeks_with_arrivals():
    clock, n = _arrival_run(30240.0)
    assert clock == 30240.0
    assert n > 0


def test_run_until_zero_dispatches_nothing():
    clock, n = _arrival_run(0.0)
    assert (clock, n) == (0.0, 0)


def test_identical_seed_identical_trace():
    logs = []
    for _ in range(2):
        buf = io.StringIO()
        _arrival_run(2000.0, seed=9, trace=EventLog(buf, {0: "arrival"}))
        logs.append(buf.getvalue())
    assert logs[0] == logs[1]
    first = json.loads(logs[0].splitlines()[0])
    assert first["kind"] == "arrival" and first["sequence"] == 0


def test_clock_never_decreases():
    cal = EventCalendar()
    seen = []

    def dispatch(rec):
        seen.append(cal.clock)
        if rec.subject < 50:
            cal.schedule(cal.clock + (rec.subject % 3), 0, rec.subject + 1)

    cal.schedule(0.0, 0, 0)
    run_until(cal, dispatch, 1e9)
    assert seen == sorted(seen)


def test_dispatch_errors_propagate():
    cal = EventCalendar()
    cal.schedule(1.0, 0)

    def boom(rec):
        raise KeyError("x")

    with pytest.raises(KeyError):
        run_until(cal, boom, 10.0)
