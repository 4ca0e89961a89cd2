import io
import threading
from fractions import Fraction

import pytest

from aces import AcesConfig, AcesTrace, aces_solve
from aces.aces import DEFAULT_FLAT_BUDGET, DEFAULT_MIN_CYCLE_LENGTH, DEFAULT_TOTAL_BUDGET, TraceRecord, read_trace_csv
from desk import ORACLE_CASES, load_desk
from oracles import brute_force_single_agent


def test_defaults():
    cfg = AcesConfig()
    assert (cfg.total_budget, cfg.flat_budget, cfg.min_cycle_length) == (1800.0, 150.0, 5)
    assert (DEFAULT_TOTAL_BUDGET, DEFAULT_FLAT_BUDGET, DEFAULT_MIN_CYCLE_LENGTH) == (1800.0, 150.0, 5)
    assert cfg.max_cycle_length is None


@pytest.mark.parametrize(
    "kwargs", [dict(flat_budget=0), dict(total_budget=-1), dict(min_cycle_length=0), dict(min_cycle_length=6, max_cycle_length=5)]
)
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        AcesConfig(**kwargs)


def test_corridor_trace(corridor):
    emb, trace = aces_solve(corridor, AcesConfig(60, 10, max_cycle_length=8))
    by_T = {r.T: r for r in trace}
    assert not by_T[5].throughput
    assert by_T[6].throughput == Fraction(1, 6)
    assert emb.throughput == Fraction(1, 6)
    assert emb.cycle_length == 6


def test_zero_budget(corridor):
    emb, trace = aces_solve(corridor, AcesConfig(total_budget=0))
    assert emb is None
    assert len(trace) == 0


def test_short_cycles_skipped_by_default(corridor):
    _, trace = aces_solve(corridor, AcesConfig(60, 10, max_cycle_length=6))
    assert [r.T for r in trace] == [5, 6]


def test_cycle_lengths_consecutive_from_minimum(ring2):
    _, trace = aces_solve(ring2, AcesConfig(60, 10, min_cycle_length=2, max_cycle_length=7))
    assert [r.T for r in trace] == list(range(2, 8))


def test_ties_keep_shorter_cycle(ring2):
    # 1/3 is reached at T=6 and again at T=9.
    res = aces_solve(ring2, AcesConfig(60, 10, min_cycle_length=6, max_cycle_length=9))
    assert res.throughput == Fraction(1, 3)
    assert res.embedding.cycle_length == 6


def test_returned_throughput_is_best_trace_entry(ring2):
    res = aces_solve(ring2, AcesConfig(60, 10, max_cycle_length=8))
    assert res.throughput == max(r.throughput for r in res.trace if r.throughput is not None)
    assert res.flat.throughput == res.embedding.throughput


def test_best_so_far_non_decreasing(ring2):
    _, trace = aces_solve(ring2, AcesConfig(60, 10, min_cycle_length=1, max_cycle_length=8))
    curve = trace.best_so_far
    assert all(a <= b for a, b in zip(curve, curve[1:]))


def test_nothing_found_returns_none(corridor):
    emb, trace = aces_solve(corridor, AcesConfig(60, 10, min_cycle_length=1, max_cycle_length=5))
    assert emb is None
    assert len(trace) == 5


def test_trace_observable_from_another_thread(corridor):
    trace = AcesTrace()
    seen = []
    done = threading.Event()

    def watch():
        while not done.is_set():
            seen.append(len(trace))
            done.wait(0.001)

    th = threading.Thread(target=watch)
    th.start()
    aces_solve(corridor, AcesConfig(60, 10, max_cycle_length=8), trace=trace)
    done.set()
    th.join()
    assert len(trace) == 4
    assert seen == sorted(seen)


def test_trace_csv_round_trip():
    trace = AcesTrace()
    trace.append(TraceRecord(5, "optimal", Fraction(0), 0.25))
    trace.append(TraceRecord(6, "optimal", Fraction(1, 6), 0.5))
    trace.append(TraceRecord(7, "timeout_no_incumbent", None, 2.0))
    text = trace.to_csv()
    assert text.splitlines()[0] == "T,status,throughput,solve_seconds"
    back = read_trace_csv(io.StringIO(text))
    assert [(r.T, r.status, r.throughput) for r in back] == [(r.T, r.status, r.throughput) for r in trace]


def test_trace_csv_rejects_wrong_columns():
    with pytest.raises(ValueError):
        read_trace_csv(io.StringIO("a,b\n1,2\n"))


@pytest.mark.parametrize("name", sorted(ORACLE_CASES))
def test_matches_brute_force_per_cycle_length(name):
    cells, pick, drop, src_rt, sink_rt = ORACLE_CASES[name]
    _, trace = aces_solve(load_desk(name), AcesConfig(120, 30, min_cycle_length=1, max_cycle_length=8))
    for r in trace:
        expected, _ = brute_force_single_agent(cells, pick, drop, r.T, src_rt, sink_rt)
        assert r.status == "optimal"
        assert r.throughput == expected, f"T={r.T}"
