import time

import numpy as np
import pytest

from aces import BackendUnavailableError, SolveBudget, build_flat_milp, get_backend, solve
from aces.milp import BINARY, CONTINUOUS, FEASIBLE, INFEASIBLE, OPTIMAL, TIMEOUT, ModelBuilder
from aces.solvers import BranchAndBoundBackend, backend_names

BACKENDS = backend_names()


def _unit_lp():
    b = ModelBuilder()
    x = b.add_var("x", CONTINUOUS, 0.0, 1.0)
    b.obj[x] = 1.0
    return b.build()


def _infeasible_binaries():
    b = ModelBuilder()
    x, y = b.add_var("x", BINARY), b.add_var("y", BINARY)
    b.add_row("c", "0", [(x, 1), (y, 1)], ">=", 3)
    return b.build()


def _knapsack():
    # max 5a + 4b + 3c  s.t.  2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, integer in [0, 10]
    b = ModelBuilder()
    v = [b.add_var(n, "I", 0.0, 10.0) for n in "abc"]
    for i, c in zip(v, (5, 4, 3)):
        b.obj[i] = c
    for coefs, rhs in (((2, 3, 1), 5), ((4, 1, 2), 11), ((3, 4, 2), 8)):
        b.add_row("k", str(rhs), list(zip(v, coefs)), "<=", rhs)
    return b.build()


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_variable_lp(backend):
    sol = solve(_unit_lp(), SolveBudget(10), backend)
    assert sol.status == OPTIMAL
    assert sol.values[0] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    sol = solve(_infeasible_binaries(), SolveBudget(10), backend)
    assert sol.status == INFEASIBLE
    assert not sol.has_assignment


@pytest.mark.parametrize("backend", BACKENDS)
def test_small_integer_program(backend):
    # Optimum found by enumerating all 11^3 points.
    model = _knapsack()
    best = max(
        5 * a + 4 * b_ + 3 * c
        for a in range(11) for b_ in range(11) for c in range(11)
        if 2 * a + 3 * b_ + c <= 5 and 4 * a + b_ + 2 * c <= 11 and 3 * a + 4 * b_ + 2 * c <= 8
    )
    sol = solve(model, SolveBudget(10), backend)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(best)
    assert model.violations(sol.values) == []


@pytest.mark.parametrize("backend", BACKENDS)
def test_corridor_t6(backend, corridor):
    sol = solve(build_flat_milp(corridor, 6), SolveBudget(60), backend)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1 / 6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_corridor_t5_has_zero_optimum(backend, corridor):
    sol = solve(build_flat_milp(corridor, 5), SolveBudget(60), backend)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_budget_is_honoured(backend, toy_car):
    model = build_flat_milp(toy_car, 12)
    limit = 1.0
    t0 = time.monotonic()
    sol = solve(model, SolveBudget(limit), backend)
    elapsed = time.monotonic() - t0
    assert elapsed <= 2 * limit
    assert sol.status in (OPTIMAL, FEASIBLE, TIMEOUT)
    if sol.has_assignment:
        assert model.violations(sol.values) == []


def test_expired_deadline_returns_timeout(corridor):
    budget = SolveBudget(10, deadline=time.monotonic() - 1)
    for name in BACKENDS:
        assert solve(build_flat_milp(corridor, 6), budget, name).status == TIMEOUT


def test_node_limit_reports_timeout_or_incumbent(corridor):
    backend = BranchAndBoundBackend(max_nodes=1)
    sol = backend.solve(build_flat_milp(corridor, 7), SolveBudget(10))
    assert backend.nodes == 1
    assert sol.status in (FEASIBLE, TIMEOUT)


def test_bnb_is_deterministic(ring2):
    model = build_flat_milp(ring2, 6)
    a = get_backend("bnb").solve(model, SolveBudget(30))
    b = get_backend("bnb").solve(model, SolveBudget(30))
    assert np.array_equal(a.values, b.values)


def test_unknown_backend():
    with pytest.raises(BackendUnavailableError):
        get_backend("cplex")


def test_backend_from_environment(monkeypatch):
    monkeypatch.setenv("ACES_BACKEND", "bnb")
    assert get_backend().name == "bnb"
    monkeypatch.setenv("ACES_BACKEND", "nope")
    with pytest.raises(BackendUnavailableError):
        get_backend()


def test_budget_must_be_positive():
    with pytest.raises(ValueError):
        SolveBudget(0)
