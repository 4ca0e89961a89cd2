"""Exact MILP backends behind one ``solve(model, budget)`` interface.

Two backends ship with the package:

``highs``
    HiGHS through :func:`scipy.optimize.milp`. The default.
``bnb``
    A small depth-first branch and bound over LP relaxations. Deterministic
    and dependency-light, but only practical for desk-scale models (a few
    hundred binaries).

The default backend can be set with the ``ACES_BACKEND`` environment
variable.
"""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .milp import (
    FEAS_TOL,
    FEASIBLE,
    INFEASIBLE,
    OPTIMAL,
    TIMEOUT,
    MilpModel,
    MilpSolution,
)

log = logging.getLogger(__name__)

BACKEND_ENV = "ACES_BACKEND"
DEFAULT_BACKEND = "highs"


class BackendUnavailableError(RuntimeError):
    """The requested solver cannot be used in this environment."""


class SolverError(RuntimeError):
    """The backend returned something that does not satisfy the model."""


@dataclass(frozen=True)
class SolveBudget:
    wall_clock_limit: float
    deadline: Optional[float] = None  # absolute, in time.monotonic() seconds

    def __post_init__(self):
        if not self.wall_clock_limit > 0:
            raise ValueError(f"wall clock limit must be positive, got {self.wall_clock_limit}")

    def remaining(self, start: float) -> float:
        left = self.wall_clock_limit - (time.monotonic() - start)
        if self.deadline is not None:
            left = min(left, self.deadline - time.monotonic())
        return left


def _polish(model: MilpModel, x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    mask = model.integral_mask
    x[mask] = np.round(x[mask])
    x = np.clip(x, model.lb, model.ub)
    bad = model.violations(x, FEAS_TOL)
    if bad:
        raise SolverError(f"backend assignment violates {len(bad)} rows, first: {bad[0]}")
    return x


class HighsBackend:
    name = "highs"

    def __init__(self, mip_rel_gap: float = 1e-9):
        try:
            from scipy.optimize import milp  # noqa: F401
        except ImportError as exc:  # pragma: no cover - scipy is a hard dependency
            raise BackendUnavailableError("scipy.optimize.milp is not available") from exc
        self.mip_rel_gap = mip_rel_gap

    def solve(self, model: MilpModel, budget: SolveBudget) -> MilpSolution:
        from scipy.optimize import Bounds, LinearConstraint, milp

        start = time.monotonic()
        limit = budget.remaining(start)
        if limit <= 0:
            return MilpSolution(TIMEOUT)
        lo, hi = model.row_bounds()
        constraints = [LinearConstraint(model.A, lo, hi)] if model.n_rows else []
        res = milp(
            -model.objective,
            integrality=model.integral_mask.astype(int),
            bounds=Bounds(model.lb, model.ub),
            constraints=constraints,
            options={"time_limit": max(limit, 1e-3), "disp": False, "mip_rel_gap": self.mip_rel_gap},
        )
        wall = time.monotonic() - start
        if res.status == 2:
            return MilpSolution(INFEASIBLE, wall_time=wall)
        if res.x is None:
            if res.status in (0, 1):
                return MilpSolution(TIMEOUT, wall_time=wall)
            raise SolverError(f"HiGHS failed: {res.message}")
        x = _polish(model, res.x)
        status = OPTIMAL if res.status == 0 else FEASIBLE
        return MilpSolution(status, x, model.objective_value(x), wall)


class BranchAndBoundBackend:
    """Depth-first branch and bound with LP relaxations solved by HiGHS' simplex.

    Branches on the most fractional integral variable and dives into the
    side nearest the relaxation value first. Deterministic for a fixed model.
    """

    name = "bnb"

    def __init__(self, tol: float = 1e-9, max_nodes: Optional[int] = None):
        self.tol = tol
        self.max_nodes = max_nodes
        self.nodes = 0

    def solve(self, model: MilpModel, budget: SolveBudget) -> MilpSolution:
        from scipy.optimize import linprog

        start = time.monotonic()
        A = model.A.tocsr()
        le, ge, eq = model.senses == "<=", model.senses == ">=", model.senses == "=="
        A_ub = None
        b_ub = None
        if le.any() or ge.any():
            import scipy.sparse as sp

            A_ub = sp.vstack([A[le], -A[ge]]).tocsr()
            b_ub = np.concatenate([model.rhs[le], -model.rhs[ge]])
        A_eq = A[eq] if eq.any() else None
        b_eq = model.rhs[eq] if eq.any() else None
        c = -model.objective
        integral = np.flatnonzero(model.integral_mask)

        best_x, best_val = None, -np.inf
        stack = [(model.lb.copy(), model.ub.copy())]
        self.nodes = 0
        exhausted = True
        while stack:
            left = budget.remaining(start)
            if left <= 0 or (self.max_nodes is not None and self.nodes >= self.max_nodes):
                exhausted = False
                break
            lb, ub = stack.pop()
            self.nodes += 1
            res = linprog(
                c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                bounds=np.column_stack([lb, ub]), method="highs",
                options={"time_limit": max(left, 1e-3)},
            )
            if res.status == 1:  # LP hit the time limit
                exhausted = False
                break
            if res.status != 0:
                continue  # infeasible node
            val = -res.fun + model.objective_constant
            if val <= best_val + self.tol:
                continue
            x = res.x
            frac = np.abs(x[integral] - np.round(x[integral]))
            if frac.max(initial=0.0) <= 1e-7:
                best_x, best_val = x, val
                continue
            j = integral[int(np.argmax(frac))]
            down_ub = ub.copy()
            down_ub[j] = np.floor(x[j])
            up_lb = lb.copy()
            up_lb[j] = np.ceil(x[j])
            down, up = (lb, down_ub), (up_lb, ub)
            # The side pushed last is explored first.
            if x[j] - np.floor(x[j]) >= 0.5:
                stack += [down, up]
            else:
                stack += [up, down]
        wall = time.monotonic() - start
        if best_x is None:
            return MilpSolution(INFEASIBLE if exhausted else TIMEOUT, wall_time=wall)
        x = _polish(model, best_x)
        return MilpSolution(OPTIMAL if exhausted else FEASIBLE, x, model.objective_value(x), wall)


_BACKENDS = {"highs": HighsBackend, "bnb": BranchAndBoundBackend}


def backend_names() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def get_backend(name: Optional[str] = None):
    """Instantiate a backend by name, falling back to ``$ACES_BACKEND`` then ``highs``."""
    name = name or os.environ.get(BACKEND_ENV) or DEFAULT_BACKEND
    try:
        cls = _BACKENDS[name]
    except KeyError:
        raise BackendUnavailableError(f"unknown solver backend {name!r}; known: {', '.join(_BACKENDS)}") from None
    return cls()


def solve(model: MilpModel, budget: SolveBudget, backend=None) -> MilpSolution:
    if backend is None or isinstance(backend, str):
        backend = get_backend(backend)
    sol = backend.solve(model, budget)
    log.debug("%s: %s obj=%s in %.2fs", backend.name, sol.status, sol.objective, sol.wall_time)
    return sol


def solve_lp_file(path, budget: SolveBudget, backend=None) -> tuple[MilpModel, MilpSolution]:
    """Read an LP-format file and solve it."""
    from .lpfile import read_lp

    with open(path) as fh:
        model = read_lp(fh.read())
    return model, solve(model, budget, backend)
