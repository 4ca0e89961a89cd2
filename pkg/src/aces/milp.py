"""Compile a factory instance and a cycle length into a MILP, and read plans back out.

The model is solver-neutral: a sparse constraint matrix with named rows and
columns, an objective to maximise, and per-variable kinds and bounds. All
coefficients are integers; rate caps are written as ``D * R <= 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .model import (
    FactoryInstance,
    FlatEmbedding,
    InvalidInstanceError,
    validate_factory,
)

BINARY, CONTINUOUS, INTEGER = "B", "C", "I"

#: Integrality tolerance for rounding binaries out of a solver assignment.
INT_TOL = 1e-6
#: Feasibility tolerance used when checking a float assignment against the rows.
FEAS_TOL = 1e-6

OPTIMAL = "optimal"
FEASIBLE = "feasible_incumbent"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout_no_incumbent"


@dataclass(frozen=True, eq=False)
class MilpModel:
    """A maximisation MILP ``max c.x  s.t.  rows(A x) <sense> rhs, lb <= x <= ub``."""

    var_names: tuple[str, ...]
    var_kinds: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    objective: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray  # "<=", ">=", "=="
    rhs: np.ndarray
    row_names: tuple[str, ...]
    row_families: tuple[str, ...]
    blocks: dict = field(default_factory=dict)
    objective_constant: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def index(self, name: str) -> int:
        return self._name_index[name]

    @property
    def _name_index(self) -> dict[str, int]:
        cached = self.__dict__.get("_names_cache")
        if cached is None:
            cached = {n: i for i, n in enumerate(self.var_names)}
            object.__setattr__(self, "_names_cache", cached)
        return cached

    @property
    def integral_mask(self) -> np.ndarray:
        return self.var_kinds != CONTINUOUS

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.senses == "<=", -np.inf, self.rhs)
        hi = np.where(self.senses == ">=", np.inf, self.rhs)
        return lo, hi

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ x) + self.objective_constant

    def violations(self, x: np.ndarray, tol: float = FEAS_TOL) -> list[tuple[str, float]]:
        """All rows, bounds and integrality requirements that ``x`` breaks by more than ``tol``."""
        x = np.asarray(x, dtype=float)
        out: list[tuple[str, float]] = []
        ax = self.A @ x
        lo, hi = self.row_bounds()
        excess = np.maximum(lo - ax, ax - hi)
        for i in np.flatnonzero(excess > tol):
            out.append((self.row_names[i], float(excess[i])))
        bexcess = np.maximum(self.lb - x, x - self.ub)
        for i in np.flatnonzero(bexcess > tol):
            out.append((f"bound:{self.var_names[i]}", float(bexcess[i])))
        frac = np.abs(x - np.round(x))
        for i in np.flatnonzero((frac > INT_TOL) & self.integral_mask):
            out.append((f"integrality:{self.var_names[i]}", float(frac[i])))
        return out

    def count(self, block: str) -> int:
        return int(self.blocks[block].size)


@dataclass(frozen=True, eq=False)
class MilpSolution:
    status: str
    values: Optional[np.ndarray] = None
    objective: Optional[float] = None
    wall_time: float = 0.0

    @property
    def has_assignment(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE) and self.values is not None


class ModelBuilder:
    """Accumulates columns and sparse rows, then freezes them into a :class:`MilpModel`."""

    def __init__(self):
        self.names: list[str] = []
        self.kinds: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: dict[int, float] = {}
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.row_families: list[str] = []
        self.blocks: dict[str, np.ndarray] = {}

    def add_var(self, name: str, kind: str = BINARY, lb: float = 0.0, ub: float = 1.0) -> int:
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(lb)
        self.ub.append(ub)
        return len(self.names) - 1

    def add_block(self, key: str, shape: tuple[int, ...], namer, kind=BINARY, lb=0.0, ub=1.0) -> np.ndarray:
        idx = np.empty(shape, dtype=np.int64)
        for pos in np.ndindex(*shape):
            idx[pos] = self.add_var(namer(*pos), kind, lb, ub)
        idx.flags.writeable = False
        self.blocks[key] = idx
        return idx

    def add_row(self, family: str, name: str, terms, sense: str, rhs: float) -> None:
        r = len(self.senses)
        for col, coef in terms:
            if coef != 0:
                self._rows.append(r)
                self._cols.append(int(col))
                self._vals.append(coef)
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.row_names.append(f"{family}({name})")
        self.row_families.append(family)

    def build(self) -> MilpModel:
        n = len(self.names)
        A = sp.csr_matrix(
            (np.asarray(self._vals, dtype=float), (self._rows, self._cols)), shape=(len(self.senses), n)
        )
        A.sum_duplicates()
        c = np.zeros(n)
        for i, v in self.obj.items():
            c[i] += v
        return MilpModel(
            var_names=tuple(self.names),
            var_kinds=np.asarray(self.kinds),
            lb=np.asarray(self.lb, dtype=float),
            ub=np.asarray(self.ub, dtype=float),
            objective=c,
            A=A,
            senses=np.asarray(self.senses),
            rhs=np.asarray(self.rhs, dtype=float),
            row_names=tuple(self.row_names),
            row_families=tuple(self.row_families),
            blocks=dict(self.blocks),
        )


def _cname(cell) -> str:
    return f"{cell[0]}_{cell[1]}"


def build_flat_milp(instance: FactoryInstance, T: int) -> MilpModel:
    """MILP for the fixed-cycle-length agent-token problem with cycle length ``T``.

    Row families ``C1``..``C15`` follow the formulation's constraint numbering;
    ``RUNS`` ties each rate to an integer run count per cycle and ``WRAP``
    closes the loop on token positions.
    """
    if T < 1:
        raise ValueError(f"cycle length must be >= 1, got {T}")
    report = validate_factory(instance)
    if not report.ok:
        raise InvalidInstanceError(report)

    cells, toks, arcs, io = instance.cells, instance.tokens, instance.arcs, instance.io_cells
    mids, pids = instance.machine_ids, instance.process_ids
    K, nul = len(toks), instance.null_index
    material = range(K - 1)
    D = instance.runtimes
    b = ModelBuilder()

    X = b.add_block("X", (len(mids), len(pids)), lambda i, j: f"X({mids[i]},{pids[j]})")
    R = b.add_block("R", (len(mids), len(pids)), lambda i, j: f"R({mids[i]},{pids[j]})", CONTINUOUS, 0.0, 1.0)
    N = b.add_block(
        "N", (len(mids), len(pids)), lambda i, j: f"N({mids[i]},{pids[j]})", INTEGER, 0.0, float(T)
    )
    At = b.add_block(
        "At", (len(cells), T + 1, K), lambda c, t, k: f"At({_cname(cells[c])},{t},{toks[k]})"
    )
    Mv = b.add_block(
        "Mv",
        (len(arcs), T, K),
        lambda a, t, k: f"Mv({_cname(arcs[a][0])},{_cname(arcs[a][1])},{t},{toks[k]})",
    )
    Pl = b.add_block("Pl", (len(io), T, K), lambda c, t, k: f"Pl({_cname(io[c])},{t},{toks[k]})")
    Rm = b.add_block("Rm", (len(io), T, K), lambda c, t, k: f"Rm({_cname(io[c])},{t},{toks[k]})")

    pout = instance.output_process_index
    for i in range(len(mids)):
        b.obj[int(R[i, pout])] = 1.0

    # Machine configuration.
    for i, m in enumerate(mids):
        b.add_row("C1", m, [(X[i, j], 1) for j in range(len(pids))], "<=", 1)
        for j, p in enumerate(pids):
            if D[i, j] == 0:
                b.add_row("C2", f"{m},{p}", [(X[i, j], 1)], "==", 0)
            else:
                b.add_row("C3", f"{m},{p}", [(R[i, j], int(D[i, j]))], "<=", 1)
            b.add_row("C4", f"{m},{p}", [(R[i, j], 1), (X[i, j], -1)], "<=", 0)
            b.add_row("RUNS", f"{m},{p}", [(R[i, j], T), (N[i, j], -1)], "==", 0)

    # Buffer entry and exit balance over one cycle.
    ins, outs = instance.input_counts, instance.output_counts
    for i, mach in enumerate(instance.machines):
        for side, cell, counts, tensor, fam in (
            ("in", mach.input_cell, ins, Rm, "C5"),
            ("out", mach.output_cell, outs, Pl, "C6"),
        ):
            if cell is None:
                continue
            ci = instance.io_index[cell]
            for k in material:
                terms = [(tensor[ci, t, k], 1) for t in range(T)]
                terms += [(R[i, j], -int(counts[j, k]) * T) for j in range(len(pids)) if counts[j, k]]
                b.add_row(fam, f"{mach.id},{toks[k]}", terms, "==", 0)

    # Token movement.
    out_arcs: dict[int, list[int]] = {c: [] for c in range(len(cells))}
    in_arcs: dict[int, list[int]] = {c: [] for c in range(len(cells))}
    cidx = instance.cell_index
    for a, (u, v) in enumerate(arcs):
        out_arcs[cidx[u]].append(a)
        in_arcs[cidx[v]].append(a)
    for c, cell in enumerate(cells):
        io_i = instance.io_index.get(cell)
        for t in range(T):
            for k in range(K):
                tag = f"{_cname(cell)},{t},{toks[k]}"
                terms = [(At[c, t, k], 1)] + [(Mv[a, t, k], -1) for a in out_arcs[c]]
                if io_i is not None:
                    terms.append((Rm[io_i, t, k], -1))
                b.add_row("C7", tag, terms, "==", 0)
                terms = [(At[c, t + 1, k], 1)] + [(Mv[a, t, k], -1) for a in in_arcs[c]]
                if io_i is not None:
                    terms.append((Pl[io_i, t, k], -1))
                b.add_row("C8", tag, terms, "==", 0)
        for t in range(T + 1):
            b.add_row("C9", f"{_cname(cell)},{t}", [(At[c, t, k], 1) for k in range(K)], "<=", 1)

    in_set, out_set = set(instance.input_cells), set(instance.output_cells)
    for ci, cell in enumerate(io):
        for t in range(T):
            tag = f"{_cname(cell)},{t}"
            if cell in in_set:
                b.add_row("C10", tag, [(Rm[ci, t, k], 1) for k in material] + [(Pl[ci, t, nul], -1)], "==", 0)
                for k in material:
                    b.add_row("C12", f"{tag},{toks[k]}", [(Pl[ci, t, k], 1)], "==", 0)
                b.add_row("C13", tag, [(Rm[ci, t, nul], 1)], "==", 0)
            if cell in out_set:
                b.add_row("C11", tag, [(Pl[ci, t, k], 1) for k in material] + [(Rm[ci, t, nul], -1)], "==", 0)
                for k in material:
                    b.add_row("C12", f"{tag},{toks[k]}", [(Rm[ci, t, k], 1)], "==", 0)
                b.add_row("C13", tag, [(Pl[ci, t, nul], 1)], "==", 0)

    aidx = instance.arc_index
    for u, v in instance.movement_graph.edges:
        if u == v:
            continue
        fwd, back = aidx[(u, v)], aidx[(v, u)]
        for t in range(T):
            terms = [(Mv[fwd, t, k], 1) for k in range(K)] + [(Mv[back, t, k], 1) for k in range(K)]
            b.add_row("C14", f"{_cname(u)},{_cname(v)},{t}", terms, "<=", 1)

    for t in range(T + 1):
        terms = [(At[c, t, k], 1) for c in range(len(cells)) for k in range(K)]
        b.add_row("C15", str(t), terms, "<=", instance.agent_budget)

    for c, cell in enumerate(cells):
        for k in range(K):
            b.add_row("WRAP", f"{_cname(cell)},{toks[k]}", [(At[c, T, k], 1), (At[c, 0, k], -1)], "==", 0)

    return b.build()


class ExtractionError(ValueError):
    pass


def _round_block(values: np.ndarray, idx: np.ndarray, name: str) -> np.ndarray:
    v = values[idx]
    r = np.round(v)
    bad = np.abs(v - r) > INT_TOL
    if bad.any():
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ExtractionError(f"{name}{where} = {v[where]!r} is not integral within {INT_TOL}")
    return r.astype(np.int64)


def extract_flat_embedding(
    model: MilpModel, solution: MilpSolution, instance: FactoryInstance, T: int
) -> FlatEmbedding:
    """Read the plan tensors out of a solver assignment, rounding integral variables."""
    if not solution.has_assignment:
        raise ExtractionError(f"solution has no assignment (status {solution.status})")
    values = np.asarray(solution.values, dtype=float)
    blocks = model.blocks
    return FlatEmbedding(
        cycle_length=T,
        assignment=_round_block(values, blocks["X"], "X"),
        runs=_round_block(values, blocks["N"], "N"),
        positions=_round_block(values, blocks["At"], "At"),
        moves=_round_block(values, blocks["Mv"], "Mv"),
        placements=_round_block(values, blocks["Pl"], "Pl"),
        removals=_round_block(values, blocks["Rm"], "Rm"),
        output_process=instance.output_process_index,
    )


def _multiset(counts, tokens) -> tuple[tuple[str, int], ...]:
    return tuple(sorted((tok, int(n)) for tok, n in zip(tokens, counts) if n))


def initialize_buffers(embedding: FlatEmbedding, instance: FactoryInstance) -> FlatEmbedding:
    """Seed each buffer with what its machine consumes / emits over one cycle."""
    material = instance.procedure.token_ids
    nmat = len(material)
    ins, outs = [], []
    for m in instance.machines:
        if m.input_cell is None:
            ins.append(())
        else:
            ci = instance.io_index[m.input_cell]
            ins.append(_multiset(embedding.removals[ci, :, :nmat].sum(axis=0), material))
        if m.output_cell is None:
            outs.append(())
        else:
            ci = instance.io_index[m.output_cell]
            outs.append(_multiset(embedding.placements[ci, :, :nmat].sum(axis=0), material))
    return replace(embedding, initial_input_buffers=tuple(ins), initial_output_buffers=tuple(outs))


def expected_counts(instance: FactoryInstance, T: int) -> dict[str, int]:
    """Closed-form sizes of the plan tensors."""
    C, K = len(instance.cells), len(instance.tokens)
    E = len(instance.movement_graph.edges)
    return {
        "At": C * (T + 1) * K,
        "Mv": 2 * (E - C) * T * K + C * T * K,
        "Pl": len(instance.io_cells) * T * K,
        "Rm": len(instance.io_cells) * T * K,
    }
