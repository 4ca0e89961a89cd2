"""Core entities: tokens, processes, machines, grid layouts and embeddings.

Everything here is immutable after construction. Validation never raises;
problems are collected into a :class:`ValidationReport` carrying
machine-readable codes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Optional

import numpy as np

Cell = tuple[int, int]
Arc = tuple[Cell, Cell]

NULL_TOKEN_ID = "null"


@dataclass(frozen=True)
class Token:
    id: str
    is_null: bool = False


NULL_TOKEN = Token(NULL_TOKEN_ID, is_null=True)


def _frozen_multiset(items: Mapping[str, int] | Iterable[tuple[str, int]] | None) -> tuple[tuple[str, int], ...]:
    if items is None:
        return ()
    if isinstance(items, Mapping):
        items = items.items()
    return tuple(sorted((str(k), int(v)) for k, v in items))


@dataclass(frozen=True)
class Process:
    """An atomic step turning an input multiset of tokens into an output multiset.

    ``inputs`` and ``outputs`` are stored as sorted ``(token, count)`` tuples so
    that processes are hashable; use :meth:`consumes` / :meth:`emits` for lookups.
    """

    id: str
    inputs: tuple[tuple[str, int], ...] = ()
    outputs: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", _frozen_multiset(self.inputs))
        object.__setattr__(self, "outputs", _frozen_multiset(self.outputs))

    @property
    def is_source(self) -> bool:
        return not self.inputs

    @property
    def is_sink(self) -> bool:
        return not self.outputs

    def consumes(self, token: str) -> int:
        return dict(self.inputs).get(token, 0)

    def emits(self, token: str) -> int:
        return dict(self.outputs).get(token, 0)


@dataclass(frozen=True)
class ManufacturingProcedure:
    tokens: tuple[Token, ...]
    processes: tuple[Process, ...]
    output_process: Optional[str]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "processes", tuple(self.processes))

    @cached_property
    def token_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tokens)

    @cached_property
    def process_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.processes)

    def process(self, pid: str) -> Process:
        for p in self.processes:
            if p.id == pid:
                return p
        raise KeyError(pid)


@dataclass(frozen=True)
class GridLayout:
    width: int
    height: int
    traversable: frozenset[Cell]

    def __post_init__(self):
        object.__setattr__(
            self, "traversable", frozenset((int(x), int(y)) for x, y in self.traversable)
        )

    @classmethod
    def from_rows(cls, rows: Iterable[str]) -> "GridLayout":
        """Build a layout from ASCII rows; ``.`` is traversable, anything else blocked.

        Row ``y`` is the ``y``-th string, column ``x`` its ``x``-th character.
        """
        rows = list(rows)
        width = max((len(r) for r in rows), default=0)
        cells = {(x, y) for y, row in enumerate(rows) for x, ch in enumerate(row) if ch == "."}
        return cls(width, len(rows), frozenset(cells))

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class MovementGraph:
    """Undirected movement graph. ``edges`` holds ``(u, v)`` with ``u <= v``,
    self-loops included; ``vertices`` is sorted."""

    vertices: tuple[Cell, ...]
    edges: tuple[Arc, ...]

    @cached_property
    def neighbors(self) -> dict[Cell, tuple[Cell, ...]]:
        nb: dict[Cell, list[Cell]] = {v: [] for v in self.vertices}
        for u, v in self.edges:
            nb[u].append(v)
            if u != v:
                nb[v].append(u)
        return {v: tuple(sorted(n)) for v, n in nb.items()}

    @cached_property
    def arcs(self) -> tuple[Arc, ...]:
        """Directed arcs: both directions of each non-loop edge plus each self-loop."""
        out: list[Arc] = []
        for u, v in self.edges:
            out.append((u, v))
            if u != v:
                out.append((v, u))
        return tuple(sorted(out))

    def adjacent(self, u: Cell, v: Cell) -> bool:
        return v in self.neighbors.get(u, ())


def build_movement_graph(layout: GridLayout) -> MovementGraph:
    """Movement graph of a 4-connected grid: side-sharing pairs plus one self-loop per cell."""
    if not layout.traversable:
        raise ValueError("no traversable cells")
    cells = tuple(sorted(layout.traversable))
    edges: list[Arc] = []
    for x, y in cells:
        edges.append(((x, y), (x, y)))
        for nxt in ((x + 1, y), (x, y + 1)):
            if nxt in layout.traversable:
                edges.append(((x, y), nxt))
    return MovementGraph(cells, tuple(sorted(edges)))


@dataclass(frozen=True)
class Machine:
    id: str
    capabilities: tuple[tuple[str, int], ...]  # (process id, runtime in timesteps)
    input_cell: Optional[Cell] = None
    output_cell: Optional[Cell] = None

    def __post_init__(self):
        caps = self.capabilities
        if isinstance(caps, Mapping):
            caps = caps.items()
        object.__setattr__(self, "capabilities", tuple(sorted((str(p), int(d)) for p, d in caps)))
        for name in ("input_cell", "output_cell"):
            c = getattr(self, name)
            if c is not None:
                object.__setattr__(self, name, (int(c[0]), int(c[1])))

    def runtime(self, pid: str) -> Optional[int]:
        return dict(self.capabilities).get(pid)

    def supports(self, pid: str) -> bool:
        return pid in dict(self.capabilities)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    subject: object = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    sources: frozenset[str] = frozenset()
    sinks: frozenset[str] = frozenset()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(f"{v.code}: {v.message}" for v in self.violations)


def _procedure_violations(procedure: ManufacturingProcedure) -> list[Violation]:
    out: list[Violation] = []
    known = set()
    for tok in procedure.tokens:
        if tok.is_null or tok.id == NULL_TOKEN_ID:
            out.append(Violation("NULL_IN_ALPHABET", f"null token {tok.id!r} listed as a material token", tok.id))
        elif tok.id in known:
            out.append(Violation("DUPLICATE_TOKEN", f"token {tok.id!r} declared twice", tok.id))
        known.add(tok.id)
    seen = set()
    for p in procedure.processes:
        if p.id in seen:
            out.append(Violation("DUPLICATE_PROCESS", f"process {p.id!r} declared twice", p.id))
        seen.add(p.id)
        for side, items in (("inputs", p.inputs), ("outputs", p.outputs)):
            for tok, count in items:
                if tok == NULL_TOKEN_ID:
                    out.append(Violation("NULL_TOKEN_IN_PROCESS", f"{p.id} {side} contain the null token", p.id))
                elif tok not in known:
                    out.append(Violation("UNKNOWN_TOKEN", f"{p.id} {side} reference unknown token {tok!r}", p.id))
                if count < 1:
                    out.append(Violation("NONPOSITIVE_COUNT", f"{p.id} {side} has count {count} for {tok!r}", p.id))
    if procedure.output_process is None:
        out.append(Violation("NO_OUTPUT_PROCESS", "no output process designated"))
    elif procedure.output_process not in seen:
        out.append(Violation("NO_OUTPUT_PROCESS", f"output process {procedure.output_process!r} is not a process"))
    else:
        pout = procedure.process(procedure.output_process)
        if not pout.is_sink:
            out.append(Violation("OUTPUT_NOT_SINK", "output process must be a sink", pout.id))
        if pout.is_source:
            out.append(Violation("OUTPUT_NO_INPUTS", "output process must consume tokens", pout.id))
    return out


def validate_procedure(procedure: ManufacturingProcedure) -> ValidationReport:
    violations = _procedure_violations(procedure)
    return ValidationReport(
        tuple(violations),
        frozenset(p.id for p in procedure.processes if p.is_source),
        frozenset(p.id for p in procedure.processes if p.is_sink),
    )


@dataclass(frozen=True)
class FactoryInstance:
    """A manufacturing procedure together with the factory it runs in."""

    procedure: ManufacturingProcedure
    machines: tuple[Machine, ...]
    layout: GridLayout
    agent_budget: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "machines", tuple(self.machines))

    @cached_property
    def movement_graph(self) -> MovementGraph:
        return build_movement_graph(self.layout)

    # Index orders shared by the MILP, the embeddings, and the validator.

    @cached_property
    def cells(self) -> tuple[Cell, ...]:
        return tuple(sorted(self.layout.traversable))

    @cached_property
    def cell_index(self) -> dict[Cell, int]:
        return {c: i for i, c in enumerate(self.cells)}

    @cached_property
    def tokens(self) -> tuple[str, ...]:
        """Material token ids followed by the null token id (always last)."""
        return self.procedure.token_ids + (NULL_TOKEN_ID,)

    @property
    def null_index(self) -> int:
        return len(self.tokens) - 1

    @cached_property
    def token_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    @cached_property
    def arcs(self) -> tuple[Arc, ...]:
        return self.movement_graph.arcs

    @cached_property
    def arc_index(self) -> dict[Arc, int]:
        return {a: i for i, a in enumerate(self.arcs)}

    @cached_property
    def input_cells(self) -> tuple[Cell, ...]:
        return tuple(sorted(m.input_cell for m in self.machines if m.input_cell is not None))

    @cached_property
    def output_cells(self) -> tuple[Cell, ...]:
        return tuple(sorted(m.output_cell for m in self.machines if m.output_cell is not None))

    @cached_property
    def io_cells(self) -> tuple[Cell, ...]:
        return tuple(sorted(set(self.input_cells) | set(self.output_cells)))

    @cached_property
    def io_index(self) -> dict[Cell, int]:
        return {c: i for i, c in enumerate(self.io_cells)}

    @cached_property
    def machine_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.machines)

    @cached_property
    def process_ids(self) -> tuple[str, ...]:
        return self.procedure.process_ids

    def machine(self, mid: str) -> Machine:
        for m in self.machines:
            if m.id == mid:
                return m
        raise KeyError(mid)

    @cached_property
    def runtimes(self) -> np.ndarray:
        """Machine x process runtime matrix; 0 marks an unsupported process."""
        d = np.zeros((len(self.machines), len(self.process_ids)), dtype=np.int64)
        pidx = {p: j for j, p in enumerate(self.process_ids)}
        for i, m in enumerate(self.machines):
            for p, rt in m.capabilities:
                if p in pidx:
                    d[i, pidx[p]] = rt
        d.flags.writeable = False
        return d

    @cached_property
    def input_counts(self) -> np.ndarray:
        """Process x material-token consumption counts."""
        return self._multiset_matrix("inputs")

    @cached_property
    def output_counts(self) -> np.ndarray:
        return self._multiset_matrix("outputs")

    def _multiset_matrix(self, side: str) -> np.ndarray:
        toks = self.procedure.token_ids
        tidx = {t: j for j, t in enumerate(toks)}
        a = np.zeros((len(self.process_ids), len(toks)), dtype=np.int64)
        for i, p in enumerate(self.procedure.processes):
            for tok, n in getattr(p, side):
                if tok in tidx:
                    a[i, tidx[tok]] += n
        a.flags.writeable = False
        return a

    @cached_property
    def output_process_index(self) -> int:
        return self.process_ids.index(self.procedure.output_process)


def validate_factory(instance: FactoryInstance) -> ValidationReport:
    """Check a factory against the procedure it hosts; never raises."""
    proc_report = validate_procedure(instance.procedure)
    out = list(proc_report.violations)
    layout = instance.layout
    if not layout.traversable:
        out.append(Violation("EMPTY_LAYOUT", "no traversable cells"))
    for c in layout.traversable:
        if not layout.in_bounds(c):
            out.append(Violation("CELL_OUT_OF_GRID", f"traversable cell {c} outside {layout.width}x{layout.height}", c))
    procs = {p.id: p for p in instance.procedure.processes}
    seen_ids: set[str] = set()
    cell_owner: dict[Cell, str] = {}
    for m in instance.machines:
        if m.id in seen_ids:
            out.append(Violation("DUPLICATE_MACHINE", f"machine {m.id!r} declared twice", m.id))
        seen_ids.add(m.id)
        if m.input_cell is None and m.output_cell is None:
            out.append(Violation("NO_BUFFER_CELLS", f"{m.id} has neither an input nor an output cell", m.id))
        for cell in (m.input_cell, m.output_cell):
            if cell is None:
                continue
            if cell not in layout.traversable:
                out.append(Violation("BUFFER_CELL_NOT_TRAVERSABLE", f"{m.id} buffer cell {cell} is not traversable", m.id))
            if cell in cell_owner:
                out.append(
                    Violation("DUPLICATE_BUFFER_CELL", f"cell {cell} used by both {cell_owner[cell]} and {m.id}", cell)
                )
            else:
                cell_owner[cell] = m.id
        for pid, rt in m.capabilities:
            if pid not in procs:
                out.append(Violation("UNKNOWN_PROCESS", f"{m.id} lists unknown process {pid!r}", m.id))
                continue
            if rt < 1:
                out.append(Violation("NONPOSITIVE_RUNTIME", f"{m.id} runs {pid} in {rt} timesteps", m.id))
            p = procs[pid]
            if m.input_cell is None and not p.is_source:
                out.append(
                    Violation("SOURCE_MACHINE_NON_SOURCE_PROCESS", f"{m.id} has no input cell but can run {pid}", m.id)
                )
            if m.output_cell is None and not p.is_sink:
                out.append(
                    Violation("SINK_MACHINE_NON_SINK_PROCESS", f"{m.id} has no output cell but can run {pid}", m.id)
                )
    if instance.agent_budget < 1:
        out.append(Violation("AGENT_BUDGET", f"agent budget {instance.agent_budget} < 1"))
    return ValidationReport(tuple(out), proc_report.sources, proc_report.sinks)


class InvalidInstanceError(ValueError):
    def __init__(self, report: ValidationReport):
        super().__init__(f"invalid factory instance:\n{report}")
        self.report = report


def _readonly(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


Multiset = tuple[tuple[str, int], ...]


@dataclass(frozen=True, eq=False)
class FlatEmbedding:
    """An agent-token plan of fixed cycle length.

    Tensor axes follow the owning :class:`FactoryInstance` index orders:
    ``positions[cell, t, token]`` for ``t`` in ``0..T``, ``moves[arc, t, token]``,
    ``placements[io_cell, t, token]`` and ``removals[io_cell, t, token]`` for
    ``t`` in ``0..T-1``. ``runs[machine, process]`` is the number of runs per
    cycle, so the rate is ``runs / T`` exactly.
    """

    cycle_length: int
    assignment: np.ndarray
    runs: np.ndarray
    positions: np.ndarray
    moves: np.ndarray
    placements: np.ndarray
    removals: np.ndarray
    output_process: int
    initial_input_buffers: tuple[Multiset, ...] = ()
    initial_output_buffers: tuple[Multiset, ...] = ()

    def __post_init__(self):
        for name in ("assignment", "positions", "moves", "placements", "removals"):
            object.__setattr__(self, name, _readonly(getattr(self, name), np.int8))
        object.__setattr__(self, "runs", _readonly(self.runs, np.int64))

    @property
    def T(self) -> int:
        return self.cycle_length

    @property
    def rates(self) -> np.ndarray:
        """Rate matrix as exact fractions (object array)."""
        T = self.cycle_length
        return np.vectorize(lambda r: Fraction(int(r), T), otypes=[object])(self.runs)

    @property
    def throughput(self) -> Fraction:
        return Fraction(int(self.runs[:, self.output_process].sum()), self.cycle_length)

    def floor_population(self, t: int = 0) -> int:
        return int(self.positions[:, t, :].sum())

    def __eq__(self, other):
        if not isinstance(other, FlatEmbedding):
            return NotImplemented
        return (
            self.cycle_length == other.cycle_length
            and self.output_process == other.output_process
            and self.initial_input_buffers == other.initial_input_buffers
            and self.initial_output_buffers == other.initial_output_buffers
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("assignment", "runs", "positions", "moves", "placements", "removals")
            )
        )

    __hash__ = None


@dataclass(frozen=True)
class AgentTrajectory:
    agent: int
    states: tuple[tuple[Cell, str], ...]  # (cell, cargo token id) for t in 0..T

    def cell(self, t: int) -> Cell:
        return self.states[t][0]

    def cargo(self, t: int) -> str:
        return self.states[t][1]


@dataclass(frozen=True, eq=False)
class FullEmbedding:
    """A cyclic plan for concrete agents.

    ``permutation[i]`` is the agent whose state at ``T`` equals agent ``i``'s
    state at ``0``. ``input_buffers[m][t]`` / ``output_buffers[m][t]`` are the
    buffer multisets at each timestep of one cycle.
    """

    cycle_length: int
    machine_ids: tuple[str, ...]
    process_ids: tuple[str, ...]
    output_process: int
    assignment: np.ndarray
    runs: np.ndarray
    trajectories: tuple[AgentTrajectory, ...]
    permutation: tuple[int, ...]
    input_buffers: tuple[tuple[Multiset, ...], ...]
    output_buffers: tuple[tuple[Multiset, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", _readonly(self.assignment, np.int8))
        object.__setattr__(self, "runs", _readonly(self.runs, np.int64))
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        object.__setattr__(self, "permutation", tuple(int(i) for i in self.permutation))

    @property
    def T(self) -> int:
        return self.cycle_length

    @property
    def n_agents(self) -> int:
        return len(self.trajectories)

    @property
    def rates(self) -> np.ndarray:
        T = self.cycle_length
        return np.vectorize(lambda r: Fraction(int(r), T), otypes=[object])(self.runs)

    @property
    def throughput(self) -> Fraction:
        return Fraction(int(self.runs[:, self.output_process].sum()), self.cycle_length)

    @property
    def initial_input_buffers(self) -> tuple[Multiset, ...]:
        return tuple(b[0] for b in self.input_buffers)

    @property
    def initial_output_buffers(self) -> tuple[Multiset, ...]:
        return tuple(b[0] for b in self.output_buffers)

    def __eq__(self, other):
        if not isinstance(other, FullEmbedding):
            return NotImplemented
        return (
            self.cycle_length == other.cycle_length
            and self.machine_ids == other.machine_ids
            and self.process_ids == other.process_ids
            and self.output_process == other.output_process
            and np.array_equal(self.assignment, other.assignment)
            and np.array_equal(self.runs, other.runs)
            and self.trajectories == other.trajectories
            and self.permutation == other.permutation
            and self.input_buffers == other.input_buffers
            and self.output_buffers == other.output_buffers
        )

    __hash__ = None
