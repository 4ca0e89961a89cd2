"""Solver-free checks: re-evaluate every plan constraint directly, and step-simulate full plans.

Nothing here touches the MILP; the checks are written against the plan
semantics so they can catch a wrong model as well as a wrong solver.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .model import Cell, FactoryInstance, FlatEmbedding, FullEmbedding, NULL_TOKEN_ID

CONSTRAINT_IDS = tuple(f"C{i}" for i in range(1, 16)) + ("WRAP", "BUDGET", "CYCLIC")


class StructuralError(ValueError):
    """Tensors do not have the shape or domain implied by the instance and cycle length."""


class SimulationError(RuntimeError):
    def __init__(self, timestep: int, message: str):
        super().__init__(f"t={timestep}: {message}")
        self.timestep = timestep


@dataclass(frozen=True)
class PlanViolation:
    constraint: str
    location: object
    timestep: Optional[int]
    message: str

    def __str__(self) -> str:
        at = "" if self.timestep is None else f" t={self.timestep}"
        return f"{self.constraint} {self.location}{at}: {self.message}"


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[PlanViolation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    @property
    def constraints(self) -> Counter:
        return Counter(v.constraint for v in self.violations)

    def __str__(self) -> str:
        return "feasible" if self.ok else "\n".join(map(str, self.violations))


def _check_shapes(instance: FactoryInstance, flat: FlatEmbedding) -> None:
    T = flat.cycle_length
    if T < 1:
        raise StructuralError(f"cycle length {T} < 1")
    C, K, A, IO = len(instance.cells), len(instance.tokens), len(instance.arcs), len(instance.io_cells)
    M, P = len(instance.machines), len(instance.process_ids)
    expected = {
        "assignment": (M, P),
        "runs": (M, P),
        "positions": (C, T + 1, K),
        "moves": (A, T, K),
        "placements": (IO, T, K),
        "removals": (IO, T, K),
    }
    for name, shape in expected.items():
        got = getattr(flat, name).shape
        if got != shape:
            raise StructuralError(f"{name} has shape {got}, expected {shape}")
    for name in ("assignment", "positions", "moves", "placements", "removals"):
        a = getattr(flat, name)
        if ((a != 0) & (a != 1)).any():
            raise StructuralError(f"{name} has entries outside {{0, 1}}")
    if (flat.runs < 0).any():
        raise StructuralError("negative run counts")
    if flat.output_process != instance.output_process_index:
        raise StructuralError("output process index does not match the instance")


def validate_flat_embedding(instance: FactoryInstance, flat: FlatEmbedding) -> ViolationReport:
    """Evaluate every constraint instance of an agent-token plan; report them all."""
    _check_shapes(instance, flat)
    T = flat.cycle_length
    cells, toks, arcs, io = instance.cells, instance.tokens, instance.arcs, instance.io_cells
    mids, pids = instance.machine_ids, instance.process_ids
    nul = instance.null_index
    X, runs = flat.assignment.astype(np.int64), flat.runs
    At = flat.positions.astype(np.int64)
    Mv = flat.moves.astype(np.int64)
    Pl = flat.placements.astype(np.int64)
    Rm = flat.removals.astype(np.int64)
    D = instance.runtimes
    out: list[PlanViolation] = []

    def add(cid, loc, t, msg):
        out.append(PlanViolation(cid, loc, None if t is None else int(t), msg))

    for i in np.flatnonzero(X.sum(axis=1) > 1):
        add("C1", mids[i], None, f"{int(X[i].sum())} processes assigned")
    for i, j in zip(*np.nonzero((D == 0) & (X == 1))):
        add("C2", mids[i], None, f"assigned unsupported process {pids[j]}")
    for i, j in zip(*np.nonzero((D > 0) & (runs * D > T))):
        add("C3", mids[i], None, f"rate {Fraction(int(runs[i, j]), T)} of {pids[j]} exceeds 1/{int(D[i, j])}")
    for i, j in zip(*np.nonzero(runs > T * X)):
        add("C4", mids[i], None, f"runs {pids[j]} at rate {Fraction(int(runs[i, j]), T)} without assignment")

    ins, outs = instance.input_counts, instance.output_counts
    nmat = len(toks) - 1
    for i, m in enumerate(instance.machines):
        for cid, cell, tensor, counts in (("C5", m.input_cell, Rm, ins), ("C6", m.output_cell, Pl, outs)):
            if cell is None:
                continue
            moved = tensor[instance.io_index[cell], :, :nmat].sum(axis=0)
            needed = runs[i] @ counts
            for k in np.flatnonzero(moved != needed):
                verb = "entered" if cid == "C5" else "left"
                add(cid, m.id, None, f"{int(moved[k])} x {toks[k]} {verb} the buffer, process needs {int(needed[k])}")

    # Flow conservation around each cell.
    src = np.array([instance.cell_index[u] for u, _ in arcs], dtype=np.int64)
    dst = np.array([instance.cell_index[v] for _, v in arcs], dtype=np.int64)
    leaving = np.zeros((len(cells), T, len(toks)), dtype=np.int64)
    arriving = np.zeros_like(leaving)
    np.add.at(leaving, src, Mv)
    np.add.at(arriving, dst, Mv)
    io_rows = np.array([instance.cell_index[c] for c in io], dtype=np.int64)
    if len(io):
        np.add.at(leaving, io_rows, Rm)
        np.add.at(arriving, io_rows, Pl)
    for c, t, k in zip(*np.nonzero(At[:, :T, :] != leaving)):
        add("C7", cells[c], t, f"{toks[k]}: {int(At[c, t, k])} present, {int(leaving[c, t, k])} accounted for")
    for c, t, k in zip(*np.nonzero(At[:, 1:, :] != arriving)):
        add("C8", cells[c], t, f"{toks[k]}: {int(At[c, t + 1, k])} present at t+1, {int(arriving[c, t, k])} arrived")
    occupancy = At.sum(axis=2)
    for c, t in zip(*np.nonzero(occupancy > 1)):
        add("C9", cells[c], t, f"{int(occupancy[c, t])} tokens in one cell")

    in_set, out_set = set(instance.input_cells), set(instance.output_cells)
    for ci, cell in enumerate(io):
        if cell in in_set:
            for t in np.flatnonzero(Rm[ci, :, :nmat].sum(axis=1) != Pl[ci, :, nul]):
                add("C10", cell, t, "material removed from an input cell without a null replacement")
            for t, k in zip(*np.nonzero(Pl[ci, :, :nmat])):
                add("C12", cell, t, f"{toks[k]} placed on an input cell")
            for t in np.flatnonzero(Rm[ci, :, nul]):
                add("C13", cell, t, "null token removed from an input cell")
        if cell in out_set:
            for t in np.flatnonzero(Pl[ci, :, :nmat].sum(axis=1) != Rm[ci, :, nul]):
                add("C11", cell, t, "material placed on an output cell without replacing a null token")
            for t, k in zip(*np.nonzero(Rm[ci, :, :nmat])):
                add("C12", cell, t, f"{toks[k]} removed from an output cell")
            for t in np.flatnonzero(Pl[ci, :, nul]):
                add("C13", cell, t, "null token placed on an output cell")

    arc_idx = instance.arc_index
    for u, v in instance.movement_graph.edges:
        if u == v:
            continue
        load = Mv[arc_idx[(u, v)]].sum(axis=1) + Mv[arc_idx[(v, u)]].sum(axis=1)
        for t in np.flatnonzero(load > 1):
            add("C14", (u, v), t, f"{int(load[t])} tokens traverse the edge")

    floor = At.sum(axis=(0, 2))
    for t in np.flatnonzero(floor > instance.agent_budget):
        add("C15", "floor", t, f"{int(floor[t])} tokens on the floor, budget {instance.agent_budget}")
    for c, k in zip(*np.nonzero(At[:, T, :] != At[:, 0, :])):
        add("WRAP", cells[c], T, f"{toks[k]} at t=T differs from t=0")
    return ViolationReport(tuple(out))


def validate_full_embedding(instance: FactoryInstance, full: FullEmbedding) -> ViolationReport:
    """Check an agent plan: legal steps, collisions, buffer use, budget and both cyclic conditions."""
    T = full.cycle_length
    out: list[PlanViolation] = []

    def add(cid, loc, t, msg):
        out.append(PlanViolation(cid, loc, t, msg))

    if full.machine_ids != instance.machine_ids or full.process_ids != instance.process_ids:
        raise StructuralError("embedding machines/processes do not match the instance")
    for tr in full.trajectories:
        if len(tr.states) != T + 1:
            raise StructuralError(f"agent {tr.agent} has {len(tr.states)} states, expected {T + 1}")
    if sorted(full.permutation) != list(range(full.n_agents)):
        raise StructuralError("permutation is not a bijection over the agents")

    X, runs, D = full.assignment.astype(np.int64), full.runs, instance.runtimes
    mids, pids = instance.machine_ids, instance.process_ids
    for i in np.flatnonzero(X.sum(axis=1) > 1):
        add("C1", mids[i], None, "more than one process assigned")
    for i, j in zip(*np.nonzero((D == 0) & (X == 1))):
        add("C2", mids[i], None, f"assigned unsupported process {pids[j]}")
    for i, j in zip(*np.nonzero((D > 0) & (runs * D > T))):
        add("C3", mids[i], None, f"rate of {pids[j]} exceeds 1/{int(D[i, j])}")
    for i, j in zip(*np.nonzero(runs > T * X)):
        add("C4", mids[i], None, f"runs {pids[j]} without assignment")

    if full.n_agents > instance.agent_budget:
        add("BUDGET", "agents", None, f"{full.n_agents} agents, budget {instance.agent_budget}")
    traversable = instance.layout.traversable
    graph = instance.movement_graph
    in_owner = {m.input_cell: m for m in instance.machines if m.input_cell is not None}
    out_owner = {m.output_cell: m for m in instance.machines if m.output_cell is not None}
    deposits = {m.id: Counter() for m in instance.machines}
    pickups = {m.id: Counter() for m in instance.machines}
    for tr in full.trajectories:
        for t, (cell, cargo) in enumerate(tr.states):
            if cell not in traversable:
                add("C7", cell, t, f"agent {tr.agent} on a non-traversable cell")
            if cargo != NULL_TOKEN_ID and cargo not in instance.procedure.token_ids:
                add("C7", cell, t, f"agent {tr.agent} carries unknown token {cargo!r}")
        for t in range(T):
            (c0, k0), (c1, k1) = tr.states[t], tr.states[t + 1]
            if c0 != c1 and not graph.adjacent(c0, c1):
                add("C7", (c0, c1), t, f"agent {tr.agent} jumps between non-adjacent cells")
            if k0 == k1:
                continue
            if c0 != c1:
                add("C7", c0, t, f"agent {tr.agent} changes cargo while moving")
            elif k1 == NULL_TOKEN_ID and c0 in in_owner:
                deposits[in_owner[c0].id][k0] += 1
            elif k0 == NULL_TOKEN_ID and c0 in out_owner:
                pickups[out_owner[c0].id][k1] += 1
            else:
                add("C12", c0, t, f"agent {tr.agent} swaps {k0} for {k1} at a cell that does not allow it")
    toks = instance.procedure.token_ids
    for i, m in enumerate(instance.machines):
        for cid, cell, moved, counts in (
            ("C5", m.input_cell, deposits[m.id], instance.input_counts),
            ("C6", m.output_cell, pickups[m.id], instance.output_counts),
        ):
            if cell is None:
                continue
            needed = runs[i] @ counts
            for k, tok in enumerate(toks):
                if moved[tok] != needed[k]:
                    add(cid, m.id, None, f"{moved[tok]} x {tok} through the buffer cell, process needs {int(needed[k])}")

    for t in range(T + 1):
        seen: dict[Cell, int] = {}
        for tr in full.trajectories:
            c = tr.states[t][0]
            if c in seen:
                add("C9", c, t, f"agents {seen[c]} and {tr.agent} collide")
            seen[c] = tr.agent
    for t in range(T):
        used: dict = {}
        for tr in full.trajectories:
            c0, c1 = tr.states[t][0], tr.states[t + 1][0]
            if c0 == c1:
                continue
            e = (min(c0, c1), max(c0, c1))
            if e in used:
                add("C14", e, t, f"agents {used[e]} and {tr.agent} traverse the same edge")
            used[e] = tr.agent
    for i, tr in enumerate(full.trajectories):
        j = full.permutation[i]
        if full.trajectories[j].states[T] != tr.states[0]:
            add("CYCLIC", i, T, f"agent {j} at t=T does not match agent {i} at t=0")
    for i, m in enumerate(instance.machines):
        if full.input_buffers[i][0] != full.input_buffers[i][T]:
            add("CYCLIC", m.id, T, "input buffer at t=T differs from t=0")
        if full.output_buffers[i][0] != full.output_buffers[i][T]:
            add("CYCLIC", m.id, T, "output buffer at t=T differs from t=0")
    return ViolationReport(tuple(out))


@dataclass(frozen=True)
class Snapshot:
    agents: tuple  # (cell, cargo) indexed by role
    input_buffers: tuple
    output_buffers: tuple
    machines: tuple  # (busy_until or None, runs started this cycle) per machine


@dataclass
class SimulationTrace:
    cycle_length: int
    cycles: int
    snapshots: list = field(default_factory=list)
    completions: int = 0
    collisions: int = 0

    @property
    def throughput(self) -> Fraction:
        if self.cycles == 0:
            return Fraction(0)
        return Fraction(self.completions, self.cycles * self.cycle_length)


def _ms(counter: Counter) -> tuple:
    return tuple(sorted((t, n) for t, n in counter.items() if n))


def simulate_cycle(instance: FactoryInstance, full: FullEmbedding, k: int, strict: bool = True) -> SimulationTrace:
    """Run ``k`` concatenated cycles of a full plan on a simulated factory.

    Physical agents play roles; at every cycle boundary the agent that was
    playing role ``perm[a]`` takes over role ``a``. Each assigned machine
    starts a run whenever it is idle, its inputs are buffered and its per-cycle
    quota is not exhausted. With ``strict`` any collision halts the run;
    otherwise collisions are counted.
    """
    if k < 0:
        raise ValueError("cycle count must be non-negative")
    T = full.cycle_length
    trace = SimulationTrace(T, k)
    if k == 0:
        return trace
    procs = instance.procedure.processes
    pout = instance.output_process_index
    machines = instance.machines
    in_owner = {m.input_cell: i for i, m in enumerate(machines) if m.input_cell is not None}
    out_owner = {m.output_cell: i for i, m in enumerate(machines) if m.output_cell is not None}
    graph = instance.movement_graph
    jobs = []  # per machine: (process index, quota, runtime) or None
    for i in range(len(machines)):
        nz = np.flatnonzero(full.runs[i])
        if len(nz) > 1:
            raise SimulationError(0, f"{machines[i].id} runs more than one process")
        jobs.append((int(nz[0]), int(full.runs[i, nz[0]]), int(instance.runtimes[i, nz[0]])) if len(nz) else None)

    inputs = [Counter(dict(b)) for b in full.initial_input_buffers]
    outputs = [Counter(dict(b)) for b in full.initial_output_buffers]
    busy: list[Optional[tuple[int, int]]] = [None] * len(machines)  # (finish time, process)
    started = [0] * len(machines)
    n = full.n_agents
    role = list(range(n))  # role[robot]
    perm = full.permutation
    inv = [0] * n
    for a, b in enumerate(perm):
        inv[b] = a
    pos = [full.trajectories[r].states[0] for r in role]

    def collide(t, msg):
        if strict:
            raise SimulationError(t, msg)
        trace.collisions += 1

    def check_vertices(t):
        cells = Counter(p[0] for p in pos)
        for c, cnt in cells.items():
            if cnt > 1:
                collide(t, f"{cnt} agents at {c}")

    check_vertices(0)
    for tau in range(k * T + 1):
        t = tau % T
        for i, job in enumerate(busy):
            if job is not None and job[0] == tau:
                for tok, cnt in procs[job[1]].outputs:
                    outputs[i][tok] += cnt
                if job[1] == pout:
                    trace.completions += 1
                busy[i] = None
        if tau > 0 and t == 0:
            role = [inv[r] for r in role]
            for robot, r in enumerate(role):
                if full.trajectories[r].states[0] != pos[robot]:
                    raise SimulationError(tau, f"agent {robot} is not where role {r} starts")
            started = [0] * len(machines)
        by_role = [None] * n
        for robot, r in enumerate(role):
            by_role[r] = pos[robot]
        trace.snapshots.append(
            Snapshot(
                tuple(by_role),
                tuple(_ms(b) for b in inputs),
                tuple(_ms(b) for b in outputs),
                tuple((None if b is None else b[0] - (tau - t), s) for b, s in zip(busy, started)),
            )
        )
        if tau == k * T:
            break
        for i, job in enumerate(jobs):
            if job is None or busy[i] is not None or started[i] >= job[1]:
                continue
            need = procs[job[0]].inputs
            if all(inputs[i][tok] >= cnt for tok, cnt in need):
                for tok, cnt in need:
                    inputs[i][tok] -= cnt
                busy[i] = (tau + job[2], job[0])
                started[i] += 1
        nxt = []
        for robot, r in enumerate(role):
            (c0, k0), (c1, k1) = full.trajectories[r].states[t], full.trajectories[r].states[t + 1]
            if (c0, k0) != pos[robot]:
                raise SimulationError(tau, f"agent {robot} diverged from its plan")
            if c0 != c1 and not graph.adjacent(c0, c1):
                raise SimulationError(tau, f"agent {robot} jumps from {c0} to {c1}")
            if k0 != k1:
                if c0 != c1:
                    raise SimulationError(tau, f"agent {robot} changes cargo while moving")
                if k1 == NULL_TOKEN_ID:
                    if c0 not in in_owner:
                        raise SimulationError(tau, f"agent {robot} deposits {k0} at non-input cell {c0}")
                    inputs[in_owner[c0]][k0] += 1
                elif k0 == NULL_TOKEN_ID:
                    if c0 not in out_owner:
                        raise SimulationError(tau, f"agent {robot} picks up at non-output cell {c0}")
                    buf = outputs[out_owner[c0]]
                    if buf[k1] < 1:
                        raise SimulationError(tau, f"output buffer of {machines[out_owner[c0]].id} has no {k1}")
                    buf[k1] -= 1
                else:
                    raise SimulationError(tau, f"agent {robot} swaps {k0} for {k1} directly")
            nxt.append((c1, k1))
        edges = Counter()
        for (c0, _), (c1, _) in zip(pos, nxt):
            if c0 != c1:
                edges[(min(c0, c1), max(c0, c1))] += 1
        for e, cnt in edges.items():
            if cnt > 1:
                collide(tau, f"{cnt} agents traverse edge {e}")
        pos = nxt
        check_vertices(tau + 1)
    return trace


def render_frames(instance: FactoryInstance, full: FullEmbedding, cycles: int = 1) -> list[str]:
    """ASCII frames, one per timestep: ``#`` blocked, ``.`` free, digits mark
    machine buffer cells, letters mark agents (upper case when loaded)."""
    trace = simulate_cycle(instance, full, cycles, strict=False)
    base = [
        ["." if (x, y) in instance.layout.traversable else "#" for x in range(instance.layout.width)]
        for y in range(instance.layout.height)
    ]
    for i, m in enumerate(instance.machines):
        for c in (m.input_cell, m.output_cell):
            if c is not None:
                base[c[1]][c[0]] = str((i + 1) % 10)
    frames = []
    for tau, snap in enumerate(trace.snapshots):
        grid = [row[:] for row in base]
        for r, (cell, cargo) in enumerate(snap.agents):
            ch = chr(ord("a") + r % 26)
            grid[cell[1]][cell[0]] = ch if cargo == NULL_TOKEN_ID else ch.upper()
        frames.append(f"t={tau}\n" + "\n".join("".join(row) for row in grid))
    return frames
