"""Turn an agent-token plan into a plan for concrete agents.

One agent is spawned for every occupied cell at ``t = 0`` and then follows
its token through the movement tensor. When the token is swapped at a
buffer cell the agent takes over the replacement token. The whole pass is
linear in the number of nonzero tensor entries.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from typing import Optional

import numpy as np

from .model import (
    AgentTrajectory,
    FactoryInstance,
    FlatEmbedding,
    FullEmbedding,
    Multiset,
)


class ConversionError(ValueError):
    pass


class PlanNotCyclicError(ConversionError):
    pass


def derive_permutation(trajectories) -> tuple[int, ...]:
    """Permutation ``perm`` with ``state(perm[i], T) == state(i, 0)``.

    Agents sharing a state are matched in ascending agent order, which is
    lexicographic cell order for agents produced by :func:`convert_to_sfep`.
    """
    trajectories = sorted(trajectories, key=lambda tr: tr.agent)
    starts = Counter(tr.states[0] for tr in trajectories)
    ends = Counter(tr.states[-1] for tr in trajectories)
    if starts != ends:
        raise PlanNotCyclicError("plan not cyclic: end states differ from start states")
    by_end: dict = defaultdict(list)
    for tr in trajectories:
        by_end[tr.states[-1]].append(tr.agent)
    for agents in by_end.values():
        agents.reverse()
    perm = {}
    for tr in trajectories:
        perm[tr.agent] = by_end[tr.states[0]].pop()
    return tuple(perm[a] for a in sorted(perm))


def _add(ms: Counter, items, sign: int = 1) -> None:
    for tok, n in items:
        ms[tok] += sign * n


def _freeze(ms: Counter) -> Multiset:
    return tuple(sorted((t, n) for t, n in ms.items() if n))


def buffer_trajectories(
    instance: FactoryInstance,
    T: int,
    runs: np.ndarray,
    trajectories,
    initial_inputs,
    initial_outputs,
):
    """Buffer contents at every ``t`` in ``0..T`` under the greedy run schedule.

    A machine with ``q`` runs per cycle starts them at ``0, D, 2D, ...``;
    outputs land when a run finishes. Snapshots are taken after finished
    runs emit and before new runs consume.
    """
    procs = instance.procedure.processes
    inputs = [Counter(dict(b)) for b in initial_inputs]
    outputs = [Counter(dict(b)) for b in initial_outputs]
    in_owner = {m.input_cell: i for i, m in enumerate(instance.machines) if m.input_cell is not None}
    out_owner = {m.output_cell: i for i, m in enumerate(instance.machines) if m.output_cell is not None}
    schedule = []  # (machine, process, quota, runtime)
    for i in range(len(instance.machines)):
        for j in np.flatnonzero(runs[i]):
            schedule.append((i, j, int(runs[i, j]), int(instance.runtimes[i, j])))
    in_snap = [[] for _ in instance.machines]
    out_snap = [[] for _ in instance.machines]
    for t in range(T + 1):
        for i, j, q, d in schedule:
            if t > 0 and t % d == 0 and t // d <= q:
                _add(outputs[i], procs[j].outputs)
        for i in range(len(instance.machines)):
            in_snap[i].append(_freeze(inputs[i]))
            out_snap[i].append(_freeze(outputs[i]))
        if t == T:
            break
        for i, j, q, d in schedule:
            if t % d == 0 and t // d < q:
                _add(inputs[i], procs[j].inputs, -1)
        for tr in trajectories:
            (cell, cargo), (_, nxt) = tr.states[t], tr.states[t + 1]
            if cargo == nxt:
                continue
            if nxt == instance.tokens[-1]:
                inputs[in_owner[cell]][cargo] += 1
            else:
                outputs[out_owner[cell]][nxt] -= 1
    return tuple(tuple(s) for s in in_snap), tuple(tuple(s) for s in out_snap)


def convert_to_sfep(
    flat: FlatEmbedding, instance: FactoryInstance, stats: Optional[dict] = None
) -> FullEmbedding:
    """Convert a validated agent-token plan into a full embedding.

    ``stats``, when given, receives an ``ops`` counter of elementary steps,
    useful for checking the linear-time bound.
    """
    T = flat.cycle_length
    population = flat.floor_population(0)
    if population > instance.agent_budget:
        raise ConversionError(
            f"agent budget violated: {population} tokens on the floor at t=0, budget {instance.agent_budget}"
        )
    if not flat.initial_input_buffers and instance.machines:
        from .milp import initialize_buffers

        flat = initialize_buffers(flat, instance)
    cells, arcs, io, toks = instance.cells, instance.arcs, instance.io_cells, instance.tokens
    cidx = instance.cell_index
    ops = 0

    successor: dict[tuple[int, int, int], int] = {}
    for a, t, k in zip(*np.nonzero(flat.moves)):
        ops += 1
        key = (cidx[arcs[a][0]], int(t), int(k))
        if key in successor:
            raise AssertionError(f"ambiguous successor for token {toks[k]} at {cells[key[0]]}, t={t}")
        successor[key] = cidx[arcs[a][1]]
    placed: dict[tuple[int, int], int] = {}
    for ci, t, k in zip(*np.nonzero(flat.placements)):
        ops += 1
        key = (cidx[io[ci]], int(t))
        if key in placed:
            raise AssertionError(f"two placements at {io[ci]}, t={t}")
        placed[key] = int(k)
    removed = set()
    for ci, t, k in zip(*np.nonzero(flat.removals)):
        ops += 1
        removed.add((cidx[io[ci]], int(t), int(k)))

    trajectories = []
    for c, k in zip(*np.nonzero(flat.positions[:, 0, :])):
        ops += 1
        c, k = int(c), int(k)
        states = [(cells[c], toks[k])]
        for t in range(T):
            ops += 1
            if (c, t, k) in successor:
                c = successor[(c, t, k)]
            elif (c, t, k) in removed and (c, t) in placed:
                k = placed[(c, t)]
            else:
                raise ConversionError(f"token {toks[k]} at {cells[c]} has no action at t={t}")
            states.append((cells[c], toks[k]))
        trajectories.append(AgentTrajectory(len(trajectories), tuple(states)))

    permutation = derive_permutation(trajectories)
    ins, outs = buffer_trajectories(
        instance, T, flat.runs, trajectories, flat.initial_input_buffers, flat.initial_output_buffers
    )
    if stats is not None:
        stats["ops"] = stats.get("ops", 0) + ops
    return FullEmbedding(
        cycle_length=T,
        machine_ids=instance.machine_ids,
        process_ids=instance.process_ids,
        output_process=flat.output_process,
        assignment=flat.assignment,
        runs=flat.runs,
        trajectories=tuple(trajectories),
        permutation=permutation,
        input_buffers=ins,
        output_buffers=outs,
    )
