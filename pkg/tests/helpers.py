"""Shared test utilities. Solves go through the suite-wide validating wrapper."""
from __future__ import annotations

import numpy as np

import aces.aces as aces_loop
from aces import FlatEmbedding, SolveBudget


def solve_T(instance, T, backend="highs", seconds=120.0):
    """Solve one cycle length; the conftest wrapper validates any accepted plan."""
    return aces_loop.solve_flat(instance, T, SolveBudget(seconds), backend)


def manual_flat(instance, T, runs=None, assignment=None, at=(), mv=(), pl=(), rm=()):
    """Build a plan from sparse entries.

    ``at`` holds ``(cell, t, token)``, ``mv`` holds ``((u, v), t, token)`` and
    ``pl``/``rm`` hold ``(cell, t, token)``, all by id.
    """
    C, K, A, IO = len(instance.cells), len(instance.tokens), len(instance.arcs), len(instance.io_cells)
    M, P = len(instance.machines), len(instance.procedure.processes)
    tok = instance.token_index
    At = np.zeros((C, T + 1, K), np.int8)
    Mv = np.zeros((A, T, K), np.int8)
    Pl = np.zeros((IO, T, K), np.int8)
    Rm = np.zeros((IO, T, K), np.int8)
    for c, t, k in at:
        At[instance.cell_index[c], t, tok[k]] = 1
    for arc, t, k in mv:
        Mv[instance.arc_index[arc], t, tok[k]] = 1
    for c, t, k in pl:
        Pl[instance.io_index[c], t, tok[k]] = 1
    for c, t, k in rm:
        Rm[instance.io_index[c], t, tok[k]] = 1
    runs_arr = np.zeros((M, P), np.int64)
    asg = np.zeros((M, P), np.int8)
    for (m, p), n in (runs or {}).items():
        i, j = instance.machine_ids.index(m), instance.process_ids.index(p)
        runs_arr[i, j] = n
        asg[i, j] = 1
    for m, p in assignment or ():
        asg[instance.machine_ids.index(m), instance.process_ids.index(p)] = 1
    return FlatEmbedding(T, asg, runs_arr, At, Mv, Pl, Rm, instance.output_process_index)


def trajectory_flat(instance, T, states, runs):
    """Single-token plan following ``states`` = [(cell, token)] for t = 0..T.

    A step that keeps the cell and changes the token is a removal plus a
    placement at that cell; any other step is a move.
    """
    at, mv, pl, rm = [], [], [], []
    for t, (cell, k) in enumerate(states):
        at.append((cell, t, k))
    for t in range(T):
        (c0, k0), (c1, k1) = states[t], states[t + 1]
        if k0 != k1:
            assert c0 == c1
            rm.append((c0, t, k0))
            pl.append((c0, t, k1))
        else:
            mv.append(((c0, c1), t, k0))
    return manual_flat(instance, T, runs=runs, at=at, mv=mv, pl=pl, rm=rm)


#: The minimal corridor loop, starting loaded at the west end.
CORRIDOR_LOOP = [
    ((0, 0), "tau1"),
    ((1, 0), "tau1"),
    ((2, 0), "tau1"),
    ((2, 0), "null"),
    ((1, 0), "null"),
    ((0, 0), "null"),
    ((0, 0), "tau1"),
]


def corridor_plan(instance):
    return trajectory_flat(instance, 6, CORRIDOR_LOOP, {("m_src", "p_src"): 1, ("m_sink", "p_out"): 1})


TENSORS = ("positions", "moves", "placements", "removals")


def single_bit_mutants(flat):
    """Yield ``(tensor, index, mutant)`` for every single-bit flip of the plan tensors."""
    import dataclasses

    for name in TENSORS:
        base = getattr(flat, name)
        for idx in np.ndindex(*base.shape):
            arr = base.copy()
            arr[idx] ^= 1
            yield name, idx, dataclasses.replace(flat, **{name: arr})


def mutation_survivors(instance, flat):
    """Flips that the validator accepts without a change of objective."""
    survivors, total = [], 0
    for name, idx, mutant in single_bit_mutants(flat):
        total += 1
        from aces import validate_flat_embedding

        if validate_flat_embedding(instance, mutant).ok and mutant.throughput == flat.throughput:
            survivors.append((name, idx))
    return survivors, total
