"""
A three-cell corridor, end to end
=================================

One agent, one source bin at the west end, one output chute at the east end.
We build the fixed-cycle-length model for a few cycle lengths, look at the
plan tensors, turn the best plan into an agent trajectory and watch it run.
"""

from aces import build_flat_milp, convert_to_sfep, load_bundled, simulate_cycle
from aces.aces import solve_flat
from aces.solvers import SolveBudget
from aces.validate import render_frames

corridor = load_bundled("corridor")
print(corridor.cells, corridor.tokens)

# The model is a plain sparse MILP. Its size is fixed by the grid and T.
model = build_flat_milp(corridor, 6)
print(model.n_vars, "variables,", model.n_rows, "rows")
for block in ("At", "Mv", "Pl", "Rm"):
    print(f"  {block}: {model.count(block)}")

# Five steps are not enough for a round trip: two moves out, a drop,
# two moves back and a pick-up take six.
for T in (5, 6, 7):
    flat, sol = solve_flat(corridor, T, SolveBudget(30))
    print(f"T={T}: {sol.status}, throughput {flat.throughput}")

flat, _ = solve_flat(corridor, 6, SolveBudget(30))

# positions[cell, t, token] is a 0/1 tensor; the last token is "null".
# One row per cell, one column per t: L loaded, e empty agent.
for c, cell in enumerate(corridor.cells):
    row = "".join("L" if flat.positions[c, t, 0] else "e" if flat.positions[c, t, 1] else "." for t in range(7))
    print(cell, row)

# Conversion spawns one agent per occupied cell at t=0 and follows its token.
full = convert_to_sfep(flat, corridor)
print("agents:", full.n_agents, "permutation:", full.permutation)
for t, (cell, cargo) in enumerate(full.trajectories[0].states):
    print(f"  t={t} {cell} carrying {cargo}")

# Three cycles in the simulator deliver three cars' worth of output.
trace = simulate_cycle(corridor, full, 3)
print("completions", trace.completions, "throughput", trace.throughput)

# Machines are digits, agents letters (upper case when loaded).
print("\n\n".join(render_frames(corridor, full, 1)))
