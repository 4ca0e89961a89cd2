"""
Toy-car factory with the anytime loop
=====================================

Seven machines and eight agents. Planks become frames or wheel sets on
three interchangeable machines, an assembler joins frame, wheels and axle,
and the finished car leaves through the chute. The anytime loop tries cycle
lengths 5, 6, 7, ... and keeps the best plan it has seen.
"""

import numpy as np

from aces import AcesConfig, aces_solve, load_bundled, simulate_cycle

factory = load_bundled("toy_car")
for m in factory.machines:
    print(m.id, dict(m.capabilities), "in", m.input_cell, "out", m.output_cell)

# A short budget is plenty at this size; the defaults are 30 min / 2.5 min.
result = aces_solve(factory, AcesConfig(total_budget=60, flat_budget=30, max_cycle_length=8))

print("\nT  status               throughput  seconds")
for r in result.trace:
    print(f"{r.T:<2} {r.status:<20} {str(r.throughput):<11} {r.solve_seconds:.2f}")
print("best-so-far:", [str(b) for b in result.trace.best_so_far])

full = result.embedding
print(f"\nchosen T={full.cycle_length}, throughput {full.throughput}, {full.n_agents} agents")

# Which machine runs what, and how often per cycle.
runs = full.runs
for i, j in zip(*np.nonzero(runs)):
    print(f"  {factory.machine_ids[i]} runs {factory.process_ids[j]} x{runs[i, j]} per cycle")

# Stock each buffer needs at t=0 so that no run ever waits on a late delivery.
for mid, ins, outs in zip(factory.machine_ids, full.initial_input_buffers, full.initial_output_buffers):
    if ins or outs:
        print(f"  {mid}: in {dict(ins)} out {dict(outs)}")

for k in (1, 2, 3):
    print(f"k={k}: simulated throughput {simulate_cycle(factory, full, k).throughput}")
