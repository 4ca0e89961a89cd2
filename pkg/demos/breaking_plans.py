"""
What the validator catches
==========================

A plan is only as good as the independent check behind it. Here we take a
feasible corridor plan and flip single bits of its tensors, then look at
which constraint families object.
"""

import dataclasses
from collections import Counter

import numpy as np

from aces import load_bundled, validate_flat_embedding
from aces.aces import solve_flat
from aces.solvers import SolveBudget

corridor = load_bundled("corridor")
flat, _ = solve_flat(corridor, 6, SolveBudget(30))
print("clean plan:", validate_flat_embedding(corridor, flat))

# Put an empty agent on top of a loaded one.
pos = flat.positions.copy()
c, t = corridor.cell_index[(1, 0)], 1
pos[c, t, :] = 1
print(validate_flat_embedding(corridor, dataclasses.replace(flat, positions=pos)))

# Every single-bit flip, tallied by the first family that fires.
tally, survivors = Counter(), 0
for name in ("positions", "moves", "placements", "removals"):
    base = getattr(flat, name)
    for idx in np.ndindex(*base.shape):
        arr = base.copy()
        arr[idx] ^= 1
        report = validate_flat_embedding(corridor, dataclasses.replace(flat, **{name: arr}))
        if report.ok:
            survivors += 1
        else:
            # Natural order, so C7 comes before C10.
            tally[min(report.constraints, key=lambda c: (len(c), c))] += 1
print(dict(sorted(tally.items(), key=lambda kv: (len(kv[0]), kv[0]))), "survivors:", survivors)
