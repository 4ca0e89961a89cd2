"""
Describing a factory in code
============================

Scenarios usually live in ``.sfep`` files, but the same instance can be
assembled from the domain types directly. This one has a two-stage line on
a 3x2 floor: raw parts are machined into finished parts before shipping.
"""

from aces import (
    AcesConfig,
    FactoryInstance,
    GridLayout,
    Machine,
    ManufacturingProcedure,
    Process,
    Token,
    aces_solve,
    serialize_embedding,
    serialize_scenario,
    validate_factory,
)

procedure = ManufacturingProcedure(
    tokens=(Token("raw"), Token("part")),
    processes=(
        Process("unload", outputs={"raw": 1}),
        Process("mill", inputs={"raw": 1}, outputs={"part": 1}),
        Process("ship", inputs={"part": 1}),
    ),
    output_process="ship",
)
machines = (
    Machine("bin", {"unload": 1}, output_cell=(0, 0)),
    Machine("mill", {"mill": 2}, input_cell=(1, 0), output_cell=(2, 0)),
    Machine("dock", {"ship": 1}, input_cell=(2, 1)),
)
floor = GridLayout.from_rows(["...", "..."])
factory = FactoryInstance(procedure, machines, floor, agent_budget=2, name="two_stage_line")

print(validate_factory(factory))
print(serialize_scenario(factory))

result = aces_solve(factory, AcesConfig(total_budget=30, flat_budget=10, max_cycle_length=8))
print(serialize_embedding(result.embedding))
