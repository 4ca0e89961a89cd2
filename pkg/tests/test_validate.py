import dataclasses
from fractions import Fraction

import numpy as np
import pytest

from aces import (
    SimulationError,
    convert_to_sfep,
    simulate_cycle,
    validate_flat_embedding,
    validate_full_embedding,
)
from aces.model import AgentTrajectory
from aces.validate import CONSTRAINT_IDS, StructuralError, render_frames
from helpers import corridor_plan, manual_flat, mutation_survivors, solve_T


def _flip(flat, name, idx):
    arr = getattr(flat, name).copy()
    arr[idx] ^= 1
    return dataclasses.replace(flat, **{name: arr})


class TestFlat:
    def test_corridor_plan_feasible(self, corridor):
        assert validate_flat_embedding(corridor, corridor_plan(corridor)).ok

    def test_two_tokens_one_cell(self, corridor):
        flat = corridor_plan(corridor)
        c, k = corridor.cell_index[(1, 0)], corridor.token_index["null"]
        report = validate_flat_embedding(corridor, _flip(flat, "positions", (c, 1, k)))
        c9 = [v for v in report if v.constraint == "C9"]
        assert len(c9) == 1
        assert (c9[0].location, c9[0].timestep) == ((1, 0), 1)

    def test_material_placed_on_input_cell(self, corridor):
        flat = corridor_plan(corridor)
        ci, k = corridor.io_index[(2, 0)], corridor.token_index["tau1"]
        report = validate_flat_embedding(corridor, _flip(flat, "placements", (ci, 2, k)))
        assert "C12" in report.constraints

    def test_wrap(self, corridor):
        flat = corridor_plan(corridor)
        c, k = corridor.cell_index[(0, 0)], corridor.token_index["tau1"]
        report = validate_flat_embedding(corridor, _flip(flat, "positions", (c, 6, k)))
        assert "WRAP" in report.constraints

    def test_rate_too_high(self, corridor):
        flat = corridor_plan(corridor)
        runs = flat.runs.copy()
        runs[corridor.machine_ids.index("m_sink"), corridor.process_ids.index("p_out")] = 7
        report = validate_flat_embedding(corridor, dataclasses.replace(flat, runs=runs))
        assert {"C3", "C5"} <= set(report.constraints)

    def test_unsupported_assignment(self, corridor):
        flat = corridor_plan(corridor)
        asg = flat.assignment.copy()
        asg[corridor.machine_ids.index("m_src"), corridor.process_ids.index("p_out")] = 1
        report = validate_flat_embedding(corridor, dataclasses.replace(flat, assignment=asg))
        assert {"C1", "C2"} <= set(report.constraints)

    def test_agent_budget(self, corridor):
        # Two idle empty agents on a one-agent floor.
        flat = manual_flat(
            corridor, 1,
            at=[((0, 0), t, "null") for t in (0, 1)] + [((2, 0), t, "null") for t in (0, 1)],
            mv=[(((0, 0), (0, 0)), 0, "null"), (((2, 0), (2, 0)), 0, "null")],
        )
        report = validate_flat_embedding(corridor, flat)
        assert report.constraints["C15"] == 2
        assert len(report) == 2

    def test_head_on_swap(self, ring2):
        flat = manual_flat(
            ring2, 2,
            at=[((0, 0), 0, "null"), ((1, 0), 1, "null"), ((0, 0), 2, "null"),
                ((1, 0), 0, "null"), ((0, 0), 1, "null"), ((1, 0), 2, "null")],
            mv=[(((0, 0), (1, 0)), 0, "null"), (((1, 0), (0, 0)), 1, "null"),
                (((1, 0), (0, 0)), 0, "null"), (((0, 0), (1, 0)), 1, "null")],
        )
        report = validate_flat_embedding(ring2, flat)
        assert set(report.constraints) == {"C14"}

    def test_reports_everything(self, corridor):
        flat = corridor_plan(corridor)
        flat = _flip(flat, "positions", (0, 3, 0))
        flat = _flip(flat, "positions", (2, 0, 1))
        assert len(validate_flat_embedding(corridor, flat)) >= 2

    def test_shape_mismatch(self, corridor, ring2):
        with pytest.raises(StructuralError):
            validate_flat_embedding(ring2, corridor_plan(corridor))

    def test_constraint_ids(self):
        assert CONSTRAINT_IDS == tuple(f"C{i}" for i in range(1, 16)) + ("WRAP", "BUDGET", "CYCLIC")

    def test_no_silent_mutants_on_corridor(self, corridor):
        survivors, total = mutation_survivors(corridor, corridor_plan(corridor))
        assert total == 42 + 84 + 24 + 24
        assert survivors == []


class TestFull:
    def test_converted_corridor(self, corridor):
        assert validate_full_embedding(corridor, convert_to_sfep(corridor_plan(corridor), corridor)).ok

    def test_broken_permutation_is_not_cyclic(self, ring2):
        from test_conversion import ring_plan

        full = convert_to_sfep(ring_plan(ring2), ring2)
        bad = dataclasses.replace(full, permutation=(0, 1))
        assert "CYCLIC" in validate_full_embedding(ring2, bad).constraints

    def test_two_agents_in_one_cell(self, corridor):
        full = convert_to_sfep(corridor_plan(corridor), corridor)
        twin = AgentTrajectory(1, full.trajectories[0].states)
        bad = dataclasses.replace(full, trajectories=full.trajectories + (twin,), permutation=(0, 1))
        report = validate_full_embedding(corridor, bad)
        assert {"C9", "BUDGET"} <= set(report.constraints)

    def test_teleport(self, corridor):
        full = convert_to_sfep(corridor_plan(corridor), corridor)
        states = list(full.trajectories[0].states)
        states[1] = ((2, 0), "tau1")
        bad = dataclasses.replace(full, trajectories=(AgentTrajectory(0, tuple(states)),))
        assert not validate_full_embedding(corridor, bad).ok

    def test_wrong_state_count(self, corridor):
        full = convert_to_sfep(corridor_plan(corridor), corridor)
        bad = dataclasses.replace(full, trajectories=(AgentTrajectory(0, full.trajectories[0].states[:-1]),))
        with pytest.raises(StructuralError):
            validate_full_embedding(corridor, bad)


class TestSimulate:
    def test_corridor_three_cycles(self, corridor):
        full = convert_to_sfep(corridor_plan(corridor), corridor)
        trace = simulate_cycle(corridor, full, 3)
        assert trace.completions == 3
        assert trace.throughput == Fraction(3, 18) == Fraction(1, 6)
        assert len(trace.snapshots) == 19

    def test_zero_cycles(self, corridor):
        trace = simulate_cycle(corridor, convert_to_sfep(corridor_plan(corridor), corridor), 0)
        assert trace.snapshots == [] and trace.completions == 0
        assert trace.throughput == 0

    def test_negative_cycles(self, corridor):
        with pytest.raises(ValueError):
            simulate_cycle(corridor, convert_to_sfep(corridor_plan(corridor), corridor), -1)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_toy_car_throughput_and_fixpoint(self, toy_car, toy_car_flat, k):
        flat, _ = toy_car_flat
        full = convert_to_sfep(flat, toy_car)
        trace = simulate_cycle(toy_car, full, k)
        assert trace.throughput == flat.throughput
        assert trace.completions == k * int(flat.runs[:, flat.output_process].sum())
        T = full.cycle_length
        for c in range(k + 1):
            assert trace.snapshots[c * T].agents == trace.snapshots[0].agents
            assert trace.snapshots[c * T].input_buffers == trace.snapshots[0].input_buffers
            assert trace.snapshots[c * T].output_buffers == trace.snapshots[0].output_buffers

    def test_buffers_never_negative(self, toy_car, toy_car_flat):
        trace = simulate_cycle(toy_car, convert_to_sfep(toy_car_flat[0], toy_car), 3)
        for snap in trace.snapshots:
            for buf in snap.input_buffers + snap.output_buffers:
                assert all(n > 0 for _, n in buf)

    def test_deposit_at_wrong_cell(self, corridor):
        full = convert_to_sfep(corridor_plan(corridor), corridor)
        states = [((0, 0), "tau1"), ((1, 0), "tau1"), ((1, 0), "null"), ((1, 0), "null"),
                  ((1, 0), "null"), ((0, 0), "null"), ((0, 0), "tau1")]
        bad = dataclasses.replace(full, trajectories=(AgentTrajectory(0, tuple(states)),))
        with pytest.raises(SimulationError) as err:
            simulate_cycle(corridor, bad, 1)
        assert err.value.timestep == 1

    def test_collision_halts_strict_run(self, corridor):
        full = convert_to_sfep(corridor_plan(corridor), corridor)
        twin = AgentTrajectory(1, full.trajectories[0].states)
        bad = dataclasses.replace(full, trajectories=full.trajectories + (twin,), permutation=(0, 1))
        with pytest.raises(SimulationError):
            simulate_cycle(corridor, bad, 1)
        assert simulate_cycle(corridor, bad, 1, strict=False).collisions > 0


def test_render_frames(corridor):
    full = convert_to_sfep(corridor_plan(corridor), corridor)
    frames = render_frames(corridor, full, 1)
    assert len(frames) == 7
    assert frames[0] == "t=0\nA.2"
    assert frames[3] == "t=3\n1.a"


def test_render_toy_car(toy_car, toy_car_flat):
    frames = render_frames(toy_car, convert_to_sfep(toy_car_flat[0], toy_car), 1)
    lines = frames[0].split("\n")
    assert lines[0] == "t=0" and len(lines) == 1 + toy_car.layout.height
    assert lines[2][2] == "#"
