"""Anytime cyclic embedding of manufacturing procedures into grid smart factories."""
from .aces import AcesConfig, AcesResult, AcesTrace, TraceRecord, aces_solve, solve_flat
from .conversion import ConversionError, PlanNotCyclicError, convert_to_sfep, derive_permutation
from .milp import MilpModel, MilpSolution, build_flat_milp, expected_counts, extract_flat_embedding, initialize_buffers
from .model import (
    FactoryInstance,
    FlatEmbedding,
    FullEmbedding,
    GridLayout,
    InvalidInstanceError,
    Machine,
    ManufacturingProcedure,
    Process,
    Token,
    build_movement_graph,
    validate_factory,
    validate_procedure,
)
from .scenario import (
    ParseError,
    load_bundled,
    load_scenario,
    parse_embedding,
    parse_flat,
    parse_scenario,
    serialize_embedding,
    serialize_flat,
    serialize_scenario,
)
from .solvers import BackendUnavailableError, SolveBudget, get_backend, solve
from .validate import PlanViolation, SimulationError, ViolationReport, simulate_cycle, validate_flat_embedding, validate_full_embedding

__version__ = "0.1.0"
