"""Multi-action tangled program graphs with linear GP programs."""

from .environments import EnvironmentSuite, PointMassConfig, Task, make_suite
from .evolution import EvolutionConfig, EvolutionState, init_state, run, run_generation, validate
from .graph import Root, RootKind, VertexStore, gc, run_agent
from .lgp import Instruction, Opcode, Program, execute_program
from .selection import SelectionConfig
from .variation import MutationConfig

__all__ = [
    "EnvironmentSuite", "EvolutionConfig", "EvolutionState", "Instruction", "MutationConfig",
    "Opcode", "PointMassConfig", "Program", "Root", "RootKind", "SelectionConfig", "Task",
    "VertexStore", "execute_program", "gc", "init_state", "make_suite", "run", "run_agent",
    "run_generation", "validate",
]
