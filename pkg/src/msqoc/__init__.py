"""Time-parallel multiple-shooting optimal control of multi-qubit gates."""

from .config import PRESETS, RunConfig, load_config, make_config
from .controls import ControlParameterization, energy_penalty
from .model import SystemSpec, assemble_hamiltonian, qft_target
from .objective import (
    ObjectiveReport, Regularization, generalized_infidelity, penalty_objective, rollout_estimate,
    trace_infidelity,
)
from .optimizer import OptimizerConfig, minimize, random_init_alpha
from .propagation import Propagator, WindowGrid
from .runtime import ParallelEvaluator, evaluate_gradient_parallel, evaluate_objective_parallel
from .shooting import (
    ShootingProblem, ShootingVariables, assemble_gradient, init_by_rollout, pack, unpack,
)

__version__ = "0.1.0"
