"""Decentralized primal-dual consensus optimization with quasi-Newton local
solvers: round engine, edge-variable reference form, gradient-tracking
baseline, convergence-analysis constants, and an experiment harness."""

from ._accel import BACKEND
from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .engine import AgentState, CadenConfig, TauSchedule
from .graphs import Topology, build_random_graph, complete_graph, laplacian_spectrum
from .harness import RunResult, participation_sweep, run_experiment
from .losses import LogisticLoss, MlpLoss, QuadraticLoss, estimate_lipschitz
from .solvers import LocalSubproblem, solve_gd, solve_lbfgs

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "BACKEND",
    "CadenConfig",
    "ExperimentConfig",
    "LocalSubproblem",
    "LogisticLoss",
    "MlpLoss",
    "QuadraticLoss",
    "RunResult",
    "TauSchedule",
    "Topology",
    "build_random_graph",
    "complete_graph",
    "estimate_lipschitz",
    "laplacian_spectrum",
    "load_config",
    "parse_config",
    "participation_sweep",
    "run_experiment",
    "serialize_config",
    "solve_gd",
    "solve_lbfgs",
    "__version__",
]
