"""Pessimistic-optimistic online dispatching (POND) simulator."""
from .baselines import run_etc_trial
from .dispatch import PondParams, TrialRecord, run_pond_trial
from .fluid_lp import FluidProblem, LpStatus, slater_margin, solve_fluid_lp, theorem_params
from .instance import Instance, build_constraint, synthetic_instance, validate_instance
from .learners import Learner, moss_index, ucb_index
from .metrics import aggregate, compute_metrics, fit_scaling
from .stochastic import StreamSeed, derive_stream

__version__ = "0.1.0"
