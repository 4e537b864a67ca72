"""
Non-Conservative Equilibrium Propagation Engine

Engine package initialization.
"""

from .config import RunConfig, load_run_config
from .cost import QuadraticCost, readout
from .data_loader import DataLoader, Dataset, batches, load_idx
from .dynamics import EquilibriumResult, ForceField, RelaxationConfig, jacobian, relax
from .feedforward import FeedforwardField, FeedforwardParams
from .fixed_ratio import FixedRatioField, FixedRatioParams, fixed_ratio_init
from .hopfield import HopfieldField, HopfieldParams, init_hopfield
from .learners import GradientEstimate, NudgeConfig, aep_update, dyadic_update, ep_update, vf_update
from .oracle import bptt_gradient, exact_gradient, finite_difference_gradient, vf_bias_prediction
from .training import Trainer, run_training

__all__ = [
    "RunConfig",
    "load_run_config",
    "QuadraticCost",
    "readout",
    "DataLoader",
    "Dataset",
    "batches",
    "load_idx",
    "EquilibriumResult",
    "ForceField",
    "RelaxationConfig",
    "jacobian",
    "relax",
    "FeedforwardField",
    "FeedforwardParams",
    "FixedRatioField",
    "FixedRatioParams",
    "fixed_ratio_init",
    "HopfieldField",
    "HopfieldParams",
    "init_hopfield",
    "GradientEstimate",
    "NudgeConfig",
    "aep_update",
    "dyadic_update",
    "ep_update",
    "vf_update",
    "bptt_gradient",
    "exact_gradient",
    "finite_difference_gradient",
    "vf_bias_prediction",
    "Trainer",
    "run_training",
]
