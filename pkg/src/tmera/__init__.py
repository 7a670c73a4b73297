"""Trotterized MERA: construction, causal-cone contraction and optimization for critical spin chains."""
from .models import ModelSpec, exact_ground_energy, reference_energy, xxz
from .network import MeraConfig, TMeraState, init_near_identity, init_random
from .contraction import energy, environments, evaluate
from .optimize import Objective, OptimizerConfig, euclidean_lbfgs, riemannian_lbfgs
from .schemes import SchemeSpec, run_restarts, run_scheme

__version__ = "0.1.0"

__all__ = [
    "ModelSpec", "exact_ground_energy", "reference_energy", "xxz",
    "MeraConfig", "TMeraState", "init_near_identity", "init_random",
    "energy", "environments", "evaluate",
    "Objective", "OptimizerConfig", "euclidean_lbfgs", "riemannian_lbfgs",
    "SchemeSpec", "run_restarts", "run_scheme",
]
