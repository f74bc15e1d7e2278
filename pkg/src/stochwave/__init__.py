"""Exponential Euler and baseline integrators for semilinear stochastic wave equations."""
from .integrators import SchemeKind, integrate, plan, step
from .model import Problem, preset
from .spectral_basis import StatePair, apply_group, make_basis

__version__ = "0.1.0"

__all__ = [
    "SchemeKind",
    "integrate",
    "plan",
    "step",
    "Problem",
    "preset",
    "StatePair",
    "apply_group",
    "make_basis",
]
