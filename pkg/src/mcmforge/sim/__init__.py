"""Noisy statevector simulation of dynamic circuits."""
from .backend import BACKEND, kernels
from .engine import (CapacityError, EmptyHistogram, NoiseModel,
                     OutcomeHistogram, ShotResult, confidence_filter,
                     hellinger_fidelity, run_shots)
from .exact import exact_distribution, tv_distance

__all__ = [
    "BACKEND", "kernels", "CapacityError", "EmptyHistogram", "NoiseModel",
    "OutcomeHistogram", "ShotResult", "confidence_filter",
    "hellinger_fidelity", "run_shots", "exact_distribution", "tv_distance",
]
