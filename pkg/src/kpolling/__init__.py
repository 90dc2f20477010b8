"""Exact, asymptotic and simulated analysis of a two-queue k-limited polling system.

Submodules
----------
model
    Parameters, stability checks and heavy-traffic perturbation paths.
ctmc
    Truncated continuous-time Markov chain and its stationary distribution.
vacation
    Closed-form solution of the k1-limited queue with Erlang-k2 vacations.
ht
    Heavy-traffic limit law of ``(N1, delta N2)``.
sim
    Discrete-event simulator.
harness
    Convergence sweeps comparing finite-``delta`` systems to the limit.
"""

from . import ctmc, harness, ht, model, sim, vacation
from .errors import (AccuracyError, ConstructionError, DomainError, InvalidParameterError,
                     InvalidPathError, KPollingError, NumericalError, OutOfRangeError,
                     UnstableSystemError, UnsupportedDegeneracyError)
from .model import GeneralizedPath, PerturbationPath, PollingParams, realize, validate

__version__ = "0.1.0"

__all__ = [
    "ctmc", "harness", "ht", "model", "sim", "vacation",
    "PollingParams", "PerturbationPath", "GeneralizedPath", "realize", "validate",
    "KPollingError", "InvalidParameterError", "OutOfRangeError", "InvalidPathError",
    "UnstableSystemError", "DomainError", "ConstructionError", "NumericalError",
    "UnsupportedDegeneracyError", "AccuracyError",
]
