"""Simulation and verification tools for catalytic branching networks."""
from __future__ import annotations

__version__ = "0.1.0"

from .cir import CirParams, laplace_endpoint, q_density, sample_endpoint, tail_bound  # noqa: E402
from .network import BranchingNetwork, LocalModel, hypercyclic_preset, localize, validate_network  # noqa: E402
from .semigroup import MixedModel, McEstimate, TestFunction  # noqa: E402
from .simulator import SimConfig, TrajectoryBatch, simulate_euler, simulate_frozen  # noqa: E402

__all__ = [
    "__version__", "CirParams", "q_density", "laplace_endpoint", "sample_endpoint", "tail_bound",
    "BranchingNetwork", "LocalModel", "localize", "validate_network", "hypercyclic_preset",
    "MixedModel", "McEstimate", "TestFunction", "SimConfig", "TrajectoryBatch",
    "simulate_euler", "simulate_frozen",
]
