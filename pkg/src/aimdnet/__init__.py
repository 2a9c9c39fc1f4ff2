"""Mean-field equilibria and exact simulation of AIMD flows sharing a network."""

__version__ = "0.1.0"

from .equilibrium import (StationaryLaw, alpha, load_map, loads, phi_all, residual,
                          stationary_density, stationary_mean, throughput_coefficient)
from .model import (ClassParams, DomainError, LossRateSpec, NetworkModel, NodeLossTerm,
                    binary_tree, check_model, custom_model, linear_model, ring_full, ring_mixed,
                    ring_two, tree_model, validate)
from .simulator import (SimOptions, SimulationSummary, simulate_finite, simulate_particles,
                        simulate_single)
from .solvers import FixedPointResult, SolverOptions, scan_multistability, solve, solve_bracket

__all__ = [
    "ClassParams", "DomainError", "FixedPointResult", "LossRateSpec", "NetworkModel",
    "NodeLossTerm", "SimOptions", "SimulationSummary", "SolverOptions", "StationaryLaw", "alpha",
    "binary_tree", "check_model", "custom_model", "linear_model", "load_map", "loads", "phi_all",
    "residual", "ring_full", "ring_mixed", "ring_two", "scan_multistability", "simulate_finite",
    "simulate_particles", "simulate_single", "solve", "solve_bracket", "stationary_density",
    "stationary_mean", "throughput_coefficient", "tree_model", "validate",
]
