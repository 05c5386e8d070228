"""Transonic shock fronts in almost-flat two-dimensional nozzles.

Modules: gas_core (gas and jump relations), nozzle (geometry and profiles),
shock_locator (anchor positions), elliptic_bvp (first-order elliptic
solvers), linear_fbp (linear free boundary problem), supersonic and
transonic_iteration (nonlinear solve) and cli.
"""

from .errors import NozzleShockError
from .gas_core import BackgroundShock, FlowState, GasConstants
from .linear_fbp import solve_linear_fbp
from .nozzle import NozzleSpec, Profile1D
from .shock_locator import find_admissible_locations
from .transonic_iteration import IterationOptions, ShockSolution, solve_transonic

__all__ = [
    "BackgroundShock",
    "FlowState",
    "GasConstants",
    "IterationOptions",
    "NozzleShockError",
    "NozzleSpec",
    "Profile1D",
    "ShockSolution",
    "find_admissible_locations",
    "solve_linear_fbp",
    "solve_transonic",
]

__version__ = "0.1.0"
