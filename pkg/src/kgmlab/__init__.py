"""Unitary-gauge scalar electrodynamics on a periodic line.

Two classically equivalent formulations of the same model are evolved side
by side: the full system carrying the scalar field explicitly, and a
reduced system in which the scalar intensity is reconstructed from the
potential via the constraint sector.  A Carleman embedding of the reduced
dynamics on tiny grids rounds out the package.
"""

from __future__ import annotations

from .carleman import FockBasis, PolySystem, polynomialize_reduced
from .diagnostics import compare, current_residual, observed_order, total_energy
from .full import run_full, step_full
from .kernel import (
    FullState,
    Grid1D,
    GuardViolation,
    NonFinite,
    Params,
    ReducedState,
    SimulationError,
    Trajectory,
    deriv_x,
    deriv_xx,
    lorentz_dot,
)
from .reduced import reconstruct_phi, run_reduced, step_reduced
from .scenarios import ScenarioSpec, default_scenario, make_scenario

__all__ = [
    "FockBasis",
    "FullState",
    "Grid1D",
    "GuardViolation",
    "NonFinite",
    "Params",
    "PolySystem",
    "ReducedState",
    "ScenarioSpec",
    "SimulationError",
    "Trajectory",
    "compare",
    "current_residual",
    "default_scenario",
    "deriv_x",
    "deriv_xx",
    "lorentz_dot",
    "make_scenario",
    "observed_order",
    "polynomialize_reduced",
    "reconstruct_phi",
    "run_full",
    "run_reduced",
    "step_full",
    "step_reduced",
    "total_energy",
]

__version__ = "0.1.0"
