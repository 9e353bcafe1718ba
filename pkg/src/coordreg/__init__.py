"""Coordinated output regulation of heterogeneous linear agents over switching graphs.

Modules
-------
graphs     leader-follower topologies, grounded Laplacians, switching schedules
ctlinalg   regulator equations, Riccati/Lyapunov solvers, zeros, staircase
synthesis  reduction, canonical forms, observers, controllers, certification
sim        closed-loop assembly and fixed-step RK4 integration
scenario   scenario documents, validation and built-in presets
cli        command-line front end
"""

__version__ = "0.1.0"

from .errors import CoordRegError  # noqa: F401
from .scenario import Scenario, SimConfig, load_scenario, preset, validate_assumptions  # noqa: F401
from .sim import BACKEND, assemble_closed_loop, convergence_metrics, integrate  # noqa: F401
from .synthesis import Mode, synthesize  # noqa: F401
