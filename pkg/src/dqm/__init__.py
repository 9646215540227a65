"""Deformed momentum and kinetic operators on periodic spectral grids.

Submodules: :mod:`~dqm.grid` (lattice and spectral calculus), :mod:`~dqm.wavefield`
(states and the polar split), :mod:`~dqm.operators`, :mod:`~dqm.evolution`,
:mod:`~dqm.functionals`, :mod:`~dqm.scenarios` and :mod:`~dqm.cli`.
"""

__version__ = "0.1.0"

from .grid import Grid, make_grid
from .wavefield import NodeError, PhysicalParams, PolarField, WaveField, from_polar, normalize, to_polar

__all__ = ["Grid", "make_grid", "NodeError", "PhysicalParams", "PolarField", "WaveField",
           "from_polar", "normalize", "to_polar", "__version__"]
