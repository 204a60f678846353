"""Power-series solutions of the incompressible Navier-Stokes equations.

Modules: :mod:`series` (sparse exact series), :mod:`toy2d` (a 2D model
equation), :mod:`recurrence` (the coefficient march), :mod:`compaction`
(single-sum rewrites of the recurrence), :mod:`closed_form` (coefficients from
boundary data alone), :mod:`convergence` (bounds and radius estimates),
:mod:`manufactured` (an exact vortex oracle) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .closed_form import MemoCache, Tower, TowerBudget, closed_form_coeff
from .recurrence import BoundaryData, FlowConfig, SeriesSolution, march
from .series import EXACT, FLOAT, Caps, CoefficientField, MultiIndex

__all__ = [
    "BoundaryData", "Caps", "CoefficientField", "EXACT", "FLOAT", "FlowConfig", "MemoCache", "MultiIndex",
    "SeriesSolution", "Tower", "TowerBudget", "closed_form_coeff", "march", "__version__",
]
