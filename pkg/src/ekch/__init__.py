"""Nonlocal Euler-Korteweg and Cahn-Hilliard solvers on the flat torus."""

from . import backend
from .ch import CHState, LCHParams, NLCHParams, run_lch, run_nlch
from .ek import EKParams, EKState, run_ek
from .grid import TorusGrid
from .mollifier import build_kernel, estimate_poincare_constant
from .potential import builtin_double_well, builtin_power, make_potential

__all__ = [
    "backend", "CHState", "LCHParams", "NLCHParams", "run_lch", "run_nlch", "EKParams", "EKState", "run_ek",
    "TorusGrid", "build_kernel", "estimate_poincare_constant", "builtin_double_well", "builtin_power",
    "make_potential",
]
