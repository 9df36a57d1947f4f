"""Morley finite elements for the fourth-order singular perturbation problem
eps^2 biharmonic - Laplacian on the unit square: direct and Nitsche-penalized
methods, their exact Poisson/Brinkman decoupling, and robust iterative solvers.

Set ``MORLEYFEM_THREADS`` before the first import to cap the linear-algebra
thread pools, and ``MORLEYFEM_PURE_PYTHON=1`` to skip the compiled kernels.
"""

import os as _os

_cap = _os.environ.get("MORLEYFEM_THREADS")
if _cap:
    # honored only if set before the numerical libraries are first imported
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        _os.environ.setdefault(_var, _cap)

from .analysis import ErrorReport, error_norms, example1, example2, rate_table
from .checks import run_all
from .mesh import Mesh, load_mesh, save_mesh, uniform_unit_square
from .methods import METHODS, MethodResult, SolverOptions, solve

__version__ = "0.1.0"

__all__ = [
    "ErrorReport", "error_norms", "example1", "example2", "rate_table",
    "run_all", "Mesh", "load_mesh", "save_mesh", "uniform_unit_square",
    "METHODS", "MethodResult", "SolverOptions", "solve", "__version__",
]
