"""Hot numerical kernels with a compiled core and a pure-numpy fallback.

The compiled Cython backend is used when available; setting the environment
variable ``MORLEYFEM_PURE_PYTHON=1`` (before import) forces the fallback.
``BACKEND`` records which implementation is active.
"""

import os

from . import _pykernels

if os.environ.get("MORLEYFEM_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

csr_matvec = _impl.csr_matvec
gauss_seidel_forward = _impl.gauss_seidel_forward
gauss_seidel_backward = _impl.gauss_seidel_backward

__all__ = ["BACKEND", "csr_matvec", "gauss_seidel_forward", "gauss_seidel_backward"]
