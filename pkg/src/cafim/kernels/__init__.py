"""Hot solver kernels with a compiled core and a pure-Python fallback.

The Cython extension is preferred when it was built; set CAFIM_PURE_PYTHON=1
to force the NumPy fallback.  ``BACKEND`` records which one is active.
"""

import os

from . import _reference

if os.environ.get("CAFIM_PURE_PYTHON"):
    _impl = _reference
    BACKEND = "python"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = _reference
        BACKEND = "python"

projected_qp_solve = _impl.projected_qp_solve
pgs_solve = _impl.pgs_solve
project_cone = _reference.project_cone
lipschitz_upper_bound = _reference.lipschitz_upper_bound

__all__ = [
    "BACKEND",
    "projected_qp_solve",
    "pgs_solve",
    "project_cone",
    "lipschitz_upper_bound",
]
