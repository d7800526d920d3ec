"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set
``IMPLICIT_SDF_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("IMPLICIT_SDF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

min_sq_dist = _impl.min_sq_dist
kth_sq_dist = _impl.kth_sq_dist
linear_gd = _impl.linear_gd
softplus_pair = _impl.softplus_pair

__all__ = ["BACKEND", "min_sq_dist", "kth_sq_dist", "linear_gd", "softplus_pair"]
