"""Kernel backend selection: compiled extension if built, numpy otherwise.

Set ``SSD_SCREEN_KERNEL=numpy`` to force the fallback.
"""

import os

from . import _kernels_py

try:
    from . import _gmm_kernels as _compiled
except ImportError:
    _compiled = None

if _compiled is not None and os.environ.get("SSD_SCREEN_KERNEL") != "numpy":
    _active = _compiled
else:
    _active = _kernels_py

BACKEND = _active.BACKEND
gmm_accumulate = _active.gmm_accumulate


def available_backends():
    """Mapping backend name -> gmm_accumulate, for tests and benchmarks."""
    out = {"numpy": _kernels_py.gmm_accumulate}
    if _compiled is not None:
        out["cython"] = _compiled.gmm_accumulate
    return out
