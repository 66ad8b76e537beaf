"""Kernel backend selection.

The compiled extension is used when it imports; set
``CARBONSHIFT_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

if _compiled is not None and os.environ.get("CARBONSHIFT_PURE_PYTHON") != "1":
    BACKEND = "cython"
else:
    BACKEND = "python"

sweep_deferred = BACKENDS[BACKEND].sweep_deferred
sweep_interrupted = BACKENDS[BACKEND].sweep_interrupted
