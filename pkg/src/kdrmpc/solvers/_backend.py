"""Pick the compiled kernels when available.

Set ``KDRMPC_FORCE_PYTHON=1`` to use the numpy fallback even when the
extension is built.
"""
import os

from . import _pykernels

kernels = _pykernels
BACKEND = "python"

if os.environ.get("KDRMPC_FORCE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        return out
    out["cython"] = _ckernels
    return out
