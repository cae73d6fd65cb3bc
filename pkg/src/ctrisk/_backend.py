"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-Python twin is used
when the extension is absent or CTRISK_FORCE_PYTHON is set (any non-empty
value).  Both expose the same functions with the same numerical contracts.
"""

import os

if os.environ.get("CTRISK_FORCE_PYTHON"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels


def backend_name():
    return kernels.BACKEND
