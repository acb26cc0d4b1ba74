"""Kernel selection.

The compiled extension is used when it imports; setting the environment
variable ``BOXBALL_PURE_PYTHON=1`` forces the pure-Python kernels.
"""
import os

if os.environ.get("BOXBALL_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _pykernels as kernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
