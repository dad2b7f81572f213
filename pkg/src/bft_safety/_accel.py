"""Kernel backend selection.

The compiled extension is used when importable. Setting
``BFT_SAFETY_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

import os

from . import _kernels_py

python_kernels = _kernels_py

if os.environ.get("BFT_SAFETY_PURE_PYTHON", "") not in ("", "0"):
    compiled_kernels = None
else:
    try:
        from . import _kernels as compiled_kernels  # type: ignore[attr-defined]
    except ImportError:
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "cython" if compiled_kernels is not None else "python"
