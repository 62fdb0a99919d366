"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
fallback. Setting ``FUSIONBENCH_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

python = _pykernels

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and not os.environ.get("FUSIONBENCH_PURE_PYTHON"):
    active = compiled
    BACKEND = "compiled"
else:
    active = _pykernels
    BACKEND = "python"


def get_backend(name="auto"):
    """Return the kernel module for ``name`` in {"auto", "compiled", "python"}."""
    if name == "auto":
        return active
    if name == "python":
        return _pykernels
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not available in this install")
        return compiled
    raise ValueError(f"unknown kernel backend {name!r}")
