"""Kernel backend selection: compiled Cython core with pure-NumPy fallback.

The compiled extension is preferred; MCMFORGE_PURE_PYTHON=1 forces the
fallback (used by tests and the kernel benchmark to compare both).
"""
from __future__ import annotations

import os

if os.environ.get("MCMFORGE_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernels as kernels

BACKEND = kernels.BACKEND
