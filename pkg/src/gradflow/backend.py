"""Selects the kernel implementation at import time.

The compiled Cython extension is preferred; the numpy/scipy fallback keeps the
package fully functional without it.  Set GRADFLOW_BACKEND=python or
GRADFLOW_BACKEND=compiled to force a choice (forcing an unavailable compiled
backend raises at import).
"""

from __future__ import annotations

import os


def load_impl(name: str):
    """Load one backend module by name ('compiled' or 'python'); may raise ImportError."""
    if name == "compiled":
        from . import _kernels
        return _kernels
    if name == "python":
        from . import _kernels_py
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}")


_requested = os.environ.get("GRADFLOW_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = load_impl("python")
    NAME = "python"
elif _requested in ("compiled", "c"):
    _impl = load_impl("compiled")
    NAME = "compiled"
elif _requested == "":
    try:
        _impl = load_impl("compiled")
        NAME = "compiled"
    except ImportError:
        _impl = load_impl("python")
        NAME = "python"
else:
    raise ValueError(f"GRADFLOW_BACKEND={_requested!r}: expected 'compiled' or 'python'")

csr_matvec = _impl.csr_matvec
shifted_apply = _impl.shifted_apply
cg_shifted = _impl.cg_shifted
