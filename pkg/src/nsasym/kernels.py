"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over.  Set ``NSASYM_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from nsasym import _kernels_py

_compiled = None
if not os.environ.get("NSASYM_PURE_PYTHON"):
    try:
        from nsasym import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_active = _compiled if _compiled is not None else _kernels_py


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def get(name: str | None = None):
    """Kernel module for ``name`` ('cython' or 'python'); default is the active one."""
    if name is None:
        return _active
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
