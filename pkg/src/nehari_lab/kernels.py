"""Backend selection for the pair-sum kernels.

The compiled extension is used when it imports; otherwise the numpy version.
Set ``NEHARI_LAB_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("NEHARI_LAB_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"


def get_backend(name=None):
    """Return the kernel module for ``name`` (``compiled``/``python``) or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def max_workers():
    """Worker cap from ``NEHARI_LAB_THREADS`` (default: CPU count, at most 8)."""
    env = os.environ.get("NEHARI_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))
