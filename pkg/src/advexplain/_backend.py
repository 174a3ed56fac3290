"""Kernel backend selection.

The compiled extension is used when importable; ``ADVEXPLAIN_PURE_PYTHON=1``
forces the pure-Python twins.
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _pick():
    if _compiled is not None and os.environ.get("ADVEXPLAIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
        return _compiled, "cython"
    return _fallback, "python"


kernels, BACKEND = _pick()


def get(name):
    """Return a kernel module by backend name ("cython" or "python")."""
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
