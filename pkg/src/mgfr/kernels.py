"""Hot-loop kernels with backend selection at import time.

The compiled Cython module is used when importable; otherwise (or when the
``MGFR_PURE_PYTHON`` environment variable is set) the pure-Python fallback is
used. ``BACKEND`` names the active implementation.
"""
import os

from . import _fallback

if os.environ.get("MGFR_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    pava = _compiled.pava
    pava_rows = _compiled.pava_rows
    BACKEND = "cython"
else:
    pava = _fallback.pava
    pava_rows = _fallback.pava_rows
    BACKEND = "python"

__all__ = ["pava", "pava_rows", "BACKEND", "compiled_available"]


def compiled_available():
    """Return True if the compiled kernels can be imported (regardless of selection)."""
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
