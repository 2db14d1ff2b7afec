"""Stepping-kernel backend selection.

The compiled extension is preferred when it built successfully; the
pure-Python twin is the fallback.  ``VWSHOOT_PURE=1`` in the environment
forces the fallback (used by tests and the benchmark).
"""

import os

from . import rk45_py

_FORCE_PURE = os.environ.get("VWSHOOT_PURE", "") not in ("", "0")

try:  # pragma: no cover - depends on the build
    from . import _rk45_cy
except ImportError:
    _rk45_cy = None

if _FORCE_PURE or _rk45_cy is None:
    _active = rk45_py
    BACKEND = "python"
else:
    _active = _rk45_cy
    BACKEND = "compiled"

# status codes (identical in both backends)
OK = rk45_py.OK
UNDERFLOW = rk45_py.UNDERFLOW
NONFINITE = rk45_py.NONFINITE
BUDGET = rk45_py.BUDGET

run = _active.run
dense_eval = rk45_py.dense_eval
DENSE_P = rk45_py.P


def available_backends():
    out = ["python"]
    if _rk45_cy is not None:
        out.insert(0, "compiled")
    return out


def get_backend(name):
    """Kernel module for an explicit backend name (benchmark helper)."""
    if name == "python":
        return rk45_py
    if name == "compiled" and _rk45_cy is not None:
        return _rk45_cy
    raise ValueError(f"backend {name!r} not available")
