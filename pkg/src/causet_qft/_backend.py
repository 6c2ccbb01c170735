"""Kernel backend selection.

The compiled extension is used when importable; setting the environment
variable ``CAUSET_QFT_PURE_PYTHON`` to a non-empty value forces the
pure-Python fallback. ``set_backend`` switches at runtime (tests, benchmarks).
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

kernels = _pykernels if (os.environ.get("CAUSET_QFT_PURE_PYTHON") or _compiled is None) else _compiled


def available():
    return sorted(_BACKENDS)


def get_backend() -> str:
    return "cython" if kernels is _compiled and _compiled is not None else "python"


def set_backend(name: str) -> None:
    global kernels
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; choose from {available()}")
    kernels = _BACKENDS[name]
