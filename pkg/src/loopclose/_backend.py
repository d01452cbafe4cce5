"""Kernel backend selection.

Hot numeric kernels ship in two variants: numba-jitted loops and a pure
numpy fallback. The active variant is chosen once at import time:

* ``LOOPCLOSE_NUMBA=0`` (also ``off``/``false``/``no``) forces the numpy path;
* anything else uses numba when it imports, numpy otherwise.

``loopclose.backend_name()`` reports which path is live.
"""

from __future__ import annotations

import os

_FALSY = {"0", "off", "false", "no"}


def _want_numba() -> bool:
    return os.environ.get("LOOPCLOSE_NUMBA", "auto").strip().lower() not in _FALSY


HAVE_NUMBA = False
if _want_numba():
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def backend_name() -> str:
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
