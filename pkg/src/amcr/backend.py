"""Kernel backend selection.

Hot numeric kernels exist twice: a numba @njit version and a pure-numpy
fallback. The env var AMCR_BACKEND picks one ("numba" or "numpy");
unset means numba when importable, numpy otherwise. Selection happens
once at import. Decorated loops fall back to the undecorated function
when numba is missing, so the module always imports.
"""

import logging
import os

log = logging.getLogger(__name__)

try:
    from numba import njit as _numba_njit
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba_njit = None
    NUMBA_AVAILABLE = False


def _select_backend() -> str:
    requested = os.environ.get("AMCR_BACKEND", "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not NUMBA_AVAILABLE:
            log.warning("AMCR_BACKEND=numba requested but numba is not importable; using numpy")
            return "numpy"
        return "numba"
    if requested:
        log.warning("unknown AMCR_BACKEND=%r; valid values are 'numba' and 'numpy'", requested)
    return "numba" if NUMBA_AVAILABLE else "numpy"


BACKEND = _select_backend()


def njit(func):
    """Jit-compile `func` when numba is importable, else return it unchanged.

    Compilation is independent of the selected backend so benchmarks can
    time both paths; dispatch honours BACKEND. nopython, no fastmath,
    single-threaded: kernel results must be deterministic and exactly
    reproducible run to run.
    """
    if NUMBA_AVAILABLE:
        return _numba_njit(cache=True, nogil=True)(func)
    return func


def using_numba() -> bool:
    return BACKEND == "numba"
