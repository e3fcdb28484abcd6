"""Kernel execution backend selection.

The recurrence kernels in kernels.py run numba-compiled by default. Setting
RIN_BACKEND=numpy selects the uncompiled pure-numpy path instead;
RIN_BACKEND=numba demands compilation and fails loudly when numba is absent.
With the variable unset, numba is used when importable and the numpy path
otherwise.
"""

import os

from .errors import ConfigError


def _detect() -> tuple[str, bool]:
    requested = os.environ.get("RIN_BACKEND", "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ConfigError(
            f"RIN_BACKEND must be 'numba' or 'numpy', got {requested!r}"
        )
    try:
        import numba  # noqa: F401

        have_numba = True
    except ImportError:
        have_numba = False
    if requested == "numba" and not have_numba:
        raise ConfigError("RIN_BACKEND=numba but numba is not importable")
    if requested == "":
        return ("numba" if have_numba else "numpy"), have_numba
    return requested, have_numba


ACTIVE, NUMBA_AVAILABLE = _detect()


def compile_kernel(fn):
    """njit-compile fn with IEEE-strict arithmetic (fastmath off)."""
    from numba import njit

    return njit(cache=True, fastmath=False)(fn)
