"""Kernel backend selection.

The convolution/pooling hot path runs through numba-compiled kernels by
default, with a pure-numpy implementation behind the same interface.
Selection order: a ``set_backend`` call, then the ``AMBC_BACKEND``
environment variable (``numba``, ``numpy``, or ``auto``), then numba if
it imports.  ``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

ENV_VAR = "AMBC_BACKEND"
_CHOICES = ("auto", "numba", "numpy")

_forced: str | None = None
_resolved: str | None = None
_kernels = None

__all__ = ["active_backend", "get_kernels", "set_backend", "ENV_VAR"]


def _resolve() -> str:
    requested = _forced or os.environ.get(ENV_VAR, "auto").lower()
    if requested not in _CHOICES:
        raise ValueError(
            f"{ENV_VAR} must be one of {_CHOICES}, got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise
        return "numpy"
    return "numba"


def active_backend() -> str:
    """Name of the kernel backend in use ('numba' or 'numpy')."""
    global _resolved
    if _resolved is None:
        _resolved = _resolve()
    return _resolved


def get_kernels():
    """Kernel module for the active backend (cached)."""
    global _kernels
    if _kernels is None:
        if active_backend() == "numba":
            from . import kernels_numba as mod
        else:
            from . import kernels_numpy as mod
        _kernels = mod
    return _kernels


def set_backend(name: str | None) -> None:
    """Force a backend ('numba' / 'numpy' / 'auto'), or None to re-read the env."""
    global _forced, _resolved, _kernels
    if name is not None and name not in _CHOICES:
        raise ValueError(f"backend must be one of {_CHOICES}, got {name!r}")
    _forced = name
    _resolved = None
    _kernels = None
