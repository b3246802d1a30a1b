"""Kernel backend selection.

The compiled extension is used when importable; setting the environment
variable ``FLPRICING_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

_NAMES = ("box_allocate", "wardrop_level", "water_level", "brd_sweep")


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


def backend(name: str) -> ModuleType:
    """Return the kernel module called ``name`` (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        mod = _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built")
        return mod
    raise ValueError(f"unknown kernel backend {name!r}")


def available() -> list[str]:
    return ["cython", "python"] if _load_compiled() is not None else ["python"]


if os.environ.get("FLPRICING_PURE_PYTHON", "") not in ("", "0"):
    _active = _pykernels
else:
    _active = _load_compiled() or _pykernels

BACKEND = "cython" if _active is not _pykernels else "python"

box_allocate = _active.box_allocate
wardrop_level = _active.wardrop_level
water_level = _active.water_level
brd_sweep = _active.brd_sweep

__all__ = ["BACKEND", "available", "backend", *_NAMES]
