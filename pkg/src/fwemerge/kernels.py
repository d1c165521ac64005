"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the pure-Python twin
is used. ``FWEMERGE_BACKEND`` forces a choice: ``compiled`` (fail if the
extension is missing), ``python`` or ``auto`` (the default).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pycore


def _select() -> ModuleType:
    choice = os.environ.get("FWEMERGE_BACKEND", "auto").strip().lower()
    if choice == "python":
        return _pycore
    if choice not in ("auto", "compiled"):
        raise ValueError(f"FWEMERGE_BACKEND must be auto, compiled or python, got {choice!r}")
    try:
        from . import _core
    except ImportError:
        if choice == "compiled":
            raise
        return _pycore
    return _core


_impl = _select()

BACKEND: str = _impl.BACKEND
diffusion_step = _impl.diffusion_step
dual_advance = _impl.dual_advance
frozen_star_dual_sizes = _impl.frozen_star_dual_sizes
bd_chain_sample = _impl.bd_chain_sample


def compiled_available() -> bool:
    """Return True when the compiled extension can be imported."""
    try:
        from . import _core  # noqa: F401
    except ImportError:
        return False
    return True


def backend_module(name: str) -> ModuleType:
    """Return the kernel module for ``name`` in {"compiled", "python"}."""
    if name == "python":
        return _pycore
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
