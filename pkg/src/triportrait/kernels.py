"""Backend selection for the hot ray-marching loop.

The compiled extension ``triportrait._kernels`` is used when it imports; the
numpy implementation in :mod:`triportrait.render` is the fallback.  Set
``TRIPORTRAIT_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

_compiled = None
if os.environ.get("TRIPORTRAIT_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

_active = "cython" if _compiled is not None else "python"


def available() -> tuple[str, ...]:
    return ("cython", "python") if _compiled is not None else ("python",)


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in available():
        raise ValueError(f"backend {name!r} not available; have {available()}")
    _active = name


def compiled_kernels(name: str):
    """The compiled extension module for backend ``name``, or None."""
    if name not in available():
        raise ValueError(f"backend {name!r} not available; have {available()}")
    return _compiled if name == "cython" else None
