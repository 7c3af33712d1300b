"""Renderer backend selection.

The compiled extension is preferred when importable; the numpy reference
produces byte-identical frames and is used as the fallback.  Set
FACEPROJ_FORCE_PYTHON=1 to skip the extension (useful for benchmarking
and for verifying backend equivalence).
"""

from __future__ import annotations

import os

from . import reference

_BACKEND = reference
_BACKEND_NAME = "python"

if not os.environ.get("FACEPROJ_FORCE_PYTHON"):
    try:
        from . import _fast

        _BACKEND = _fast
        _BACKEND_NAME = "compiled"
    except ImportError:
        pass


def active_backend() -> str:
    """'compiled' when the extension is in use, else 'python'."""
    return _BACKEND_NAME


def get_backend(name: str):
    """Fetch a backend module by name regardless of the active selection."""
    if name == "python":
        return reference
    if name == "compiled":
        from . import _fast

        return _fast
    raise ValueError(f"unknown backend {name!r}")


render_into = _BACKEND.render_into
