"""Kernel lane selection: compiled extension when available, else pure Python.

Set CHRONOKG_PURE=1 to force the pure lane (also the fallback when the
extension was not built). `BACKEND` reports the active lane.
"""
from __future__ import annotations

import os

if os.environ.get("CHRONOKG_PURE"):
    from . import pykern as _impl

    BACKEND = "pure"
else:
    try:
        from . import ckern as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import pykern as _impl  # type: ignore[no-redef]

        BACKEND = "pure"

allen_code = _impl.allen_code
scan_intersecting = _impl.scan_intersecting

__all__ = ["BACKEND", "allen_code", "scan_intersecting"]
