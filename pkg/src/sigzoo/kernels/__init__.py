"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
always available. ``SIGZOO_KERNEL=c`` forces the extension (ImportError if
missing), ``SIGZOO_KERNEL=py`` forces the fallback. Both expose the same
three functions with identical contracts; parity is covered by tests.
"""

from __future__ import annotations

import os

from . import numpy_backend


def _load(choice: str):
    if choice == "py":
        return numpy_backend, "py"
    try:
        from . import _core
    except ImportError:
        if choice == "c":
            raise ImportError(
                "SIGZOO_KERNEL=c requested but the compiled extension is not built"
            )
        return numpy_backend, "py"
    return _core, "c"


_impl, BACKEND = _load(os.environ.get("SIGZOO_KERNEL", "").strip().lower())

sqdist = _impl.sqdist
nn_assign = _impl.nn_assign
group_sums = _impl.group_sums


def available_backends() -> dict:
    """Name -> module for every backend importable right now."""
    out = {"py": numpy_backend}
    try:
        from . import _core

        out["c"] = _core
    except ImportError:
        pass
    return out
