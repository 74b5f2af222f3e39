"""Kernel backend selection.

The compiled Cython extension is preferred when importable; the pure-NumPy
reference is the fallback.  NSEXPLAIN_BACKEND=python|compiled forces the
choice, and failing loudly on a forced-but-missing backend beats silently
benchmarking the wrong code.
"""

from __future__ import annotations

import os

from . import python_ref

_BACKENDS = {"python": python_ref}

try:
    from . import _core  # type: ignore[attr-defined]

    _BACKENDS["compiled"] = _core
except ImportError:
    _core = None

_requested = os.environ.get("NSEXPLAIN_BACKEND", "").strip().lower()
if _requested:
    if _requested not in _BACKENDS:
        raise ImportError(
            f"NSEXPLAIN_BACKEND={_requested!r} but available backends are "
            f"{sorted(_BACKENDS)}"
        )
    _impl = _BACKENDS[_requested]
    BACKEND_NAME = _requested
else:
    BACKEND_NAME = "compiled" if "compiled" in _BACKENDS else "python"
    _impl = _BACKENDS[BACKEND_NAME]

normalize_adjacency = _impl.normalize_adjacency
gcn_forward = _impl.gcn_forward
gcn_backward = _impl.gcn_backward


def available_backends():
    return dict(_BACKENDS)


def backend_name() -> str:
    return BACKEND_NAME
