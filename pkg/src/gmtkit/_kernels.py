"""Kernel dispatch: compiled extension if importable, numpy fallback otherwise.

Set GMTKIT_PURE=1 to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

_compiled = None
if os.environ.get("GMTKIT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on build
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"

greedy_net = _impl.greedy_net
prefix_content = _impl.prefix_content
interval_union_lengths = _impl.interval_union_lengths


def backend(name: str):
    """Return the kernel module for ``name`` in {"cython", "python"}."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
