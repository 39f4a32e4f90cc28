"""Hot loops with a compiled backend and a pure-Python fallback.

The compiled extension is preferred when importable. Set ``CHANGEDEPS_PURE=1``
to force the fallback (tests use this to check the two agree).
"""

from __future__ import annotations

import os

from . import _pure

BACKEND = "python"

if os.environ.get("CHANGEDEPS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _speedups as _impl
    except ImportError:  # extension not built
        _impl = _pure
    else:
        BACKEND = "cython"
else:
    _impl = _pure

dominance_counts = _impl.dominance_counts
rank_sum_counts = _impl.rank_sum_counts
sgns_epoch = _impl.sgns_epoch


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"`` explicitly."""
    if name == "python":
        return _pure
    if name == "cython":
        from . import _speedups

        return _speedups
    raise ValueError(f"unknown kernel backend {name!r}")


__all__ = ["BACKEND", "dominance_counts", "rank_sum_counts", "sgns_epoch", "get_backend"]
