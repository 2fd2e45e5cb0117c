"""Hot loops for time-tag processing.

The compiled Cython module is used when it was built; otherwise the numpy
implementations are loaded. Set ``FRANSONSIM_PURE_PYTHON=1`` to force the
fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

if os.environ.get("FRANSONSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def cross_histogram(tags_a, tags_b, lo: int, bin_width: int, nbins: int) -> np.ndarray:
    """Counts of ``t_b - t_a`` in ``nbins`` bins starting at ``lo``; inputs sorted."""
    a = np.ascontiguousarray(tags_a, dtype=np.int64)
    b = np.ascontiguousarray(tags_b, dtype=np.int64)
    return _impl.cross_histogram(a, b, int(lo), int(bin_width), int(nbins))


def dead_time_mask(tags, dead_time: int) -> np.ndarray:
    """Mask of tags surviving a non-paralyzable dead time; input sorted."""
    t = np.ascontiguousarray(tags, dtype=np.int64)
    return _impl.dead_time_mask(t, int(dead_time))


__all__ = ["BACKEND", "cross_histogram", "dead_time_mask"]
