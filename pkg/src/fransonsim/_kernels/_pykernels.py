"""Numpy implementations of the time-tag kernels.

Same signatures and results as the compiled module; used when it is not built.
"""

from __future__ import annotations

import numpy as np


def cross_histogram(tags_a: np.ndarray, tags_b: np.ndarray, lo: int, bin_width: int, nbins: int) -> np.ndarray:
    a = np.asarray(tags_a, dtype=np.int64)
    b = np.asarray(tags_b, dtype=np.int64)
    hi = lo + bin_width * nbins
    start = np.searchsorted(b, a + lo, side="left")
    stop = np.searchsorted(b, a + hi, side="left")
    n_match = stop - start
    total = int(n_match.sum())
    if total == 0:
        return np.zeros(nbins, dtype=np.int64)
    owner = np.repeat(np.arange(a.size), n_match)
    # position of each match inside its owner's run
    offsets = np.arange(total) - np.repeat(np.cumsum(n_match) - n_match, n_match)
    dt = b[start[owner] + offsets] - a[owner]
    return np.bincount((dt - lo) // bin_width, minlength=nbins).astype(np.int64)


def dead_time_mask(tags: np.ndarray, dead_time: int) -> np.ndarray:
    t = np.asarray(tags, dtype=np.int64)
    n = t.size
    keep = np.ones(n, dtype=bool)
    if n < 2 or dead_time <= 0:
        return keep
    # tags far from their predecessor are always kept; only walk the conflicts
    conflict = np.flatnonzero(np.diff(t) < dead_time) + 1
    if conflict.size == 0:
        return keep
    last = 0
    prev_idx = -2
    for idx in conflict.tolist():
        if idx != prev_idx + 1:
            # predecessor is not a conflict, so it was kept
            last = t[idx - 1]
        if t[idx] - last < dead_time:
            keep[idx] = False
        else:
            last = t[idx]
        prev_idx = idx
    return keep
