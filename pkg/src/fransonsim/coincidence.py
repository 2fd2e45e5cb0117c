"""Arrival-time-difference histograms, peak integration and SNR."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._kernels import cross_histogram

log = logging.getLogger(__name__)

DEFAULT_BIN_PS = 75
DEFAULT_HALFWIDTH_PS = 150


@dataclass
class CoincidenceHistogram:
    """Counts of ``t_b - t_a`` in equal bins over ``[range_min, range_max)``."""

    bin_width: int
    range_min: int
    range_max: int
    counts: np.ndarray
    total_pairs_examined: int = 0

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.size * self.bin_width != self.range_max - self.range_min:
            raise ValueError("counts length must equal (max - min) / bin_width")
        if np.any(self.counts < 0):
            raise ValueError("histogram counts must be non-negative")

    @property
    def nbins(self) -> int:
        return int(self.counts.size)

    @property
    def bin_centers(self) -> np.ndarray:
        # centre of the integer support [lo, lo + bin_width - 1] of each bin
        return self.range_min + np.arange(self.nbins) * self.bin_width + (self.bin_width - 1) / 2.0

    def bin_index(self, t: float) -> int:
        return int(math.floor((t - self.range_min) / self.bin_width))

    def __add__(self, other: CoincidenceHistogram) -> CoincidenceHistogram:
        if (self.bin_width, self.range_min, self.range_max) != (other.bin_width, other.range_min, other.range_max):
            raise ValueError("cannot add histograms with different binning")
        return CoincidenceHistogram(
            self.bin_width,
            self.range_min,
            self.range_max,
            self.counts + other.counts,
            self.total_pairs_examined + other.total_pairs_examined,
        )


@dataclass(frozen=True)
class PeakCounts:
    c_ls: int
    c_center: int
    c_sl: int
    c_accidental: float
    window_halfwidth: int
    window_bins: int = 0

    def __post_init__(self) -> None:
        if min(self.c_ls, self.c_center, self.c_sl, self.c_accidental) < 0:
            raise ValueError("peak counts must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def aligned_range(reference: int, bin_width: int, bins_below: int, bins_above: int) -> tuple[int, int]:
    """Histogram range with ``reference`` at the centre of a bin.

    ``reference`` ends up in the middle of the integer support of its bin;
    for even ``bin_width`` the bin is one picosecond heavier on the right.
    """
    lo = int(reference) - (bin_width - 1) // 2 - bins_below * bin_width
    hi = lo + (bins_below + bins_above + 1) * bin_width
    return lo, hi


def franson_range(offset_ps: int, delta_t: int, bin_width: int = DEFAULT_BIN_PS, margin_ps: int = 1500):
    """Range centred on the middle peak, wide enough for both side peaks plus baseline."""
    n = int(math.ceil((abs(delta_t) + margin_ps) / bin_width))
    return aligned_range(offset_ps, bin_width, n, n)


def _is_sorted(x: np.ndarray) -> bool:
    return x.size < 2 or bool(np.all(x[1:] >= x[:-1]))


def build_histogram(tags_a, tags_b, bin_width: int = DEFAULT_BIN_PS, range: tuple[int, int] = (-5000, 5000)) -> CoincidenceHistogram:
    """Histogram of ``t_b - t_a`` over all pairs falling in ``range``."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    lo, hi = (int(v) for v in range)
    if hi <= lo or (hi - lo) % bin_width:
        raise ValueError("range must span a positive whole number of bins")
    a = np.asarray(tags_a, dtype=np.int64)
    b = np.asarray(tags_b, dtype=np.int64)
    if not _is_sorted(a) or not _is_sorted(b):
        raise ValueError("time-tag streams must be sorted")
    counts = cross_histogram(a, b, lo, bin_width, (hi - lo) // bin_width)
    return CoincidenceHistogram(bin_width, lo, hi, counts, int(counts.sum()))


def peak_windows(h: CoincidenceHistogram, centers, halfwidth: int) -> list[tuple[int, int]]:
    """Bin index ranges ``[start, stop)`` for each peak."""
    n = int(round(halfwidth / h.bin_width))
    windows = []
    for c in centers:
        k = h.bin_index(c)
        start, stop = k - n, k + n + 1
        if start < 0 or stop > h.nbins:
            raise ValueError(f"peak window around {c} ps falls outside the histogram range")
        windows.append((start, stop))
    ordered = sorted(windows)
    for (s0, e0), (s1, _) in zip(ordered, ordered[1:]):
        if s1 < e0:
            raise ValueError("peak windows overlap")
    return windows


def integrate_peaks(
    h: CoincidenceHistogram,
    centers,
    halfwidth: int = DEFAULT_HALFWIDTH_PS,
    baseline: str = "median",
) -> PeakCounts:
    """Sum the three peak windows and estimate accidentals per window.

    ``centers`` are the (-dT, 0, +dT) peak positions in ps. Accidentals are
    the per-bin baseline of all out-of-window bins times the window size.
    """
    if len(centers) != 3:
        raise ValueError("expected three peak centers")
    windows = peak_windows(h, centers, halfwidth)
    sums = [int(h.counts[s:e].sum()) for s, e in windows]
    outside = np.ones(h.nbins, dtype=bool)
    for s, e in windows:
        outside[s:e] = False
    rest = h.counts[outside]
    if rest.size == 0:
        raise ValueError("no out-of-window bins left for the baseline")
    if baseline == "median":
        per_bin = float(np.median(rest))
    elif baseline == "mean":
        per_bin = float(rest.mean())
    else:
        raise ValueError(f"unknown baseline estimator {baseline!r}")
    nwin = windows[0][1] - windows[0][0]
    return PeakCounts(sums[0], sums[1], sums[2], per_bin * nwin, int(halfwidth), nwin)


def snr(p: PeakCounts) -> float:
    """``2 (C_LS + C_SL) / C_A``; ``inf`` when there are no accidentals."""
    if p.c_accidental == 0:
        log.warning("no accidental counts: SNR unbounded")
        return math.inf
    return 2.0 * (p.c_ls + p.c_sl) / p.c_accidental


def snr_unbounded(p: PeakCounts) -> bool:
    return p.c_accidental == 0


def snr_sigma(p: PeakCounts) -> float:
    """Poisson error on the SNR."""
    for name in ("c_ls", "c_sl", "c_accidental"):
        if getattr(p, name) <= 0:
            raise ValueError(f"snr_sigma needs positive counts; {name} = {getattr(p, name)}")
    side = p.c_ls + p.c_sl
    # sigma_X = sqrt(X) for every count
    rel = (p.c_ls + p.c_sl) / side**2 + 1.0 / p.c_accidental
    return snr(p) * math.sqrt(rel)


def accidental_rate_per_bin(rate_a: float, rate_b: float, duration_s: float, bin_width_ps: float) -> float:
    """Expected uncorrelated coincidences per bin, ``r1 r2 T dt``."""
    return rate_a * rate_b * duration_s * bin_width_ps * 1e-12
