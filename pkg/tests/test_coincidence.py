from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fransonsim import coincidence as co
from fransonsim import source
from oracles import brute_histogram

sorted_tags = st.lists(st.integers(0, 20_000), max_size=300).map(sorted)


def test_single_coincidence_at_zero():
    h = co.build_histogram([1000], [1000], 75, co.aligned_range(0, 75, 3, 3))
    assert h.counts.sum() == 1
    assert h.counts[h.bin_index(0)] == 1
    assert h.bin_centers[h.bin_index(0)] == 0


@settings(max_examples=150, deadline=None)
@given(a=sorted_tags, b=sorted_tags, bw=st.integers(1, 200), lo=st.integers(-3000, 0), n=st.integers(1, 60))
def test_histogram_matches_brute_force(a, b, bw, lo, n):
    h = co.build_histogram(a, b, bw, (lo, lo + n * bw))
    assert np.array_equal(h.counts, brute_histogram(a, b, lo, bw, n))
    assert h.nbins == n


@settings(max_examples=60, deadline=None)
@given(a=sorted_tags, b=sorted_tags, bw=st.integers(1, 100), n=st.integers(1, 40))
def test_histogram_swap_reflection(a, b, bw, n):
    lo = -(n * bw) // 2
    h = co.build_histogram(a, b, bw, (lo, lo + n * bw))
    # swapping the streams maps t to -t; use a unit-width histogram to compare exactly
    h1 = co.build_histogram(a, b, 1, (lo, lo + n * bw))
    h2 = co.build_histogram(b, a, 1, (-(lo + n * bw) + 1, -lo + 1))
    assert np.array_equal(h1.counts, h2.counts[::-1])
    assert h.counts.sum() == h1.counts.sum()


def test_histogram_input_validation():
    with pytest.raises(ValueError):
        co.build_histogram([5, 1], [1], 75, (0, 750))
    with pytest.raises(ValueError):
        co.build_histogram([1], [1], 0, (0, 750))
    with pytest.raises(ValueError):
        co.build_histogram([1], [1], 75, (0, 700))
    with pytest.raises(ValueError):
        co.CoincidenceHistogram(75, 0, 750, np.zeros(9))


def test_accidentals_law_flat():
    rng = np.random.default_rng(4)
    r1, r2, t = 2e5, 3e5, 2.0
    dur = int(t * source.PS_PER_S)
    a = source.poisson_times(r1, dur, rng)
    b = source.poisson_times(r2, dur, rng)
    h = co.build_histogram(a, b, 75, co.aligned_range(0, 75, 66, 66))
    expect = co.accidental_rate_per_bin(len(a) / t, len(b) / t, t, 75)
    assert abs(h.counts.mean() - expect) < 5 * math.sqrt(expect / h.nbins)
    assert stats.chisquare(h.counts).pvalue > 0.01


def test_bin_alignment_places_peaks_at_centres():
    lo, hi = co.franson_range(3500, 670, 75, 1500)
    h = co.CoincidenceHistogram(75, lo, hi, np.zeros((hi - lo) // 75, dtype=np.int64))
    assert h.bin_centers[h.bin_index(3500)] == 3500
    for c in (2830, 4170):
        k = h.bin_index(c)
        assert lo + k * 75 <= c < lo + (k + 1) * 75


def _hist(values):
    values = np.asarray(values)
    return co.CoincidenceHistogram(75, 0, 75 * values.size, values)


def test_integrate_delta_peak_zero_baseline():
    v = np.zeros(60, dtype=np.int64)
    v[30] = 17
    p = co.integrate_peaks(_hist(v), [75 * 10 + 37, 75 * 30 + 37, 75 * 50 + 37], 150)
    assert (p.c_ls, p.c_center, p.c_sl, p.c_accidental) == (0, 17, 0, 0.0)


def test_integrate_flat_histogram():
    p = co.integrate_peaks(_hist(np.full(60, 7)), [787, 2287, 3787], 150)
    assert p.window_bins == 5
    assert (p.c_ls, p.c_center, p.c_sl) == (35, 35, 35)
    assert p.c_accidental == 35.0
    q = co.integrate_peaks(_hist(np.full(60, 7)), [787, 2287, 3787], 150, baseline="mean")
    assert q.c_accidental == 35.0


def test_integrate_rejects_overlap_and_out_of_range():
    h = _hist(np.ones(60, dtype=np.int64))
    with pytest.raises(ValueError, match="overlap"):
        co.integrate_peaks(h, [1000, 1100, 3000], 150)
    with pytest.raises(ValueError):
        co.integrate_peaks(h, [10, 2000, 3000], 150)
    with pytest.raises(ValueError):
        co.integrate_peaks(h, [1000, 2000, 3000], 150, baseline="mode")


def test_snr_values():
    assert co.snr(co.PeakCounts(50, 0, 50, 4.0, 150)) == 50
    assert co.snr(co.PeakCounts(0, 0, 0, 4.0, 150)) == 0
    p = co.PeakCounts(200, 0, 200, 8.0, 150)
    assert co.snr(p) == 100
    assert co.snr_sigma(p) == pytest.approx(100 * math.sqrt(400 / 160000 + 1 / 8))
    assert co.snr_sigma(p) == pytest.approx(35.7, abs=0.05)


def test_snr_zero_accidentals_is_flagged(caplog):
    p = co.PeakCounts(5, 3, 5, 0.0, 150)
    assert co.snr(p) == math.inf
    assert co.snr_unbounded(p)
    assert "unbounded" in caplog.text


def test_snr_sigma_scaling_and_errors():
    p = co.PeakCounts(200, 0, 300, 10.0, 150)
    q = co.PeakCounts(20000, 0, 30000, 1000.0, 150)
    assert co.snr_sigma(q) / co.snr(q) == pytest.approx(co.snr_sigma(p) / co.snr(p) / 10)
    with pytest.raises(ValueError, match="c_ls"):
        co.snr_sigma(co.PeakCounts(0, 0, 3, 1.0, 150))
    with pytest.raises(ValueError, match="c_accidental"):
        co.snr_sigma(co.PeakCounts(2, 0, 3, 0.0, 150))


def test_snr_sigma_against_poisson_resampling():
    rng = np.random.default_rng(5)
    mu_side, mu_acc = 2500.0, 100.0
    draws = []
    for _ in range(100):
        p = co.PeakCounts(int(rng.poisson(mu_side)), 0, int(rng.poisson(mu_side)), float(rng.poisson(mu_acc)), 150)
        draws.append(co.snr(p))
    formula = co.snr_sigma(co.PeakCounts(int(mu_side), 0, int(mu_side), mu_acc, 150))
    assert np.std(draws, ddof=1) == pytest.approx(formula, rel=0.30)


def test_peak_counts_validation_and_add():
    with pytest.raises(ValueError):
        co.PeakCounts(-1, 0, 0, 0.0, 150)
    a = _hist(np.ones(4, dtype=np.int64))
    assert (a + a).counts.tolist() == [2, 2, 2, 2]
    with pytest.raises(ValueError):
        a + co.CoincidenceHistogram(75, 75, 375, np.ones(4))
