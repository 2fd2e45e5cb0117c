"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
"acceptance criteria" section of the terminal summary.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from acceptance_log import record
from oracles import grid_search_fringe
from scipy import stats

from fransonsim import coincidence as co
from fransonsim import experiment as ex
from fransonsim import fitting, ring, source
from fransonsim import stabilization as st
from fransonsim.config import load_config
from fransonsim.fitting import FringeDataset, lm_fit

# reference measurements per pump power: P, sigma_P (mW), R, sigma_R (MHz), SNR, sigma_SNR, V_meas, sigma_V (%), Bell sigmas
TABLE = [
    (0.25, 0.025, 0.4, 0.11, 131.6, 16.5, 94.8, 3.8, 6.4),
    (0.5, 0.05, 1.7, 0.3, 120.4, 7.9, 88.2, 4.8, 3.6),
    (1.0, 0.1, 5.8, 0.8, 64.4, 3.3, 91.8, 1.9, 11.2),
    (1.5, 0.15, 14.0, 1.9, 45.1, 2.2, 89.3, 2.6, 7.1),
    (2.0, 0.2, 27.0, 3.1, 22.9, 1.0, 83.8, 3.2, 4.1),
]
W = 0.95


@pytest.fixture(scope="module")
def phase_scan():
    cfg = load_config(profile="desk")
    t0 = time.perf_counter()
    res = ex.run_phase_scan(cfg)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def power_scan():
    cfg = load_config(profile="desk")
    t0 = time.perf_counter()
    rep = ex.run_power_scan(cfg, [row[0] for row in TABLE])
    return rep, time.perf_counter() - t0


def test_criterion_01_fringe_law(phase_scan):
    res, elapsed = phase_scan
    f = res.fit
    v_pred = W * (res.snr - 1) / (res.snr + 1)
    z = abs(f.v_meas - v_pred) / f.sigma_v
    ratio = res.center_side_ratio()
    centre_max = max(p.peaks.c_center for p in res.points)
    ok = len(res.points) == 16 and z <= 3 and abs(ratio - 3.9) <= 0.3 and centre_max >= 300 and elapsed < 120
    record(
        1,
        "Franson fringe law",
        ok,
        f"V_meas={f.v_meas:.4f}+/-{f.sigma_v:.4f} vs {v_pred:.4f} ({z:.2f} sigma); "
        f"centre/side={ratio:.2f}; max centre counts={centre_max}; {elapsed:.1f} s",
    )
    assert ok


def test_criterion_02_table_bell_sigmas():
    got = [fitting.bell_sigmas(v / 100, s / 100) for *_, v, s, _ in TABLE]
    want = [row[-1] for row in TABLE]
    ok = all(abs(g - w) <= 0.15 for g, w in zip(got, want))
    record(2, "Bell-sigma column", ok, ", ".join(f"{g:.2f}/{w}" for g, w in zip(got, want)))
    assert ok


def test_criterion_03_snr_visibility_consistency():
    parts, ok = [], True
    for *_, s, ss, v, sv, _ in TABLE:
        vs = fitting.visibility_from_snr(s, W)
        dvs = 2 * W / (s + 1) ** 2 * ss
        z = abs(vs - v / 100) / math.hypot(dvs, sv / 100)
        ok &= z <= 2
        parts.append(f"{s}->{100 * vs:.1f}% vs {v}% ({z:.2f} sigma)")
    record(3, "SNR / visibility consistency", ok, "; ".join(parts))
    assert ok


def test_criterion_04_quadratic_scaling(power_scan):
    rep, elapsed = power_scan
    rates = [r.rate_hz / 1e6 for r in rep.rows]
    # a simulated rate matches a reference row when the quadratic curve through it
    # crosses the row's error box (pump power and rate error bars together)
    boxes = []
    for r, (p, sp, rt, srt, *_) in zip(rates, TABLE):
        lo, hi = r * ((p - sp) / p) ** 2, r * ((p + sp) / p) ** 2
        boxes.append(hi >= rt - srt and lo <= rt + srt)
    strict = [abs(r - rt) <= srt for r, (_, _, rt, srt, *_) in zip(rates, TABLE)]
    snr_1mw = rep.rows[2].snr
    ok = abs(rep.slope - 2.0) <= 0.05 and all(boxes) and elapsed < 300 and 50 <= snr_1mw <= 80
    record(
        4,
        "quadratic scaling",
        ok,
        f"slope={rep.slope:.3f}+/-{rep.slope_sigma:.3f}; rates MHz="
        + "/".join(f"{r:.2f}" for r in rates)
        + f"; error boxes {sum(boxes)}/5; rate-only bars {sum(strict)}/5; SNR(1 mW)={snr_1mw:.1f}; {elapsed:.1f} s",
    )
    assert ok


def test_criterion_04_rate_only_error_bars(power_scan):
    """Informational: the quadratic law anchored at 1 mW gives 23.2 MHz at 2 mW,
    outside the 27 +/- 3.1 MHz rate bar when the pump-power bar is ignored."""
    rep, _ = power_scan
    misses = [
        f"{p} mW: {r.rate_hz / 1e6:.2f} vs {rt}+/-{srt}"
        for r, (p, _, rt, srt, *_) in zip(rep.rows, TABLE)
        if abs(r.rate_hz / 1e6 - rt) > srt
    ]
    model_2mw = ring.pair_generation_rate(load_config(profile="desk").ring_spec(), 2.0) / 1e6
    assert misses == [f"2.0 mW: {rep.rows[4].rate_hz / 1e6:.2f} vs 27.0+/-3.1"]
    assert abs(model_2mw - 27.0) > 3.1


def test_criterion_05_histogram_geometry(phase_scan):
    res, _ = phase_scan
    h = res.summed_histogram
    centres = res.peak_centers_ps
    ok = tuple(centres) == (3500 - 670, 3500, 3500 + 670)
    details = []
    for c in centres:
        # the peak's nominal centre lies in its fullest bin and the centroid stays in that bin
        k = h.bin_index(c)
        sel = slice(k - 2, k + 3)
        centroid = float(np.sum(h.bin_centers[sel] * h.counts[sel]) / np.sum(h.counts[sel]))
        ok &= int(np.argmax(h.counts[sel])) == 2 and h.bin_index(centroid) == k
        details.append(f"{c}: bin centre {h.bin_centers[k]:.0f}, centroid {centroid:.1f}")
    record(5, "histogram geometry", ok, "; ".join(details))
    assert ok


def test_criterion_06_singles_flatness(phase_scan):
    res, _ = phase_scan
    pvals = [stats.chisquare(res.singles[:, ch]).pvalue for ch in range(2)]
    ok = min(pvals) > 0.01
    record(6, "singles flatness", ok, f"p(signal)={pvals[0]:.3f}, p(idler)={pvals[1]:.3f}")
    assert ok


def test_criterion_07_accidentals_law():
    rng = np.random.default_rng(7)
    t = 2.0
    dur = int(t * source.PS_PER_S)
    det = source.DetectorSpec(1.0, 0.0, 32.0, 30_000.0)
    a = source.detect(source.poisson_times(4e5, dur, rng), det, dur, rng).tags
    b = source.detect(source.poisson_times(3e5, dur, rng), det, dur, rng).tags
    h = co.build_histogram(a, b, 75, co.aligned_range(3500, 75, 40, 40))
    expect = co.accidental_rate_per_bin(len(a) / t, len(b) / t, t, 75)
    z = abs(h.counts.mean() - expect) / math.sqrt(expect / h.nbins)
    ok = z < 5
    record(7, "accidentals law", ok, f"mean/bin={h.counts.mean():.2f} vs {expect:.2f} ({z:.2f} sigma)")
    assert ok


def test_criterion_08_fit_oracle_and_coverage():
    rng = np.random.default_rng(8)
    gaps = []
    for _ in range(10):
        n = int(rng.integers(6, 14))
        phases = np.sort(rng.uniform(0, 2 * math.pi, n))
        truth = (rng.uniform(20, 80), rng.uniform(0, 2 * math.pi), rng.uniform(90, 150))
        d = FringeDataset(phases, rng.poisson(fitting.fringe_model(phases, *truth)))
        f = lm_fit(d)
        g_chi2, resolution = grid_search_fringe(d.phases, d.counts, d.sigmas)
        gaps.append((g_chi2 - f.chi2, resolution))
    oracle_ok = all(-1e-9 <= g <= r for g, r in gaps)

    phases = 2 * math.pi * np.arange(16) / 16
    truth = np.array([180.0, 2.0, 200.0])
    mean = fitting.fringe_model(phases, *truth)
    inside = 0
    for _ in range(100):
        f = lm_fit(FringeDataset(phases, rng.poisson(mean)))
        diff = f.params - truth
        diff[1] = (diff[1] + math.pi) % (2 * math.pi) - math.pi
        inside += bool(np.all(np.abs(diff) <= 3 * f.errors))
    ok = oracle_ok and inside >= 95
    record(8, "fit oracle equivalence", ok, f"grid oracle {sum(-1e-9 <= g <= r for g, r in gaps)}/10; coverage {inside}/100")
    assert ok


def test_criterion_09_stabilization():
    sc = load_config(profile="desk").stabilization
    t0 = time.perf_counter()
    trace = st.run_closed_loop(sc.drift(), 10_000, sc.gains(), 9, fringe=sc.fringe(), piezo=sc.piezo())
    elapsed = time.perf_counter() - t0
    s = trace.summary(sc.settle_steps)

    drift = st.DriftModel(0.3, 0.0, 0.0)
    marks = np.array([250, 500, 1000, 2000])
    finals = np.array(
        [st.run_closed_loop(drift, 2000, sc.gains(), k, feedback=False).residual_nm[marks - 1] for k in range(400)]
    )
    var = finals.var(axis=0)
    slope, _ = np.polyfit(marks, var, 1)
    linear = abs(slope / 0.09 - 1) < 0.25 and np.allclose(var / marks, 0.09, rtol=0.3)

    ok = s["rms_nm"] <= 1.0 and s["rms_deg"] <= 0.5 and linear and elapsed < 30
    record(
        9,
        "stabilization",
        ok,
        f"RMS {s['rms_nm']:.3f} nm / {s['rms_deg']:.3f} deg; open-loop var slope {slope:.4f} nm^2/step; {elapsed:.1f} s",
    )
    assert ok


def test_criterion_10_brightness():
    spec = load_config(profile="desk").ring_spec()
    b = ring.spectral_brightness(ring.pair_generation_rate(spec, 1.0), ring.linewidth_nm(spec), 1.0)
    ok = abs(b / 6e7 - 1) <= 0.2
    record(10, "spectral brightness", ok, f"{b:.3e} per nm mW^2 s")
    assert ok
