from __future__ import annotations

import math

import numpy as np
import pytest

from fransonsim import stabilization as st
from fransonsim.stabilization import DriftModel, FringeSpec, PIDGains, PIDState, PiezoState

QUIET = FringeSpec(noise_sigma=0.0)


def test_synth_frame_basics():
    f = st.synth_frame(QUIET, 0.0)
    assert f[0] == pytest.approx(QUIET.background + QUIET.amplitude)
    spectrum = np.abs(np.fft.rfft(f - f.mean()))
    assert int(np.argmax(spectrum)) == 3
    g = st.synth_frame(QUIET, math.pi)
    assert np.corrcoef(f, g)[0, 1] < -0.99
    with pytest.raises(ValueError):
        st.synth_frame(FringeSpec(), 0.0)


@pytest.mark.parametrize("phi", [0.0, 0.1, 1.0, 3.0, 6.2])
@pytest.mark.parametrize("method", ["demod", "lstsq"])
def test_phase_round_trip(phi, method):
    est = st.estimate_phase(st.synth_frame(QUIET, phi), QUIET, method)
    assert est == pytest.approx(phi, abs=1e-6)
    assert st.estimate_phase(st.synth_frame(QUIET, phi + 2 * math.pi), QUIET, method) == pytest.approx(est, abs=1e-9)


def test_phase_noise_and_estimator_agreement():
    spec = FringeSpec(amplitude=1000.0, noise_sigma=20.0)
    rng = np.random.default_rng(0)
    errs, gaps = [], []
    for _ in range(1000):
        phi = rng.uniform(0, 2 * math.pi)
        frame = st.synth_frame(spec, phi, rng)
        a = st.estimate_phase(frame, spec, "demod")
        b = st.estimate_phase(frame, spec, "lstsq")
        errs.append((a - phi + math.pi) % (2 * math.pi) - math.pi)
        gaps.append(abs((a - b + math.pi) % (2 * math.pi) - math.pi))
    assert math.degrees(np.std(errs)) < 0.5
    assert math.degrees(max(gaps)) < 0.1


def test_low_confidence():
    spec = FringeSpec(amplitude=0.5, noise_sigma=50.0)
    with pytest.raises(st.LowConfidenceError):
        st.estimate_phase(st.synth_frame(spec, 0.3, np.random.default_rng(1)), spec)
    with pytest.raises(ValueError):
        st.estimate_phase(np.zeros(10), QUIET)
    with pytest.raises(ValueError):
        st.estimate_phase(st.synth_frame(QUIET, 0.0), QUIET, "fft")


def test_spec_validation():
    with pytest.raises(ValueError):
        FringeSpec(pixels=32)
    with pytest.raises(ValueError):
        FringeSpec(n_fringes=0.4)
    with pytest.raises(ValueError):
        DriftModel(random_walk_sigma=-1)
    with pytest.raises(ValueError):
        PiezoState(position=2e4, range=1e4)
    with pytest.raises(ValueError):
        PIDGains(kp=math.inf)


def test_pid_step_behaviour():
    g = PIDGains(kp=0.0, ki=0.5, kd=0.0, integral_limit=100.0)
    assert st.pid_step(PIDState(), 0.0, PIDGains()) == 0.0
    s = PIDState()
    e = 2 * math.pi * 10 / 775  # 10 nm
    out = [st.pid_step(s, e, g) for _ in range(15)]
    assert np.allclose(np.diff(out[:9]), 5.0)
    assert out[-1] == pytest.approx(50.0)  # clamp at 100 nm*steps


def test_unit_conversions():
    assert st.rad_to_nm(2 * math.pi) == pytest.approx(775.0)
    assert float(st.nm_to_deg(0.8)) == pytest.approx(0.372, abs=5e-4)
    assert QUIET.reference_period_nm == pytest.approx(316.4)


def test_piezo_quantisation_and_saturation():
    p = PiezoState(resolution=0.8, range=100.0)
    assert not p.move_to(1.3)
    assert p.position == pytest.approx(1.6)
    assert p.move_to(150.0)
    assert abs(p.position) <= 100.0


def test_zero_drift_zero_noise_bounded_by_resolution():
    tr = st.run_closed_loop(DriftModel(0, 0, 0), 500, PIDGains(), 0, fringe=QUIET, initial_offset_nm=3.3)
    assert np.max(np.abs(tr.residual_nm[50:])) <= 0.8


def test_step_disturbance_settles():
    tr = st.run_closed_loop(DriftModel(0, 0, 0), 200, PIDGains(), 0, initial_offset_nm=10.0)
    assert np.all(np.abs(tr.residual_nm[50:]) < 1.0)
    first = int(np.argmax(np.abs(tr.residual_nm) < 1.0))
    assert first <= 50


def test_open_loop_variance_grows_linearly():
    drift = DriftModel(0.3, 0.0, 0.0)
    steps = np.array([250, 500, 1000, 2000])
    finals = np.array(
        [[st.run_closed_loop(drift, 2000, PIDGains(), s, feedback=False).residual_nm[k - 1] for k in steps] for s in range(300)]
    )
    var = finals.var(axis=0)
    slope = np.polyfit(steps, var, 1)[0]
    assert slope == pytest.approx(0.09, rel=0.25)
    assert np.allclose(var / steps, 0.09, rtol=0.3)


def test_closed_loop_beats_open_loop():
    for drift in (DriftModel(), DriftModel(0.5, 0.0, 0.0), DriftModel(0.0, 50.0, 500.0)):
        closed = st.run_closed_loop(drift, 1000, PIDGains(), 5).summary(100)
        open_ = st.run_closed_loop(drift, 1000, PIDGains(), 5, feedback=False).summary(100)
        assert closed["rms_nm"] <= open_["rms_nm"]


def test_default_loop_performance():
    tr = st.run_closed_loop(DriftModel(), 10_000, PIDGains(), 2015)
    s = tr.summary(100)
    assert s["rms_nm"] <= 1.0
    assert s["rms_deg"] <= 0.5
    assert s["rms_deg"] <= 0.4
    assert s["saturation_count"] == 0


def test_saturation_is_flagged():
    tr = st.run_closed_loop(DriftModel(0, 0, 0), 100, PIDGains(), 0, piezo=PiezoState(range=5.0), initial_offset_nm=30.0)
    assert tr.saturated.any()
    with pytest.raises(ValueError):
        st.run_closed_loop(DriftModel(), 50, PIDGains(), 0)
