"""Closed-loop phase stabilization of one unbalanced interferometer.

A tilted reference beam (He:Ne) produces a few spatial fringes on a line
camera. Their phase tracks the arm-length difference, which a PID loop holds
at a setpoint by moving a quantized piezo against a drifting plant.

Displacement conventions: a mirror displacement of ``lambda / 2`` advances a
fringe by one period, so the reference period is 316.4 nm and the period seen
by the 1550 nm photons is ``IR_PERIOD_NM`` = 775 nm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

IR_PERIOD_NM = 775.0
TWO_PI = 2.0 * math.pi


class LowConfidenceError(RuntimeError):
    """Fringe amplitude too small compared to the camera noise."""


@dataclass(frozen=True)
class FringeSpec:
    pixels: int = 1024
    n_fringes: float = 3.0
    amplitude: float = 1000.0
    background: float = 200.0
    noise_sigma: float = 20.0
    reference_wavelength: float = 632.8

    def __post_init__(self) -> None:
        if self.pixels < 64:
            raise ValueError("pixels must be >= 64")
        if self.n_fringes <= 0.5:
            raise ValueError("n_fringes must exceed 0.5")
        if self.amplitude < 0 or self.background < 0:
            raise ValueError("amplitude and background must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def reference_period_nm(self) -> float:
        return self.reference_wavelength / 2.0


@dataclass
class PiezoState:
    position: float = 0.0
    resolution: float = 0.8
    range: float = 15_000.0

    def __post_init__(self) -> None:
        if abs(self.position) > self.range:
            raise ValueError("piezo position outside its range")

    def move_to(self, target: float) -> bool:
        """Quantize and clamp; returns True when the command saturated."""
        saturated = abs(target) > self.range
        target = min(max(target, -self.range), self.range)
        if self.resolution > 0:
            target = round(target / self.resolution) * self.resolution
            # rounding may step just past the range edge
            if abs(target) > self.range:
                target -= math.copysign(self.resolution, target)
        self.position = target
        return saturated


@dataclass(frozen=True)
class DriftModel:
    random_walk_sigma: float = 0.3  # nm per sqrt(step)
    slow_sine_amplitude: float = 30.0  # nm
    slow_sine_period: float = 2000.0  # steps

    def __post_init__(self) -> None:
        if min(self.random_walk_sigma, self.slow_sine_amplitude, self.slow_sine_period) < 0:
            raise ValueError("drift parameters must be non-negative")

    def sample(self, steps: int, rng: np.random.Generator, initial: float = 0.0) -> np.ndarray:
        walk = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, self.random_walk_sigma, steps - 1))])
        k = np.arange(steps)
        sine = 0.0
        if self.slow_sine_amplitude > 0 and self.slow_sine_period > 0:
            sine = self.slow_sine_amplitude * np.sin(TWO_PI * k / self.slow_sine_period)
        return initial + walk + sine


@dataclass(frozen=True)
class PIDGains:
    """Gains act on the error in nm and return a piezo position in nm.

    Defaults are the Ziegler-Nichols PI rule for the one-step-delay plant
    ``x[k+1] = drift + u[k]``: ultimate gain 1 and period 2 steps give
    Kp = 0.45 Ku = 0.45 and Ti = Tu / 1.2, so Ki = 0.27 per step. The ZN
    PID rule (Kd = 0.15) is unstable on this sampled plant.
    """

    kp: float = 0.45
    ki: float = 0.27
    kd: float = 0.0
    integral_limit: float = 25_000.0  # nm * steps

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.kp, self.ki, self.kd, self.integral_limit)):
            raise ValueError("PID gains must be finite")


@dataclass
class PIDState:
    integral: float = 0.0
    previous_error: float | None = None


def rad_to_nm(phase: float, period_nm: float = IR_PERIOD_NM) -> float:
    return phase * period_nm / TWO_PI


def nm_to_deg(x_nm, period_nm: float = IR_PERIOD_NM):
    return np.asarray(x_nm) / period_nm * 360.0


def synth_frame(spec: FringeSpec, phase: float, rng=None) -> np.ndarray:
    """Line-camera intensity for a given fringe phase."""
    x = np.arange(spec.pixels)
    frame = spec.background + spec.amplitude * (1.0 + np.cos(TWO_PI * spec.n_fringes * x / spec.pixels + phase)) / 2.0
    if spec.noise_sigma > 0:
        if rng is None:
            raise ValueError("a random generator is required for a noisy frame")
        frame = frame + rng.normal(0.0, spec.noise_sigma, spec.pixels)
    return frame


def estimate_phase(frame, spec: FringeSpec, method: str = "demod", min_snr: float = 5.0) -> float:
    """Fringe phase in [0, 2pi).

    ``demod`` projects the mean-free frame onto the known spatial frequency
    (exact for a whole number of fringes); ``lstsq`` fits offset, cosine and
    sine terms jointly. Raises ``LowConfidenceError`` when the fitted fringe
    amplitude is below ``min_snr`` times its noise-limited uncertainty.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.size != spec.pixels:
        raise ValueError(f"frame has {frame.size} pixels, expected {spec.pixels}")
    n = spec.pixels
    k = TWO_PI * spec.n_fringes * np.arange(n) / n
    c, s = np.cos(k), np.sin(k)
    if method == "demod":
        dc = frame.mean()
        re = np.dot(frame - dc, c) * 2.0 / n
        im = -np.dot(frame - dc, s) * 2.0 / n
        fitted = dc + re * c - im * s
    elif method == "lstsq":
        basis = np.column_stack([np.ones(n), c, s])
        coef, *_ = np.linalg.lstsq(basis, frame, rcond=None)
        dc, re, im = coef[0], coef[1], -coef[2]
        fitted = basis @ coef
    else:
        raise ValueError(f"unknown phase estimator {method!r}")
    half_amp = math.hypot(re, im)
    noise = float(np.std(frame - fitted))
    if half_amp < min_snr * noise * math.sqrt(2.0 / n) or half_amp == 0.0:
        raise LowConfidenceError(f"fringe amplitude {2 * half_amp:.3g} is below the noise floor")
    phase = math.atan2(im, re) % TWO_PI
    # a tiny negative angle wraps to exactly 2pi in floating point
    return 0.0 if phase >= TWO_PI else phase


def pid_step(state: PIDState, error: float, gains: PIDGains) -> float:
    """One PID update. ``error`` is an IR phase in rad; returns a piezo position in nm."""
    e = rad_to_nm(error)
    state.integral = min(max(state.integral + e, -gains.integral_limit), gains.integral_limit)
    deriv = 0.0 if state.previous_error is None else e - state.previous_error
    state.previous_error = e
    return gains.kp * e + gains.ki * state.integral + gains.kd * deriv


@dataclass
class LoopTrace:
    step: np.ndarray
    drift_nm: np.ndarray
    actuation_nm: np.ndarray
    residual_nm: np.ndarray
    saturated: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def residual_deg(self) -> np.ndarray:
        return nm_to_deg(self.residual_nm)

    def summary(self, settle: int = 0) -> dict:
        r = self.residual_nm[settle:]
        return {
            "steps": int(self.step.size),
            "settle_steps": int(settle),
            "rms_nm": float(np.sqrt(np.mean(r**2))),
            "rms_deg": float(np.sqrt(np.mean(nm_to_deg(r) ** 2))),
            "max_abs_nm": float(np.max(np.abs(r))),
            "max_abs_deg": float(np.max(np.abs(nm_to_deg(r)))),
            "saturation_count": int(self.saturated.sum()),
        }


def run_closed_loop(
    drift: DriftModel,
    steps: int,
    gains: PIDGains,
    rng,
    *,
    fringe: FringeSpec | None = None,
    piezo: PiezoState | None = None,
    setpoint_nm: float = 0.0,
    initial_offset_nm: float = 0.0,
    feedback: bool = True,
    estimator: str = "demod",
) -> LoopTrace:
    """Simulate the camera + PID + piezo loop for ``steps`` control steps.

    Residual is the arm-length error relative to ``setpoint_nm``. The
    measured displacement is unwrapped step to step, so drift per step must
    stay well below a quarter of the reference period.
    """
    if steps < 100:
        raise ValueError("steps must be >= 100")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    fringe = fringe or FringeSpec()
    piezo = piezo or PiezoState()
    drift_nm = drift.sample(steps, rng, initial=initial_offset_nm)
    ref_period = fringe.reference_period_nm
    state = PIDState()

    actuation = np.zeros(steps)
    residual = np.zeros(steps)
    saturated = np.zeros(steps, dtype=bool)
    tracked = None
    last_phase = 0.0
    for k in range(steps):
        x = drift_nm[k] + piezo.position
        residual[k] = x - setpoint_nm
        actuation[k] = piezo.position
        if not feedback:
            continue
        phase = estimate_phase(synth_frame(fringe, TWO_PI * x / ref_period, rng), fringe, estimator)
        if tracked is None:
            # start from the branch nearest zero displacement
            tracked = (phase + math.pi) % TWO_PI - math.pi
            tracked *= ref_period / TWO_PI
        else:
            dphi = (phase - last_phase + math.pi) % TWO_PI - math.pi
            tracked += dphi * ref_period / TWO_PI
        last_phase = phase
        error_rad = TWO_PI * (setpoint_nm - tracked) / IR_PERIOD_NM
        command = pid_step(state, error_rad, gains)
        saturated[k] = piezo.move_to(command)
    return LoopTrace(
        step=np.arange(steps),
        drift_nm=drift_nm,
        actuation_nm=actuation,
        residual_nm=residual,
        saturated=saturated,
        meta={"feedback": feedback, "setpoint_nm": setpoint_nm},
    )
