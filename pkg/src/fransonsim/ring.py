"""Deterministic optical model of the microring source.

All-pass transmission, resonance comb, linewidth and coherence time, and the
resonant pair-generation rate law ``R = k * Q**3 * P**2 / radius**2``.

Units: lengths of the ring in micrometres, wavelengths in nanometres, powers
in milliwatts, rates in Hz, times in picoseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

C_M_PER_S = 299_792_458.0

# rate law anchor: 5.8 MHz internal pair rate at 1 mW coupled pump
ANCHOR_RATE_HZ = 5.8e6
ANCHOR_POWER_MW = 1.0
DEFAULT_Q = 15000.0
DEFAULT_RADIUS_UM = 10.0
DEFAULT_RATE_CONSTANT = ANCHOR_RATE_HZ * DEFAULT_RADIUS_UM**2 / (DEFAULT_Q**3 * ANCHOR_POWER_MW**2)

VALIDITY_WINDOW_NM = 100.0
# generation bandwidth limited by waveguide dispersion
GENERATION_BANDWIDTH_NM = 80.0


def _coupling_for(q_factor: float, center_wavelength: float, fsr: float, on_resonance: float) -> tuple[float, float]:
    """Solve (self_coupling, round_trip_amplitude) for a loaded Q and dip depth.

    Returns the under-coupled solution (self_coupling > round_trip_amplitude).
    """
    fwhm = center_wavelength / q_factor
    dtheta = 2.0 * math.pi * fwhm / fsr
    # FWHM in round-trip phase: dtheta = 2 (1 - x) / sqrt(x), x = a*t
    h = dtheta / 2.0
    s = (-h + math.sqrt(h * h + 4.0)) / 2.0
    x = s * s
    # on-resonance transmission (t - a)^2 / (1 - a t)^2
    diff = math.sqrt(on_resonance) * (1.0 - x)
    # t - a = diff, t * a = x
    t = (diff + math.sqrt(diff * diff + 4.0 * x)) / 2.0
    a = x / t
    return t, a


@dataclass(frozen=True)
class RingSpec:
    """Geometry and optics of an all-pass microring.

    The default coupling pair gives a loaded Q of 15000 and 4% on-resonance
    transmission (slightly under-coupled).

    ``rate_constant`` is the calibration ``k`` in ``R = k Q^3 P^2 / radius^2``
    (Hz um^2 mW^-2).
    """

    radius: float = DEFAULT_RADIUS_UM
    q_factor: float = DEFAULT_Q
    center_wavelength: float = 1550.0
    fsr: float = 9.0
    self_coupling: float = 0.98568
    round_trip_amplitude: float = 0.97859
    rate_constant: float = DEFAULT_RATE_CONSTANT

    def __post_init__(self) -> None:
        if not 0.0 <= self.self_coupling <= 1.0:
            raise ValueError(f"self_coupling must be in [0, 1], got {self.self_coupling}")
        if not 0.0 < self.round_trip_amplitude <= 1.0:
            raise ValueError(f"round_trip_amplitude must be in (0, 1], got {self.round_trip_amplitude}")
        if self.q_factor <= 0:
            raise ValueError(f"q_factor must be positive, got {self.q_factor}")
        if self.fsr <= 0:
            raise ValueError(f"fsr must be positive, got {self.fsr}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.center_wavelength <= 0:
            raise ValueError(f"center_wavelength must be positive, got {self.center_wavelength}")
        if self.rate_constant < 0:
            raise ValueError(f"rate_constant must be non-negative, got {self.rate_constant}")

    @classmethod
    def from_q_factor(
        cls,
        q_factor: float = DEFAULT_Q,
        *,
        on_resonance_transmission: float = 0.04,
        radius: float = DEFAULT_RADIUS_UM,
        center_wavelength: float = 1550.0,
        fsr: float = 9.0,
        rate_constant: float | None = None,
    ) -> RingSpec:
        """Build a spec whose coupling reproduces the given Q and dip depth."""
        t, a = _coupling_for(q_factor, center_wavelength, fsr, on_resonance_transmission)
        if rate_constant is None:
            rate_constant = calibrate_rate_constant(q_factor, radius)
        return cls(
            radius=radius,
            q_factor=q_factor,
            center_wavelength=center_wavelength,
            fsr=fsr,
            self_coupling=t,
            round_trip_amplitude=a,
            rate_constant=rate_constant,
        )

    @property
    def loaded_q(self) -> float:
        """Q implied by the coupling coefficients, for cross-checking ``q_factor``."""
        x = self.self_coupling * self.round_trip_amplitude
        dtheta = 2.0 * (1.0 - x) / math.sqrt(x)
        return self.center_wavelength / (self.fsr * dtheta / (2.0 * math.pi))


@dataclass(frozen=True)
class ResonanceTriple:
    pump_wavelength: float
    signal_wavelength: float
    idler_wavelength: float

    def __post_init__(self) -> None:
        if energy_mismatch(self.pump_wavelength, self.signal_wavelength, self.idler_wavelength) >= 1e-3:
            raise ValueError("signal/idler/pump wavelengths violate energy conservation")


def energy_mismatch(pump: float, signal: float, idler: float) -> float:
    """Relative violation of 2/lp = 1/ls + 1/li."""
    two_p = 2.0 / pump
    return abs(two_p - 1.0 / signal - 1.0 / idler) / two_p


def calibrate_rate_constant(
    q_factor: float = DEFAULT_Q,
    radius: float = DEFAULT_RADIUS_UM,
    rate_hz: float = ANCHOR_RATE_HZ,
    power_mw: float = ANCHOR_POWER_MW,
) -> float:
    """Rate constant that makes ``pair_generation_rate(power_mw) == rate_hz``."""
    return rate_hz * radius**2 / (q_factor**3 * power_mw**2)


def round_trip_phase(spec: RingSpec, wavelength):
    """Round-trip phase in radians; zero (mod 2pi) on every comb resonance."""
    return 2.0 * np.pi * (np.asarray(wavelength, dtype=float) - spec.center_wavelength) / spec.fsr


def transmission(spec: RingSpec, wavelength):
    """Power transmission of the all-pass ring at ``wavelength`` (nm).

    Accepts scalars or arrays. Wavelengths must be positive and within
    100 nm of the comb center.
    """
    wl = np.asarray(wavelength, dtype=float)
    if np.any(wl <= 0):
        raise ValueError("wavelength must be positive")
    if np.any(np.abs(wl - spec.center_wavelength) > VALIDITY_WINDOW_NM):
        raise ValueError(f"wavelength outside +/-{VALIDITY_WINDOW_NM} nm model window")
    a = spec.round_trip_amplitude
    t = spec.self_coupling
    cos_t = np.cos(round_trip_phase(spec, wl))
    num = a * a - 2.0 * a * t * cos_t + t * t
    den = 1.0 - 2.0 * a * t * cos_t + (a * t) ** 2
    out = np.clip(num / den, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def resonance_comb(spec: RingSpec, count: int) -> list[float]:
    """``count`` resonance wavelengths centered on the pump resonance.

    Even counts put the extra line on the red side. Lines further than half the
    generation bandwidth from the center are dropped.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lo = -((count - 1) // 2)
    comb = [spec.center_wavelength + k * spec.fsr for k in range(lo, lo + count)]
    half = GENERATION_BANDWIDTH_NM / 2.0
    return [wl for wl in comb if abs(wl - spec.center_wavelength) <= half + 1e-9]


def idler_for(pump_wavelength: float, signal_wavelength: float) -> float:
    """Idler wavelength fixed by energy conservation."""
    inv = 2.0 / pump_wavelength - 1.0 / signal_wavelength
    if inv <= 0:
        raise ValueError("no physical idler for this pump/signal pair")
    return 1.0 / inv


def resonance_triple(spec: RingSpec, order: int = 2) -> ResonanceTriple:
    """Pump at the center, signal ``order`` lines to the blue, idler adjusted."""
    if order < 1:
        raise ValueError("order must be >= 1")
    signal = spec.center_wavelength - order * spec.fsr
    return ResonanceTriple(spec.center_wavelength, signal, idler_for(spec.center_wavelength, signal))


def pair_generation_rate(spec: RingSpec, pump_power: float) -> float:
    """Internal pair rate in Hz for a coupled pump power in mW."""
    if pump_power < 0:
        raise ValueError(f"pump_power must be >= 0, got {pump_power}")
    return spec.rate_constant * spec.q_factor**3 * pump_power**2 / spec.radius**2


def linewidth_hz(spec: RingSpec) -> float:
    return C_M_PER_S / (spec.center_wavelength * 1e-9) / spec.q_factor


def linewidth_nm(spec: RingSpec) -> float:
    return spec.center_wavelength / spec.q_factor


def coherence_time(spec: RingSpec) -> float:
    """Photon coherence time in ps, ``1 / (2 pi dnu)`` with ``dnu = nu / Q``."""
    return 1e12 / (2.0 * math.pi * linewidth_hz(spec))


def bandwidth_nm_from_hz(bandwidth_hz: float, wavelength_nm: float) -> float:
    wl = wavelength_nm * 1e-9
    return wl * wl * bandwidth_hz / C_M_PER_S * 1e9


def spectral_brightness(rate: float, bandwidth: float, pump_power: float) -> float:
    """Pair rate per nm of bandwidth per mW^2 of pump."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if pump_power <= 0:
        raise ValueError("pump_power must be positive")
    return rate / (bandwidth * pump_power**2)


def spectrum(spec: RingSpec, start: float, stop: float, points: int) -> tuple[np.ndarray, np.ndarray]:
    wl = np.linspace(start, stop, points)
    return wl, np.asarray(transmission(spec, wl))
