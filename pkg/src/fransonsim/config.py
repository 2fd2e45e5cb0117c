"""Experiment configuration: JSON schema, profiles and conversion to domain objects.

A config file is merged over a profile (``desk`` or ``paper``) and validated
strictly: unknown keys and out-of-range values are rejected with the dotted
path of the offending field. Field names carry their units.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import franson, ring, source, stabilization

SCHEMA_VERSION = 1
PROFILES = ("desk", "paper")
PORT_LOSS_DB = 10.0 * math.log10(2.0)


class ConfigError(ValueError):
    """Configuration failed validation; ``errors`` lists ``(path, message)``."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RingConfig(_Strict):
    radius_um: float = Field(10.0, gt=0)
    q_factor: float = Field(15000.0, gt=0)
    center_wavelength_nm: float = Field(1550.0, gt=0)
    fsr_nm: float = Field(9.0, gt=0)
    self_coupling: float = Field(0.98568, ge=0, le=1)
    round_trip_amplitude: float = Field(0.97859, gt=0, le=1)
    # null -> calibrated to 5.8 MHz at 1 mW for this Q and radius
    rate_constant: float | None = Field(None, ge=0)

    def to_spec(self) -> ring.RingSpec:
        k = self.rate_constant
        if k is None:
            k = ring.calibrate_rate_constant(self.q_factor, self.radius_um)
        return ring.RingSpec(
            radius=self.radius_um,
            q_factor=self.q_factor,
            center_wavelength=self.center_wavelength_nm,
            fsr=self.fsr_nm,
            self_coupling=self.self_coupling,
            round_trip_amplitude=self.round_trip_amplitude,
            rate_constant=k,
        )


class LossConfig(_Strict):
    source_out: float = Field(3.5, ge=0)
    splitter: float = Field(4.0, ge=0)
    filter: float = Field(3.5, ge=0)
    interferometer: float = Field(10.0, ge=PORT_LOSS_DB)
    detector_1: float = Field(10.0, ge=0)
    detector_2: float = Field(13.0, ge=0)

    def to_budget(self) -> source.LossBudget:
        return source.LossBudget(**self.model_dump())


class DetectorConfig(_Strict):
    dark_count_rate_hz: float = Field(100.0, ge=0)
    jitter_sigma_ps: float = Field(32.0, ge=0)
    dead_time_ps: float = Field(30_000.0, ge=0)


class InterferometerConfig(_Strict):
    delta_t_ps: float = Field(670.0, gt=0)
    theta_offset_rad: float = 0.0
    visibility_w: float = Field(0.95, ge=0, le=1)
    mask_signal: Literal["none", "short_blocked", "long_blocked"] = "none"
    mask_idler: Literal["none", "short_blocked", "long_blocked"] = "none"


class RegimeConfig(_Strict):
    tau_pump_ps: float = Field(5e6, gt=0)
    margin: float = Field(10.0, ge=1)


class HistogramConfig(_Strict):
    bin_width_ps: int = Field(75, gt=0)
    halfwidth_ps: int = Field(150, ge=0)
    margin_ps: int = Field(1500, gt=0)
    baseline: Literal["median", "mean"] = "median"


class FitConfig(_Strict):
    weighted: bool = True
    phase_sigma_deg: float = Field(0.0, ge=0)


class StabilizationConfig(_Strict):
    steps: int = Field(10_000, ge=100)
    random_walk_sigma_nm: float = Field(0.3, ge=0)
    slow_sine_amplitude_nm: float = Field(30.0, ge=0)
    slow_sine_period_steps: float = Field(2000.0, ge=0)
    kp: float = 0.45
    ki: float = 0.27
    kd: float = 0.0
    integral_limit_nm_steps: float = Field(25_000.0, gt=0)
    pixels: int = Field(1024, ge=64)
    n_fringes: float = Field(3.0, gt=0.5)
    fringe_amplitude_counts: float = Field(1000.0, ge=0)
    fringe_background_counts: float = Field(200.0, ge=0)
    camera_noise_counts: float = Field(20.0, ge=0)
    reference_wavelength_nm: float = Field(632.8, gt=0)
    piezo_resolution_nm: float = Field(0.8, ge=0)
    piezo_range_nm: float = Field(15_000.0, gt=0)
    setpoint_nm: float = 0.0
    settle_steps: int = Field(100, ge=0)

    def drift(self) -> stabilization.DriftModel:
        return stabilization.DriftModel(self.random_walk_sigma_nm, self.slow_sine_amplitude_nm, self.slow_sine_period_steps)

    def gains(self) -> stabilization.PIDGains:
        return stabilization.PIDGains(self.kp, self.ki, self.kd, self.integral_limit_nm_steps)

    def fringe(self) -> stabilization.FringeSpec:
        return stabilization.FringeSpec(
            self.pixels,
            self.n_fringes,
            self.fringe_amplitude_counts,
            self.fringe_background_counts,
            self.camera_noise_counts,
            self.reference_wavelength_nm,
        )

    def piezo(self) -> stabilization.PiezoState:
        return stabilization.PiezoState(0.0, self.piezo_resolution_nm, self.piezo_range_nm)


class ExperimentConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    profile: Literal["desk", "paper"] = "desk"
    ring: RingConfig = RingConfig()
    losses_db: LossConfig = LossConfig()
    detectors: tuple[DetectorConfig, DetectorConfig] = (DetectorConfig(), DetectorConfig())
    interferometers: InterferometerConfig = InterferometerConfig()
    regime: RegimeConfig = RegimeConfig()
    pump_power_mw: float = Field(1.5, ge=0)
    integration_time_s: float = Field(120.0, gt=0)
    phase_grid_rad: list[float] = Field(default_factory=lambda: [2 * math.pi * k / 16 for k in range(16)])
    # detected uncorrelated clicks per channel at 1 mW; scales as pump^exponent
    background_rates_hz: tuple[float, float] = (0.0, 0.0)
    background_power_exponent: float = Field(1.0, ge=0)
    channel_offset_ps: int = 3500
    histogram: HistogramConfig = HistogramConfig()
    fit: FitConfig = FitConfig()
    stabilization: StabilizationConfig = StabilizationConfig()
    power_grid_mw: list[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 1.5, 2.0])
    # power scans stretch integration by (reference / P)^2 below this power; null keeps it fixed
    power_scan_reference_mw: float | None = Field(None, gt=0)
    master_seed: int = Field(20150101, ge=0, lt=2**64)

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; expected {SCHEMA_VERSION}")
        return v

    @field_validator("background_rates_hz")
    @classmethod
    def _bg(cls, v):
        if min(v) < 0:
            raise ValueError("background rates must be >= 0")
        return v

    @field_validator("power_grid_mw")
    @classmethod
    def _powers(cls, v):
        if any(p < 0 for p in v):
            raise ValueError("pump powers must be >= 0")
        return v

    @model_validator(mode="after")
    def _phase_grid(self):
        if not self.phase_grid_rad:
            raise ValueError("phase_grid_rad must not be empty")
        return self

    # domain objects -----------------------------------------------------

    def ring_spec(self) -> ring.RingSpec:
        return self.ring.to_spec()

    def loss_budget(self) -> source.LossBudget:
        return self.losses_db.to_budget()

    def detector_specs(self) -> tuple[source.DetectorSpec, source.DetectorSpec]:
        budget = self.loss_budget()
        effs = (source.db_to_transmission(budget.detector_1), source.db_to_transmission(budget.detector_2))
        return tuple(
            source.DetectorSpec(eff, d.dark_count_rate_hz, d.jitter_sigma_ps, d.dead_time_ps)
            for eff, d in zip(effs, self.detectors)
        )

    def interferometer_pair(self, phase_sum: float = 0.0) -> franson.InterferometerPair:
        ic = self.interferometers
        return franson.InterferometerPair(
            delta_t=ic.delta_t_ps,
            phase_signal=phase_sum,
            phase_idler=0.0,
            theta_offset=ic.theta_offset_rad,
            visibility=ic.visibility_w,
            mask_signal=ic.mask_signal,
            mask_idler=ic.mask_idler,
        )

    def franson_regime(self) -> franson.FransonRegime:
        return franson.FransonRegime(
            tau_c=ring.coherence_time(self.ring_spec()),
            delta_t=self.interferometers.delta_t_ps,
            tau_pump=self.regime.tau_pump_ps,
        )

    def background_rates(self, pump_power_mw: float | None = None) -> tuple[float, float]:
        p = self.pump_power_mw if pump_power_mw is None else pump_power_mw
        scale = p**self.background_power_exponent if p > 0 else 0.0
        return (self.background_rates_hz[0] * scale, self.background_rates_hz[1] * scale)

    def survival(self) -> tuple[float, float]:
        """Per-photon transmission to a click, excluding the interferometer port split."""
        b = self.loss_budget()
        return (
            source.db_to_transmission(b.total_signal - PORT_LOSS_DB),
            source.db_to_transmission(b.total_idler - PORT_LOSS_DB),
        )

    def scan_integration_time(self, pump_power_mw: float) -> float:
        ref = self.power_scan_reference_mw
        if ref is None or pump_power_mw <= 0 or pump_power_mw >= ref:
            return self.integration_time_s
        return self.integration_time_s * (ref / pump_power_mw) ** 2

    def with_updates(self, **changes) -> ExperimentConfig:
        data = self.model_dump(mode="json")
        data.update(changes)
        return validate_config(data)

    def to_json(self) -> str:
        return canonical_json(self.model_dump(mode="json"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def profile_defaults(profile: str) -> dict:
    if profile not in PROFILES:
        raise ConfigError([("profile", f"unknown profile {profile!r}; expected one of {PROFILES}")])
    text = resources.files("fransonsim").joinpath("profiles", f"{profile}.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = []
        for err in exc.errors():
            path = ".".join(str(p) for p in err["loc"]) or "<root>"
            errors.append((path, err["msg"]))
        raise ConfigError(errors) from None


def load_config(path=None, profile: str | None = None, **overrides) -> ExperimentConfig:
    """Load a JSON config merged over a profile.

    The profile comes from the ``profile`` argument, else the file's
    ``profile`` key, else ``desk``. ``overrides`` are applied last.
    """
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError([(f"{path}:{exc.lineno}:{exc.colno}", exc.msg)]) from None
        if not isinstance(data, dict):
            raise ConfigError([("<root>", "config must be a JSON object")])
    name = profile or data.get("profile") or "desk"
    merged = _merge(profile_defaults(name), data)
    merged["profile"] = name
    merged = _merge(merged, {k: v for k, v in overrides.items() if v is not None})
    return validate_config(merged)
