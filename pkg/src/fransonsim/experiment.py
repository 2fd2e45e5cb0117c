"""End-to-end runs: phase scans, power scans and their persisted artifacts.

Every simulated phase point draws from its own ``SeedSequence`` keyed by the
master seed and the point's position in the run, so points can run in any
order (or in parallel) and still give byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import coincidence as co
from . import fitting, franson, ring, source
from .config import ExperimentConfig, canonical_json

log = logging.getLogger(__name__)

SIGNAL_CHANNEL = 1
IDLER_CHANNEL = 2


class EmptyCoincidencesError(RuntimeError):
    """No coincidences in any peak window."""


class RegimeWarning(UserWarning):
    """The interferometers are outside tau_c << dT << tau_pump."""


@dataclass
class PointResult:
    phase: float
    peaks: co.PeakCounts
    histogram: co.CoincidenceHistogram
    singles: tuple[int, int]


@dataclass
class PhaseScanResult:
    config: ExperimentConfig
    mode: str  # "fringe" or "masked"
    points: list[PointResult]
    peak_centers_ps: tuple[int, int, int]
    total: co.PeakCounts
    snr: float
    snr_sigma: float
    dataset: fitting.FringeDataset | None = None
    fit: fitting.FringeFit | None = None
    v_expected: float = math.nan
    warnings: list[str] = field(default_factory=list)

    @property
    def phases(self) -> np.ndarray:
        return np.array([p.phase for p in self.points])

    @property
    def singles(self) -> np.ndarray:
        return np.array([p.singles for p in self.points], dtype=np.int64)

    @property
    def summed_histogram(self) -> co.CoincidenceHistogram:
        h = self.points[0].histogram
        for p in self.points[1:]:
            h = h + p.histogram
        return h

    def rate_estimate(self) -> tuple[float, float]:
        """Internal pair rate (Hz) traced back from the side peaks through the known losses."""
        if self.mode != "fringe":
            return math.nan, math.nan
        return estimate_pair_rate(self.config, self.total, self.singles, len(self.points))

    def center_side_ratio(self) -> float:
        """Accidental-subtracted centre / mean side peak at the fitted fringe maximum."""
        if self.fit is None:
            return math.nan
        n = len(self.points)
        acc = self.total.c_accidental / n
        side = (self.total.c_ls + self.total.c_sl) / (2 * n) - acc
        return (self.fit.y0 + self.fit.A - acc) / side

    def summary(self) -> dict:
        r, sr = self.rate_estimate()
        out = {
            "mode": self.mode,
            "pump_power_mw": self.config.pump_power_mw,
            "integration_time_s": self.config.integration_time_s,
            "n_points": len(self.points),
            "peak_centers_ps": list(self.peak_centers_ps),
            "peaks_total": self.total.to_dict(),
            "snr": _finite(self.snr),
            "snr_sigma": _finite(self.snr_sigma),
            "rate_internal_hz": _finite(r),
            "rate_internal_sigma_hz": _finite(sr),
            "rate_model_hz": ring.pair_generation_rate(self.config.ring_spec(), self.config.pump_power_mw),
            "v_expected_from_snr": _finite(self.v_expected),
            "warnings": list(self.warnings),
        }
        if self.fit is not None:
            out["fit"] = _clean(self.fit.to_dict())
            out["center_side_ratio"] = self.center_side_ratio()
        return out


def _finite(x: float):
    return None if x is None or not math.isfinite(x) else float(x)


def _clean(d: dict) -> dict:
    return {k: (_finite(v) if isinstance(v, float) else v) for k, v in d.items()}


def point_seed(master_seed: int, key: tuple[int, ...]) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))


def peak_centers(cfg: ExperimentConfig) -> tuple[int, int, int]:
    dt = int(round(cfg.interferometers.delta_t_ps))
    off = int(cfg.channel_offset_ps)
    return (off - dt, off, off + dt)


def histogram_range(cfg: ExperimentConfig) -> tuple[int, int]:
    h = cfg.histogram
    return co.franson_range(cfg.channel_offset_ps, int(round(cfg.interferometers.delta_t_ps)), h.bin_width_ps, h.margin_ps)


def open_fraction(mask: str) -> float:
    """Monitored-port throughput of a masked interferometer relative to an open one."""
    m = franson.path_marginal(mask)
    return float(m[franson.PATH_S] + m[franson.PATH_L]) / franson.PORT_FRACTION


def simulate_streams(
    cfg: ExperimentConfig, phase: float, seed, *, pump_power_mw: float | None = None
) -> tuple[source.TimeTagStream, source.TimeTagStream]:
    """Signal and idler click streams for one interferometer phase setting.

    All per-photon losses, detector efficiency included, are drawn before the
    interferometers (they commute with the routing); the detectors then add
    jitter, dark counts, background and dead time.
    """
    p = cfg.pump_power_mw if pump_power_mw is None else pump_power_mw
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_pairs, s_route, s_det1, s_det2 = ss.spawn(4)
    rate = ring.pair_generation_rate(cfg.ring_spec(), p)
    eta_s, eta_i = cfg.survival()
    events = source.generate_surviving_pairs(rate, cfg.integration_time_s, eta_s, eta_i, s_pairs)
    sig, idl = franson.route_pairs(cfg.interferometer_pair(phase), events, np.random.default_rng(s_route))
    idl = source.apply_delay(idl, cfg.channel_offset_ps)
    duration = int(round(cfg.integration_time_s * source.PS_PER_S))
    # parasitic light enters before the interferometers, so a blocked arm halves it
    bg_s, bg_i = cfg.background_rates(p)
    bg_s *= open_fraction(cfg.interferometers.mask_signal)
    bg_i *= open_fraction(cfg.interferometers.mask_idler)
    d1, d2 = (
        source.DetectorSpec(1.0, d.dark_count_rate, d.jitter_sigma, d.dead_time) for d in cfg.detector_specs()
    )
    a = source.detect(sig, d1, duration, np.random.default_rng(s_det1), channel=SIGNAL_CHANNEL, background_rate=bg_s)
    b = source.detect(idl, d2, duration, np.random.default_rng(s_det2), channel=IDLER_CHANNEL, background_rate=bg_i)
    a.meta = b.meta = {"phase_rad": phase, "pump_power_mw": p}
    return a, b


def analyze_streams(cfg: ExperimentConfig, a: source.TimeTagStream, b: source.TimeTagStream):
    h = co.build_histogram(a.tags, b.tags, cfg.histogram.bin_width_ps, histogram_range(cfg))
    peaks = co.integrate_peaks(h, peak_centers(cfg), cfg.histogram.halfwidth_ps, cfg.histogram.baseline)
    return h, peaks


def _simulate_point(args) -> PointResult:
    cfg, phase, key = args
    a, b = simulate_streams(cfg, phase, point_seed(cfg.master_seed, key))
    h, peaks = analyze_streams(cfg, a, b)
    return PointResult(phase, peaks, h, (len(a), len(b)))


def _sum_peaks(points: list[PointResult]) -> co.PeakCounts:
    first = points[0].peaks
    return co.PeakCounts(
        sum(p.peaks.c_ls for p in points),
        sum(p.peaks.c_center for p in points),
        sum(p.peaks.c_sl for p in points),
        float(sum(p.peaks.c_accidental for p in points)),
        first.window_halfwidth,
        first.window_bins,
    )


def masked_snr(total: co.PeakCounts, weights) -> tuple[float, float]:
    """Peak-to-accidentals ratio of the open peak(s) of a masked run, with Poisson error."""
    counts = np.array([total.c_ls, total.c_center, total.c_sl], dtype=float)
    open_ = np.asarray(weights) > 0
    peak = counts[open_].sum()
    acc = total.c_accidental * int(open_.sum())
    if acc == 0:
        log.warning("no accidental counts: SNR unbounded")
        return math.inf, math.nan
    value = peak / acc
    sigma = value * math.sqrt(1.0 / max(peak, 1.0) + 1.0 / acc)
    return value, sigma


def estimate_pair_rate(cfg: ExperimentConfig, total: co.PeakCounts, singles: np.ndarray, n_points: int):
    """Back-trace the internal pair rate from accidental-subtracted side peaks.

    Each side peak carries 1/16 of the pairs reaching both monitored ports;
    the detected singles rates give the non-paralyzable live fractions.
    """
    eta_s, eta_i = cfg.survival()
    t = cfg.integration_time_s
    dead = [d.dead_time_ps * 1e-12 for d in cfg.detectors]
    mean_rates = singles.mean(axis=0) / t
    live = [max(1.0 - r * d, 1e-12) for r, d in zip(mean_rates, dead)]
    scale = 16.0 / (2.0 * n_points * t * eta_s * eta_i * live[0] * live[1])
    net = total.c_ls + total.c_sl - 2.0 * total.c_accidental
    var = total.c_ls + total.c_sl + 4.0 * total.c_accidental / max(total.window_bins, 1)
    return float(net * scale), float(math.sqrt(var) * scale)


def _check_regime(cfg: ExperimentConfig) -> list[str]:
    if franson.check_franson_regime(cfg.franson_regime(), cfg.regime.margin):
        return []
    r = cfg.franson_regime()
    msg = (
        f"interferometers outside the Franson regime at margin {cfg.regime.margin:g}: "
        f"tau_c = {r.tau_c:.3g} ps, dT = {r.delta_t:.3g} ps, tau_pump = {r.tau_pump:.3g} ps"
    )
    warnings.warn(msg, RegimeWarning, stacklevel=3)
    return [msg]


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_phase_scan(
    cfg: ExperimentConfig, out_dir=None, *, seed_key: tuple[int, ...] = (), workers: int = 1
) -> PhaseScanResult:
    """Simulate every phase point, integrate peaks and fit the central fringe.

    Masked interferometers give a single-peak coincidence report over one
    point at phase 0 instead of a fringe.
    """
    notes = _check_regime(cfg)
    ip = cfg.interferometer_pair(0.0)
    franson.category_probabilities(ip)  # rejects fully blocked interferometers
    masked = ip.masked
    phases = [0.0] if masked else list(cfg.phase_grid_rad)
    if ring.pair_generation_rate(cfg.ring_spec(), cfg.pump_power_mw) == 0:
        raise EmptyCoincidencesError(
            "no pairs are generated at zero pump power; raise pump_power_mw"
        )
    tasks = [(cfg, ph, (*seed_key, k)) for k, ph in enumerate(phases)]
    points = _map(_simulate_point, tasks, workers)
    total = _sum_peaks(points)
    if total.c_ls + total.c_center + total.c_sl == 0:
        raise EmptyCoincidencesError(
            "no coincidences in any peak window; use a longer integration_time_s or lower losses_db"
        )
    if masked:
        s, s_sig = masked_snr(total, franson.joint_delay_weights(ip))
    else:
        s = co.snr(total)
        try:
            s_sig = co.snr_sigma(total)
        except ValueError:
            s_sig = math.nan
    result = PhaseScanResult(
        config=cfg,
        mode="masked" if masked else "fringe",
        points=points,
        peak_centers_ps=peak_centers(cfg),
        total=total,
        snr=s,
        snr_sigma=s_sig,
        warnings=notes,
    )
    if not masked:
        w = cfg.interferometers.visibility_w
        result.dataset = fitting.FringeDataset(
            np.array(phases),
            np.array([p.peaks.c_center for p in points], dtype=float),
            integration_time=cfg.integration_time_s,
        )
        result.fit = fitting.lm_fit(
            result.dataset,
            weighted=cfg.fit.weighted,
            phase_sigma=math.radians(cfg.fit.phase_sigma_deg),
            w=w,
        )
        result.v_expected = fitting.visibility_from_snr(s, w)
        result.warnings.extend(result.fit.flags)
    if out_dir is not None:
        write_phase_scan(result, out_dir)
    return result


# ---------------------------------------------------------------------------
# power scans


@dataclass
class ReportRow:
    pump_power_mw: float
    integration_time_s: float
    rate_model_hz: float
    rate_hz: float
    rate_sigma_hz: float
    snr: float
    snr_sigma: float
    v_meas: float
    v_meas_sigma: float
    bell_sigmas: float
    v: float
    v_sigma: float
    v_from_snr: float

    def to_dict(self) -> dict:
        return {k: _finite(v) for k, v in self.__dict__.items()}


@dataclass
class RunReport:
    rows: list[ReportRow]
    slope: float | None
    slope_sigma: float | None
    snr_decreasing: bool | None
    provenance: dict
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "loglog_rate_slope": _finite(self.slope) if self.slope is not None else None,
            "loglog_rate_slope_sigma": _finite(self.slope_sigma) if self.slope_sigma is not None else None,
            "snr_strictly_decreasing": self.snr_decreasing,
            "provenance": self.provenance,
            "warnings": list(self.warnings),
        }


def loglog_slope(powers, rates, sigmas) -> tuple[float, float]:
    """Weighted straight-line fit of ln R against ln P."""
    x = np.log(np.asarray(powers, dtype=float))
    r = np.asarray(rates, dtype=float)
    if np.any(r <= 0):
        raise ValueError("rates must be positive for a log-log fit")
    y = np.log(r)
    wts = (r / np.asarray(sigmas, dtype=float)) ** 2
    xm = np.sum(wts * x) / wts.sum()
    sxx = np.sum(wts * (x - xm) ** 2)
    slope = np.sum(wts * (x - xm) * y) / sxx
    return float(slope), float(1.0 / math.sqrt(sxx))


def provenance(cfg: ExperimentConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "tool": "fransonsim",
        "tool_version": __version__,
        "profile": cfg.profile,
        # tuned to the accidentals level rather than derived from a physical model
        "fitted_background_rates_hz_at_1mw": list(cfg.background_rates_hz),
    }


def run_power_scan(cfg: ExperimentConfig, powers=None, out_dir=None, *, workers: int = 1) -> RunReport:
    """One phase scan per pump power, reduced to a per-power table."""
    powers = list(cfg.power_grid_mw if powers is None else powers)
    if not powers:
        raise ValueError("at least one pump power is required")
    rows: list[ReportRow] = []
    notes: list[str] = []
    for j, p in enumerate(powers):
        sub = cfg.with_updates(pump_power_mw=p, integration_time_s=cfg.scan_integration_time(p))
        res = run_phase_scan(sub, seed_key=(j,), workers=workers)
        notes.extend(f"P={p:g} mW: {w}" for w in res.warnings)
        r, sr = res.rate_estimate()
        f = res.fit
        rows.append(
            ReportRow(
                pump_power_mw=p,
                integration_time_s=sub.integration_time_s,
                rate_model_hz=ring.pair_generation_rate(sub.ring_spec(), p),
                rate_hz=r,
                rate_sigma_hz=sr,
                snr=res.snr,
                snr_sigma=res.snr_sigma,
                v_meas=f.v_meas if f else math.nan,
                v_meas_sigma=f.sigma_v if f else math.nan,
                bell_sigmas=f.bell_sigmas if f else math.nan,
                v=f.v_corrected if f else math.nan,
                v_sigma=f.sigma_v_corrected if f else math.nan,
                v_from_snr=res.v_expected,
            )
        )
    slope = slope_sigma = None
    decreasing = None
    if len(rows) >= 2:
        decreasing = all(b.snr < a.snr for a, b in zip(rows, rows[1:]))
    if len(rows) >= 3:
        slope, slope_sigma = loglog_slope(
            [r.pump_power_mw for r in rows], [r.rate_hz for r in rows], [r.rate_sigma_hz for r in rows]
        )
    elif len(rows) == 2:
        notes.append("a log-log slope needs at least 3 powers")
    report = RunReport(rows, slope, slope_sigma, decreasing, provenance(cfg), notes)
    if out_dir is not None:
        write_report(report, out_dir, cfg)
    return report


# ---------------------------------------------------------------------------
# persistence


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def write_run_header(cfg: ExperimentConfig, out: Path) -> None:
    """Config snapshot and provenance: enough to replay the run."""
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", json.loads(canonical_json(cfg.model_dump(mode="json"))))
    _write_json(out / "provenance.json", provenance(cfg))


def write_phase_scan(result: PhaseScanResult, out_dir) -> Path:
    out = Path(out_dir)
    write_run_header(result.config, out)
    _write_csv(
        out / "peaks.csv",
        ["phase_rad", "phase_deg", "c_ls", "c_center", "c_sl", "c_accidental", "singles_signal", "singles_idler"],
        (
            [p.phase, math.degrees(p.phase), p.peaks.c_ls, p.peaks.c_center, p.peaks.c_sl, p.peaks.c_accidental, *p.singles]
            for p in result.points
        ),
    )
    centers = result.points[0].histogram.bin_centers
    columns = np.column_stack([p.histogram.counts for p in result.points])
    _write_csv(
        out / "histograms.csv",
        ["bin_center_ps"] + [f"point_{k:02d}" for k in range(len(result.points))],
        ([c, *map(int, row)] for c, row in zip(centers, columns)),
    )
    if result.dataset is not None:
        _write_csv(
            out / "fringe.csv",
            ["phase_deg", "counts"],
            ([math.degrees(ph), int(c)] for ph, c in zip(result.dataset.phases, result.dataset.counts)),
        )
    _write_json(out / "summary.json", result.summary())
    return out


REPORT_COLUMNS = [
    ("pump_power_mw", "P (mW)", "{:.3g}"),
    ("rate_hz", "R (MHz)", None),
    ("snr", "SNR", None),
    ("v_meas", "V_meas (%)", None),
    ("bell_sigmas", "Bell sigmas", "{:.1f}"),
    ("v", "V (%)", None),
]


def format_report_table(report: dict) -> str:
    """Human-readable table of a report dictionary (as written to report.json)."""

    def pm(value, sigma, scale=1.0, digits=1):
        if value is None:
            return "n/a"
        if sigma is None:
            return f"{value * scale:.{digits}f}"
        return f"{value * scale:.{digits}f} +/- {sigma * scale:.{digits}f}"

    header = ["P (mW)", "R (MHz)", "SNR", "V_meas (%)", "Bell sigmas", "V (%)"]
    lines = []
    for r in report["rows"]:
        lines.append(
            [
                f"{r['pump_power_mw']:.3g}",
                pm(r["rate_hz"], r["rate_sigma_hz"], 1e-6, 2),
                pm(r["snr"], r["snr_sigma"]),
                pm(r["v_meas"], r["v_meas_sigma"], 100.0),
                "n/a" if r["bell_sigmas"] is None else f"{r['bell_sigmas']:.1f}",
                pm(r["v"], r["v_sigma"], 100.0),
            ]
        )
    widths = [max(len(h), *(len(l[i]) for l in lines)) if lines else len(h) for i, h in enumerate(header)]
    fmt = " | ".join("{:>%d}" % w for w in widths)
    text = [fmt.format(*header), "-+-".join("-" * w for w in widths)]
    text += [fmt.format(*l) for l in lines]
    slope = report.get("loglog_rate_slope")
    if slope is not None:
        text.append(f"log-log rate slope: {slope:.3f} +/- {report['loglog_rate_slope_sigma']:.3f}")
    if report.get("snr_strictly_decreasing") is not None:
        text.append(f"SNR strictly decreasing with power: {report['snr_strictly_decreasing']}")
    prov = report.get("provenance", {})
    if prov:
        text.append(f"config {prov.get('config_hash', '')[:16]}  seed {prov.get('master_seed')}  version {prov.get('tool_version')}")
        bg = prov.get("fitted_background_rates_hz_at_1mw")
        if bg is not None:
            text.append(f"background (fitted, Hz at 1 mW): signal {bg[0]:g}, idler {bg[1]:g}")
    return "\n".join(text) + "\n"


def write_report(report: RunReport, out_dir, cfg: ExperimentConfig | None = None) -> Path:
    """Write report.json, report.csv and report.txt (plus the config snapshot)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg is not None:
        write_run_header(cfg, out)
    data = report.to_dict()
    _write_json(out / "report.json", data)
    fields = list(ReportRow.__dataclass_fields__)
    _write_csv(out / "report.csv", fields, ([getattr(r, f) for f in fields] for r in report.rows))
    (out / "report.txt").write_text(format_report_table(data), encoding="utf-8")
    return out
