"""Command-line entry point: ``fransonsim <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime or
statistical failure (no coincidences, fit did not converge, lost fringe lock).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, ring
from . import coincidence as co
from . import experiment as ex
from . import fitting, stabilization
from .config import ConfigError, load_config
from .ftag import FtagFormatError, read_ftag, write_ftag

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

log = logging.getLogger("fransonsim")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config merged over the profile")
    p.add_argument("--profile", choices=("desk", "paper"), help="base parameter set (default: desk)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="output directory (default: .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fransonsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="ring transmission spectrum and source figures")
    _common(p)
    p.add_argument("--start-nm", type=float)
    p.add_argument("--stop-nm", type=float)
    p.add_argument("--points", type=int, default=4001)

    p = sub.add_parser("simulate", help="simulate one phase point and write FTAG streams")
    _common(p)
    p.add_argument("--phase-deg", type=float, default=0.0, help="phase sum setting")

    p = sub.add_parser("histogram", help="coincidence histogram of two FTAG files")
    _common(p)
    p.add_argument("signal", type=Path)
    p.add_argument("idler", type=Path)

    p = sub.add_parser("analyze", help="fit a fringe CSV (phase_deg, counts)")
    _common(p)
    p.add_argument("fringe_csv", type=Path)
    p.add_argument("--unweighted", action="store_true")

    p = sub.add_parser("scan-phase", help="full phase scan with fringe fit")
    _common(p)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("scan-power", help="phase scans over pump powers, tabulated")
    _common(p)
    p.add_argument("--powers", type=float, nargs="+", help="pump powers in mW")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("stabilize", help="closed-loop interferometer stabilization")
    _common(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--open-loop", action="store_true")
    p.add_argument("--estimator", choices=("demod", "lstsq"), default="demod")

    p = sub.add_parser("report", help="render the table of a power-scan or phase-scan directory")
    _common(p)
    p.add_argument("run_dir", type=Path)
    return parser


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    return load_config(args.config, args.profile, **overrides)


def _out(args) -> Path:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def cmd_spectrum(args) -> int:
    cfg = _config(args)
    spec = cfg.ring_spec()
    start = args.start_nm if args.start_nm is not None else spec.center_wavelength - 2.5 * spec.fsr
    stop = args.stop_nm if args.stop_nm is not None else spec.center_wavelength + 2.5 * spec.fsr
    if args.points < 2:
        raise ValueError("--points must be >= 2")
    wl, t = ring.spectrum(spec, start, stop, args.points)
    out = _out(args)
    with (out / "spectrum.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["wavelength_nm", "transmission"])
        wr.writerows([repr(float(a)), repr(float(b))] for a, b in zip(wl, t))
    rate = ring.pair_generation_rate(spec, 1.0)
    bw_nm = ring.linewidth_nm(spec)
    info = {
        "linewidth_hz": ring.linewidth_hz(spec),
        "linewidth_nm": bw_nm,
        "coherence_time_ps": ring.coherence_time(spec),
        "pair_rate_1mw_hz": rate,
        "spectral_brightness_per_nm_mw2_s": ring.spectral_brightness(rate, bw_nm, 1.0),
        "loaded_q": spec.loaded_q,
    }
    _dump(out / "spectrum.json", info)
    print(json.dumps(info, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(args)
    phase = math.radians(args.phase_deg)
    a, b = ex.simulate_streams(cfg, phase, ex.point_seed(cfg.master_seed, (0,)))
    write_ftag(out / "signal.ftag", a)
    write_ftag(out / "idler.ftag", b)
    ex.write_run_header(cfg, out)
    meta = {
        "phase_deg": args.phase_deg,
        "duration_ps": a.duration,
        "signal_clicks": len(a),
        "idler_clicks": len(b),
    }
    _dump(out / "streams.json", meta)
    print(json.dumps(meta, sort_keys=True))
    return EXIT_OK


def cmd_histogram(args) -> int:
    cfg = _config(args)
    a, b = read_ftag(args.signal), read_ftag(args.idler)
    h, peaks = ex.analyze_streams(cfg, a, b)
    out = _out(args)
    with (out / "histogram.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["bin_center_ps", "counts"])
        wr.writerows([repr(float(c)), int(n)] for c, n in zip(h.bin_centers, h.counts))
    s = co.snr(peaks)
    info = {
        "bin_width_ps": h.bin_width,
        "range_ps": [h.range_min, h.range_max],
        "peak_centers_ps": list(ex.peak_centers(cfg)),
        "peaks": peaks.to_dict(),
        "snr": s if math.isfinite(s) else None,
    }
    _dump(out / "histogram.json", info)
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def read_fringe_csv(path: Path) -> fitting.FringeDataset:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"phase_deg", "counts"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns phase_deg, counts")
        rows = [(float(r["phase_deg"]), float(r["counts"])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    ph, c = np.array(rows).T
    return fitting.FringeDataset(np.radians(ph), c)


def cmd_analyze(args) -> int:
    cfg = _config(args)
    data = read_fringe_csv(args.fringe_csv)
    fit = fitting.lm_fit(
        data,
        weighted=not args.unweighted and cfg.fit.weighted,
        phase_sigma=math.radians(cfg.fit.phase_sigma_deg),
        w=cfg.interferometers.visibility_w,
    )
    info = ex._clean(fit.to_dict())
    _dump(_out(args) / "fit.json", info)
    print(
        f"V_meas = {fit.v_meas:.4f} +/- {fit.sigma_v:.4f}  V = {fit.v_corrected:.4f}  "
        f"Bell sigmas = {fit.bell_sigmas:.2f}  chi2/dof = {fit.chi2:.2f}/{fit.dof}"
    )
    return EXIT_OK


def cmd_scan_phase(args) -> int:
    cfg = _config(args)
    res = ex.run_phase_scan(cfg, _out(args), workers=args.workers)
    if res.fit is not None:
        f = res.fit
        print(
            f"V_meas = {f.v_meas:.4f} +/- {f.sigma_v:.4f}  SNR = {res.snr:.1f} +/- {res.snr_sigma:.1f}  "
            f"expected V = {res.v_expected:.4f}  Bell sigmas = {f.bell_sigmas:.1f}"
        )
    else:
        p = res.total
        print(f"masked: C_LS = {p.c_ls}  C_0 = {p.c_center}  C_SL = {p.c_sl}  C_A = {p.c_accidental:.1f}")
    return EXIT_OK


def cmd_scan_power(args) -> int:
    cfg = _config(args)
    out = _out(args)
    ex.run_power_scan(cfg, args.powers, out, workers=args.workers)
    sys.stdout.write((out / "report.txt").read_text())
    return EXIT_OK


def cmd_stabilize(args) -> int:
    cfg = _config(args)
    sc = cfg.stabilization
    steps = args.steps if args.steps is not None else sc.steps
    trace = stabilization.run_closed_loop(
        sc.drift(),
        steps,
        sc.gains(),
        ex.point_seed(cfg.master_seed, (0,)),
        fringe=sc.fringe(),
        piezo=sc.piezo(),
        setpoint_nm=sc.setpoint_nm,
        feedback=not args.open_loop,
        estimator=args.estimator,
    )
    out = _out(args)
    with (out / "stabilization.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "drift_nm", "actuation_nm", "residual_nm", "residual_deg"])
        for k, d, u, r, deg in zip(trace.step, trace.drift_nm, trace.actuation_nm, trace.residual_nm, trace.residual_deg):
            wr.writerow([int(k), repr(float(d)), repr(float(u)), repr(float(r)), repr(float(deg))])
    summary = trace.summary(min(sc.settle_steps, steps - 1))
    summary["feedback"] = not args.open_loop
    _dump(out / "stabilization.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    d = args.run_dir
    if (d / "report.json").exists():
        text = ex.format_report_table(json.loads((d / "report.json").read_text()))
    elif (d / "summary.json").exists():
        s = json.loads((d / "summary.json").read_text())
        rows = [f"{k}: {v}" for k, v in sorted(s.items()) if not isinstance(v, (dict, list))]
        fit = s.get("fit")
        if fit:
            rows += [f"fit.{k}: {fit[k]}" for k in ("A", "theta", "y0", "v_meas", "sigma_v", "bell_sigmas", "chi2", "dof")]
        text = "\n".join(rows) + "\n"
    else:
        raise FileNotFoundError(f"{d} holds neither report.json nor summary.json")
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "histogram": cmd_histogram,
    "analyze": cmd_analyze,
    "scan-phase": cmd_scan_phase,
    "scan-power": cmd_scan_power,
    "stabilize": cmd_stabilize,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", ex.RegimeWarning)
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ex.EmptyCoincidencesError, fitting.FitConvergenceError, stabilization.LowConfidenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FtagFormatError, ValueError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
