"""
Command-line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 provider error,
3 calibration did not meet the convergence criterion.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, FitError, ProviderError
from .fitting import fit_triplet, fit_zero_crossing, triplet_loss
from .physics import BiasField, Sweep
from .pipeline import measure_sensitivity
from .presets import SENSING_PRESETS, sensing_center, sensitivity_simulator
from .providers import RemoteProvider, SimulatorProvider, SweepRequest, provider_from_spec
from .pso import calibrate, default_request
from .sensitivity import NoiseSpectrum

logger = logging.getLogger("nvcalib")

EXIT_OK, EXIT_CONFIG, EXIT_PROVIDER, EXIT_NOT_CONVERGED = 0, 1, 2, 3


def _metadata() -> dict:
    return {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "version": __version__}


def _write_json(path: Path, payload: dict) -> None:
    payload = {**payload, "metadata": _metadata()}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", newline="\n")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _parse_field_mt(text: str) -> BiasField:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise ConfigError(f"--field must be three comma-separated numbers in mT, got {text!r}",
                          "field") from None
    if len(parts) != 3:
        raise ConfigError("--field needs exactly three components (mT)", "field")
    try:
        return BiasField.from_mt(*parts)
    except ValueError as exc:
        raise ConfigError(f"--field: {exc}", "field") from None


def make_provider(cfg: RunConfig, simulator=None):
    """Provider named by the config; ``simulator`` builds the in-process one."""
    def default_sim():
        c = cfg.build_constants()
        return SimulatorProvider(model=cfg.model.build(c), axes=cfg.model.build_axes(),
                                 noise=cfg.noise.build(), seed=cfg.seed)
    try:
        return provider_from_spec(cfg.provider, simulator or default_sim,
                                  timeout=cfg.remote.timeout,
                                  settle_time=cfg.remote.settle_time)
    except ValueError as exc:
        raise ConfigError(str(exc), "provider") from None


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sweep(cfg: RunConfig, args) -> int:
    b = _parse_field_mt(args.field) if args.field else BiasField(tuple(cfg.sweep.field))
    mode = args.mode or cfg.sweep.mode
    try:
        req = SweepRequest(cfg.sweep.f_start, cfg.sweep.f_stop, cfg.sweep.n_points, b, mode,
                           cfg.sweep.mod_depth, cfg.sweep.three_tone or args.three_tone)
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}", "sweep") from None
    provider = make_provider(cfg)
    provider.set_field(b)
    sweep = provider.acquire(req)
    path = Path(args.output) if args.output else _out_dir(cfg) / "sweep.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    sweep.save(path)
    i = int(np.argmin(sweep.values))
    print(f"wrote {len(sweep)} points to {path}")
    print(f"min {sweep.values[i]:.6g} V at {sweep.freqs[i] / 1e6:.3f} MHz")
    return EXIT_OK


def cmd_fit(cfg: RunConfig, args) -> int:
    try:
        sweep = Sweep.load(args.sweep)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read sweep {args.sweep}: {exc}", "sweep") from None
    if args.zero_crossing is not None:
        fit = fit_zero_crossing(sweep, args.zero_crossing, args.half_window)
    else:
        fit = fit_triplet(sweep, residual_tolerance=args.residual_tolerance)
    print(fit.to_json())
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    pso_cfg = cfg.calibration.build_pso(cfg.seed)
    if args.max_iterations is not None:
        pso_cfg = type(pso_cfg).from_dict({**pso_cfg.to_dict(), "max_iterations": args.max_iterations})
    req = default_request(pso_cfg, cfg.calibration.window_half_width,
                          cfg.calibration.window_points, cfg.build_constants())
    loss = partial(triplet_loss, residual_tolerance=cfg.calibration.residual_tolerance,
                   multi_start=False)
    result = calibrate(pso_cfg, make_provider(cfg), loss, req)
    out = _out_dir(cfg)
    _write_json(out / "calibration.json", result.to_dict())
    _write_text(out / "history.csv", result.history_csv())
    by, bz = result.best_compensation
    lw = f"{1e-3 / result.best_loss:.1f} kHz" if result.best_loss > 0 else "n/a"
    print(f"best field ({result.best_field.b[0] * 1e3:.4f}, {by * 1e3:.4f}, {bz * 1e3:.4f}) mT, "
          f"central linewidth {lw}, {result.n_evaluations} sweeps, converged={result.converged}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_sensitivity(cfg: RunConfig, args) -> int:
    s = cfg.sensitivity
    modes = ["separated", "overlapped"] if (args.mode or s.mode) == "both" else [args.mode or s.mode]
    out = _out_dir(cfg)
    reports = {}
    for mode in modes:
        preset = SENSING_PRESETS[mode]
        sim = sensitivity_simulator(mode, cfg.seed)
        provider = make_provider(cfg, simulator=lambda sim=sim: sim)
        center = sensing_center(preset.model(), preset.field, sim.axes, preset.target_hz)
        run = measure_sensitivity(provider, preset.field, center, preset.linewidth, mode,
                                  fs=s.fs, duration=s.duration, band=tuple(s.band),
                                  n_records=s.n_records, sweep_half_span=s.sweep_half_span,
                                  sweep_points=s.sweep_points,
                                  off_resonance_offset=s.off_resonance_offset,
                                  band_method=s.band_method)
        if isinstance(provider, RemoteProvider):
            provider.close()
        reports[mode] = run.report
        _write_json(out / f"sensitivity_{mode}.json", run.report.to_dict())
        _write_text(out / f"noise_{mode}.csv", run.sensitive_spectrum.to_csv())
        _write_text(out / f"noise_{mode}_insensitive.csv", run.insensitive_spectrum.to_csv())
        r = run.report
        print(f"{mode}: slope {r.slope_v_per_hz * 1e6:.4f} uV/Hz, response "
              f"{r.response_v_per_t * 1e-3:.3f} uV/nT, noise {r.voltage_noise_density * 1e6:.3f} "
              f"uV/rtHz, sensitivity {r.field_sensitivity * 1e12:.1f} pT/rtHz")
    if len(reports) == 2:
        ratio = reports["separated"].field_sensitivity / reports["overlapped"].field_sensitivity
        print(f"enhancement {ratio:.3f}")
    return EXIT_OK


def summarize(out: Path) -> dict:
    """Collect the headline numbers from artifacts found in ``out``."""
    summary: dict = {}
    cal = out / "calibration.json"
    if cal.exists():
        d = json.loads(cal.read_text())
        summary["calibration"] = {k: d[k] for k in ("best_field_t", "best_linewidth_hz",
                                                    "converged", "iterations", "n_evaluations")}
        summary["calibration"]["g_best_curve"] = [h["g_best_f"] for h in d["history"]]
    sens = {}
    for mode in ("separated", "overlapped"):
        p = out / f"sensitivity_{mode}.json"
        if p.exists():
            d = json.loads(p.read_text())
            sens[mode] = {k: d[k] for k in ("slope_v_per_hz", "response_v_per_t",
                                            "voltage_noise_density", "field_sensitivity",
                                            "electronic_floor_field")}
    if sens:
        summary["sensitivity"] = sens
    if len(sens) == 2:
        summary["enhancement"] = (sens["separated"]["field_sensitivity"]
                                  / sens["overlapped"]["field_sensitivity"])
    return summary


def _plot(out: Path, summary: dict) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    plt.rcParams["svg.hashsalt"] = "nvcalib"
    plt.rcParams["svg.fonttype"] = "none"
    meta = {"Date": None}
    if "calibration" in summary:
        curve = np.array(summary["calibration"]["g_best_curve"], dtype=float)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        with np.errstate(divide="ignore"):
            lw = np.where(curve > 0, 1e-3 / curve, np.nan)
        ax.plot(np.arange(1, len(lw) + 1), lw, "o-")
        ax.set_xlabel("iteration")
        ax.set_ylabel("best central linewidth (kHz)")
        fig.tight_layout()
        path = out / "convergence.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        written.append(path)
    spectra = [(m, out / f"noise_{m}.csv") for m in ("separated", "overlapped")]
    spectra = [(m, p) for m, p in spectra if p.exists() and "sensitivity" in summary
               and m in summary["sensitivity"]]
    if spectra:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for mode, p in spectra:
            spec = NoiseSpectrum.from_csv(p.read_text(), fs=np.inf)
            resp = summary["sensitivity"][mode]["response_v_per_t"]
            sel = (spec.freqs >= 1.0) & (spec.freqs <= 200.0)
            ax.semilogy(spec.freqs[sel], spec.asd[sel] / resp * 1e12, label=mode, lw=0.8)
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel("field noise (pT/rtHz)")
        ax.legend()
        fig.tight_layout()
        path = out / "noise.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        written.append(path)
    return written


def cmd_report(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    if not out.is_dir():
        raise ConfigError(f"output directory {out} does not exist", "output_dir")
    summary = summarize(out)
    _write_json(out / "report.json", summary)
    printable = {k: v for k, v in summary.items() if k != "calibration"}
    if "calibration" in summary:
        printable["calibration"] = {k: v for k, v in summary["calibration"].items()
                                    if k != "g_best_curve"}
    print(json.dumps(printable, indent=2, sort_keys=True))
    if args.svg:
        for p in _plot(out, summary):
            print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvcalib", description=(
        "Simulate NV-ensemble ODMR, find the transition-overlapping bias field by "
        "particle swarm search and evaluate magnetic sensitivity."))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="random seed (overrides config and NVCALIB_SEED)")
    parser.add_argument("--provider", help="simulator or remote:host:port")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="acquire one sweep and write it as CSV")
    p.add_argument("--field", help="bias field bx,by,bz in mT")
    p.add_argument("--mode", choices=("cw", "lockin"))
    p.add_argument("--three-tone", action="store_true", help="drive all three hyperfine lines")
    p.add_argument("--output", help="CSV path (default <out>/sweep.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit a sweep CSV and print JSON")
    p.add_argument("sweep", help="sweep CSV")
    p.add_argument("--zero-crossing", type=float, metavar="HZ",
                   help="fit a zero-crossing slope near this frequency instead of a triplet")
    p.add_argument("--half-window", type=float, default=100e3, metavar="HZ")
    p.add_argument("--residual-tolerance", type=float, default=0.10)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="run the swarm search for the overlap field")
    p.add_argument("--max-iterations", type=int)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sensitivity", help="measure slope, noise and sensitivity")
    p.add_argument("--mode", choices=("separated", "overlapped", "both"))
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("report", help="summarize artifacts in the output directory")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.provider:
            cfg.provider = args.provider
        if args.out:
            cfg.output_dir = args.out
        cfg.validate()
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
