"""
Command-line entry point.

Exit codes: 0 success, 2 configuration or input-format error, 3 numerical
failure (fit divergence, degenerate data).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    build_ensemble_config,
    build_field,
    build_grid,
    build_resonator,
    build_schedule,
    config_hash,
    load_config,
)
from .dynamics import read_series_csv, synthesize_resonator_series
from .ensemble import generate_ensemble, load_ensemble, save_ensemble
from .errors import ConfigError, FitError, InvalidInputError
from .presets import PRESETS
from .spectral import (
    TimeSeries,
    fit_noise_model,
    noise_level_at,
    normalize_series,
    welch_psd,
    write_fit_json,
)

log = logging.getLogger("tlsfluct")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _resolve(args) -> dict:
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        over["threads"] = args.threads
    return load_config(args.config, args.preset, over)


def _manifest(out: Path, name: str, cfg: dict | None, timings: dict, summary: dict,
              outputs: list, inputs: list | None = None) -> None:
    m = {
        "tool": "tlsfluct",
        "version": __version__,
        "command": name,
        "config_sha256": config_hash(cfg) if cfg is not None else None,
        "config": cfg,
        "seed": cfg.get("seed") if cfg else None,
        "inputs": inputs or [],
        "outputs": sorted(outputs),
        "timings_s": timings,
        "summary": summary,
    }
    _dump(out / f"manifest_{name}.json", m)


def _generate(cfg: dict, base_dir=None):
    res = build_resonator(cfg)
    ecfg = build_ensemble_config(cfg)
    fmap = build_field(cfg, base_dir)
    return generate_ensemble(ecfg, res, fmap)


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ens = _generate(cfg, Path(args.config).parent if args.config else None)
    t1 = time.perf_counter()
    save_ensemble(ens, out / "ensemble.json")
    summary = ens.summary()
    _manifest(out, "generate", cfg, {"generate": t1 - t0}, summary, ["ensemble.json"])
    print(f"candidates {summary['candidate_count']}, retained {summary['retained_count']}, "
          f"expected loss {summary['expected_gamma0_per_s']:.4g} /s -> {out / 'ensemble.json'}")
    return EXIT_OK


def _simulate(cfg, ens, out: Path):
    grid = build_grid(cfg)
    sched = build_schedule(cfg)
    phys = cfg["physics"]
    t0 = time.perf_counter()
    result = synthesize_resonator_series(ens, sched, grid, seed=cfg["seed"],
                                         resonator=build_resonator(cfg),
                                         threads=cfg["threads"], chunk_size=cfg["chunk_size"],
                                         thermal=phys["thermal_factor"],
                                         shift_sign=phys["shift_sign"])
    t1 = time.perf_counter()
    result.write_csv(out / "timeseries.csv")
    return result, {"simulate": t1 - t0, "write": time.perf_counter() - t1}


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    inputs = []
    if args.ensemble:
        ens = load_ensemble(args.ensemble)
        inputs.append(str(args.ensemble))
    else:
        t0 = time.perf_counter()
        ens = _generate(cfg, Path(args.config).parent if args.config else None)
        timings["generate"] = time.perf_counter() - t0
    result, tt = _simulate(cfg, ens, out)
    timings.update(tt)
    summary = result.summary()
    summary["ensemble"] = result.ensemble_summary
    _manifest(out, "simulate", cfg, timings, summary, ["timeseries.csv"], inputs)
    for s in summary["settings"]:
        print(f"setting {s['setting_id']} {s['label']}: <Gamma_int> = "
              f"{s['gamma_int_mean_per_s']:.4g} /s, std {s['gamma_int_std_per_s']:.3g}")
    return EXIT_OK


def analyze_series(t, period_id, data, analysis: dict, out: Path, plots: bool = True):
    """PSD and noise fit for ``y`` (frequency) and ``z`` (loss) of every setting."""
    f_eval = analysis.get("noise_level_frequency_hz", 1e-5)
    rows = []
    outputs = []
    for sid in sorted(data):
        gamma, f_r = data[sid]
        for obs, values in (("y", f_r), ("z", gamma)):
            if np.ptp(values) == 0:
                raise FitError(f"setting {sid}: {obs} series has zero variance",
                               {"setting_id": sid, "observable": obs, "value": float(values[0])})
            ts = normalize_series(TimeSeries(t, values, period_id))
            psd = welch_psd(ts, analysis.get("segment_length_samples"), analysis.get("overlap", 0.5),
                            analysis.get("window", "boxcar"), analysis.get("detrend"))
            fit = fit_noise_model(psd)
            stem = f"{obs}_setting{sid}"
            psd.write_csv(out / f"psd_{stem}.csv")
            level = noise_level_at(fit, f_eval)
            write_fit_json(fit, out / f"fit_{stem}.json",
                           {"setting_id": sid, "observable": obs, "n_segments": psd.n_segments,
                            "f_min_hz": float(psd.f[0]), "noise_level_frequency_hz": f_eval,
                            "noise_level_per_hz": level})
            outputs += [f"psd_{stem}.csv", f"fit_{stem}.json"]
            if plots:
                from .plotting import plot_psd
                plot_psd(out / f"psd_{stem}.svg", psd, fit, f"S_{obs}, setting {sid}")
                outputs.append(f"psd_{stem}.svg")
            rows.append({"setting_id": sid, "observable": obs, "noise_level_per_hz": level,
                         "h0_per_hz": fit.h0, "h_minus1": fit.h_minus1,
                         "h_minus2_hz": fit.h_minus2, "n_segments": psd.n_segments,
                         "f_min_hz": float(psd.f[0]), "mean": float(np.mean(values)),
                         "std": float(np.std(values))})
    return rows, outputs


def cmd_analyze(args) -> int:
    cfg = _resolve(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    t, pid, data = read_series_csv(args.input)
    rows, outputs = analyze_series(t, pid, data, cfg["analysis"], out, plots=not args.no_plots)
    if not args.no_plots:
        from .plotting import plot_series
        sids = sorted(data)
        plot_series(out / "series_gamma_int.svg", t, [data[s][0] for s in sids],
                    [f"setting {s}" for s in sids], "Gamma_int (1/s)")
        plot_series(out / "series_f_r.svg", t, [data[s][1] for s in sids],
                    [f"setting {s}" for s in sids], "f_r (Hz)")
        outputs += ["series_gamma_int.svg", "series_f_r.svg"]
    _dump(out / "analysis_summary.json", {"rows": rows})
    outputs.append("analysis_summary.json")
    _manifest(out, "analyze", cfg, {"analyze": time.perf_counter() - t0}, {"rows": rows},
              outputs, [str(args.input)])
    for r in rows:
        print(f"setting {r['setting_id']} S_{r['observable']}(f) at {cfg['analysis']['noise_level_frequency_hz']:g} Hz"
              f" = {r['noise_level_per_hz']:.3g} /Hz")
    return EXIT_OK


def cmd_run(args) -> int:
    """generate + simulate + analyze in one go."""
    cfg = _resolve(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    ens = _generate(cfg, Path(args.config).parent if args.config else None)
    timings["generate"] = time.perf_counter() - t0
    save_ensemble(ens, out / "ensemble.json")
    result, tt = _simulate(cfg, ens, out)
    timings.update(tt)
    t1 = time.perf_counter()
    rows, outputs = analyze_series(result.t, result.period_id,
                                   {i: (result.gamma_int[i], result.f_r[i])
                                    for i in range(len(result.settings))},
                                   cfg["analysis"], out, plots=not args.no_plots)
    timings["analyze"] = time.perf_counter() - t1
    _dump(out / "analysis_summary.json", {"rows": rows})
    summary = result.summary()
    summary["ensemble"] = result.ensemble_summary
    summary["analysis"] = rows
    _manifest(out, "run", cfg, timings, summary,
              outputs + ["ensemble.json", "timeseries.csv", "analysis_summary.json"])
    for r in rows:
        print(f"setting {r['setting_id']} S_{r['observable']} = {r['noise_level_per_hz']:.3g} /Hz")
    return EXIT_OK


def cmd_fit_s21(args) -> int:
    from .resonfit import fit_s21, rates_from_q, read_trace_csv, s21_model
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    trace = read_trace_csv(args.input)
    fit = fit_s21(trace)
    d = fit.to_dict()
    gi, ge = rates_from_q(fit.f_r, fit.q_int, fit.q_ext)
    d["rates_per_s"] = {"gamma_int": gi, "gamma_ext": ge}
    _dump(out / "s21_fit.json", d)
    outputs = ["s21_fit.json"]
    if not args.no_plots:
        from .plotting import plot_s21
        plot_s21(out / "s21_fit.svg", trace, s21_model(fit, trace.f))
        outputs.append("s21_fit.svg")
    _manifest(out, "fit-s21", None, {"fit": time.perf_counter() - t0}, d, outputs,
              [str(args.input)])
    print(f"f_r = {fit.f_r:.9g} Hz, Q_int = {fit.q_int:.6g}, Q_ext = {fit.q_ext:.6g}, "
          f"phi = {fit.phi:.4g} rad")
    return EXIT_OK


def cmd_fit_scurve(args) -> int:
    from .resonfit import fit_scurve, read_scurve_csv, scurve_model
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    n, q, err = read_scurve_csv(args.input)
    fit = fit_scurve(n, q, err)
    d = fit.to_dict()
    _dump(out / "scurve_fit.json", d)
    outputs = ["scurve_fit.json"]
    if not args.no_plots:
        from .plotting import plot_scurve
        pos = n[n > 0]
        nn = np.geomspace(pos.min() if pos.size else 1e-3, max(n.max(), 1e-2), 200)
        plot_scurve(out / "scurve_fit.svg", n, q, nn, 1.0 / scurve_model(fit, nn))
        outputs.append("scurve_fit.svg")
    _manifest(out, "fit-scurve", None, {"fit": time.perf_counter() - t0}, d, outputs,
              [str(args.input)])
    print(f"F tan d0 = {fit.f_tan_delta0:.4g}, n_c = {fit.n_c:.4g}, alpha = {fit.alpha:.4g}, "
          f"Q_bg = {fit.q_int_bg:.6g}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name, p in PRESETS.items():
        print(f"{name:14s} {p['description']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tlsfluct", description="TLS-induced resonator fluctuation "
                                 "simulator and analysis pipeline.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, threads=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--preset", choices=sorted(PRESETS), help="scenario preset (default r1)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out-dir", default=".", help="output directory")
        if threads:
            p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")

    p = sub.add_parser("generate", help="sample the TLS ensemble")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="synthesize loss and frequency time series")
    common(p)
    p.add_argument("--ensemble", help="ensemble JSON from 'generate' (default: generate afresh)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="PSDs and noise fits of a time-series CSV")
    common(p)
    p.add_argument("--input", required=True, help="time-series CSV")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("run", help="generate, simulate and analyze")
    common(p)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run)

    for name, fn, what in (("fit-s21", cmd_fit_s21, "hanger S21 trace CSV"),
                           ("fit-scurve", cmd_fit_scurve, "S-curve CSV")):
        p = sub.add_parser(name, help=f"fit a {what}")
        p.add_argument("--input", required=True, help=what)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--no-plots", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("presets", help="list scenario presets")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
